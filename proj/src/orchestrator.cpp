#include "safl/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "safl/estimator.hpp"

namespace safl {

namespace {

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

}  // namespace

std::size_t ExperimentConfig::malicious_count() const noexcept {
    return static_cast<std::size_t>(std::floor(malicious_fraction * static_cast<double>(n_clients) + 1e-9));
}

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& key, const std::string& why) { throw Error(key + ": " + why); };
    if (n_clients < 1) fail("n_clients", "must be >= 1");
    if (!(malicious_fraction >= 0.0 && malicious_fraction <= kMaxMaliciousFraction))
        fail("malicious_fraction", "must lie in [0, 0.45]");
    if (rounds < 1) fail("rounds", "must be >= 1");
    if (eval_interval < 1) fail("eval_interval", "must be >= 1");
    if (train_samples < 1) fail("train_samples", "must be >= 1");
    if (test_samples < 1) fail("test_samples", "must be >= 1");
    if (features < 1) fail("features", "must be >= 1");
    if (!(noise_std >= 0.0)) fail("noise_std", "must be >= 0");
    if (!(scaling_factor >= 0.0)) fail("scaling_factor", "must be >= 0");
    if (task == TaskKind::classification) {
        if (classes < 2) fail("classes", "must be >= 2");
        if (features < classes) fail("features", "must be >= classes");
        if (n_clients < classes) fail("n_clients", "fewer clients than groups");
        if (!(noniid_x >= 1.0 / static_cast<double>(classes) - 1e-12 && noniid_x <= 1.0))
            fail("noniid_x", "must lie in [1/classes, 1]");
        if (!(separation >= 0.0)) fail("separation", "must be >= 0");
        if (is_targeted(attack)) {
            try {
                trigger.validate(features);
            } catch (const Error& e) {
                fail("trigger", e.what());
            }
            if (trigger.target_label < 0 || static_cast<std::size_t>(trigger.target_label) >= classes)
                fail("trigger.target", "must be a valid class");
        }
    } else if (attack == AttackKind::labelflip || attack == AttackKind::scaling) {
        fail("attack", "data-poisoning attacks need the classification task");
    }
    try {
        defense.secureafl.validate();
    } catch (const Error& e) {
        fail("secureafl", e.what());
    }
    if (defense.basgd_buckets < 1) fail("basgd_buckets", "must be >= 1");
}

const MetricsRecord& MetricsLog::final() const {
    if (records.empty()) throw Error("missing traces: empty metrics log");
    return records.back();
}

std::vector<std::string> MetricsLog::columns() const {
    std::vector<std::string> cols;
    auto any = [&](auto member) {
        return std::any_of(records.begin(), records.end(), [&](const MetricsRecord& r) { return (r.*member).has_value(); });
    };
    if (any(&MetricsRecord::accepted)) cols.push_back("accepted");
    if (any(&MetricsRecord::asr)) cols.push_back("asr");
    if (any(&MetricsRecord::grad_norm_sq)) cols.push_back("grad_norm_sq");
    if (any(&MetricsRecord::lambda)) cols.push_back("lambda");
    cols.push_back("max_staleness");
    if (any(&MetricsRecord::rel_est_error)) cols.push_back("rel_est_error");
    if (any(&MetricsRecord::rmse)) cols.push_back("rmse");
    if (any(&MetricsRecord::ter)) cols.push_back("ter");
    if (any(&MetricsRecord::track_err)) cols.push_back("track_err");
    return cols;
}

Round sample_stale_base(Round t, std::size_t tau_max, RngStream& rng) {
    const std::size_t reach = std::min<std::size_t>(tau_max, t);
    return t - rng.uniform_index(0, reach);
}

ParamVector local_step(const ClientState& c, const Model& at_base, std::size_t batch_size, RngStream& rng) {
    if (c.shard.empty()) throw Error("client " + std::to_string(c.id) + " has an empty shard");
    const std::size_t m = c.shard.size();
    if (batch_size == 0 || batch_size >= m) return gradient(at_base, c.shard.samples);

    // Partial Fisher-Yates draw of batch_size distinct indices.
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<Sample> batch;
    batch.reserve(batch_size);
    for (std::size_t k = 0; k < batch_size; ++k) {
        std::swap(idx[k], idx[rng.uniform_index(k, m - 1)]);
        batch.push_back(c.shard.samples[idx[k]]);
    }
    return gradient(at_base, batch);
}

struct Simulation::Window {
    double lambda_sum = 0.0;
    std::size_t lambda_n = 0;
    std::size_t decisions = 0;
    std::size_t accepted = 0;
    double grad_sum = 0.0;
    double track_sum = 0.0;
    std::size_t probe_n = 0;
    double rel_sum = 0.0;
    std::size_t rel_n = 0;
    std::size_t max_staleness = 0;
};

Simulation::Simulation(ExperimentConfig cfg)
    : cfg_(std::move(cfg)),
      hist_(cfg_.n_clients, cfg_.defense.secureafl.epsilon, cfg_.defense.secureafl.anchoring),
      schedule_rng_(0),
      stale_rng_(0),
      attack_rng_(0),
      window_(std::make_unique<Window>()) {
    cfg_.validate();
    const RngStream master(cfg_.seed);
    RngStream data_rng = master.split(1);
    RngStream part_rng = master.split(2);
    RngStream pick_rng = master.split(3);
    schedule_rng_ = master.split(4);
    stale_rng_ = master.split(5);
    attack_rng_ = master.split(6);

    const std::size_t total = cfg_.train_samples + cfg_.test_samples;
    Dataset all = cfg_.task == TaskKind::classification
                      ? gen_classification(cfg_.classes, cfg_.features, total, cfg_.separation, data_rng)
                      : gen_regression(cfg_.features, total, cfg_.noise_std, data_rng);
    Dataset train = all.empty_like();
    test_ = all.empty_like();
    train.samples.assign(all.samples.begin(), all.samples.begin() + static_cast<std::ptrdiff_t>(cfg_.train_samples));
    test_.samples.assign(all.samples.begin() + static_cast<std::ptrdiff_t>(cfg_.train_samples), all.samples.end());

    auto shards = cfg_.task == TaskKind::classification ? partition_noniid(train, cfg_.n_clients, cfg_.noniid_x, part_rng)
                                                        : partition_iid(train, cfg_.n_clients, part_rng);

    std::vector<ClientId> order(cfg_.n_clients);
    std::iota(order.begin(), order.end(), ClientId{0});
    std::shuffle(order.begin(), order.end(), pick_rng.engine());
    std::vector<bool> malicious(cfg_.n_clients, false);
    for (std::size_t k = 0; k < cfg_.malicious_count(); ++k) malicious[order[k]] = true;

    clients_.reserve(cfg_.n_clients);
    for (ClientId c = 0; c < cfg_.n_clients; ++c) {
        ClientState st{c, std::move(shards[c]), malicious[c], master.split(1000 + c)};
        if (st.shard.empty()) throw Error("client " + std::to_string(c) + " has an empty shard");
        if (st.malicious && cfg_.attack == AttackKind::labelflip) st.shard = labelflip_poison(st.shard);
        if (st.malicious && cfg_.attack == AttackKind::scaling) st.shard = backdoor_poison(st.shard, cfg_.trigger);
        clients_.push_back(std::move(st));
    }

    model_ = Model::for_dataset(train);
    defense_ = make_defense(cfg_.defense);
    hist_.globals.record(0, model_.params);
    log_.tau_max = cfg_.tau_max;
    started_ = now_seconds();
}

Simulation::Simulation(const Simulation& o)
    : cfg_(o.cfg_),
      model_(o.model_),
      test_(o.test_),
      clients_(o.clients_),
      hist_(o.hist_),
      defense_(o.defense_->clone()),
      schedule_rng_(o.schedule_rng_),
      stale_rng_(o.stale_rng_),
      attack_rng_(o.attack_rng_),
      t_(o.t_),
      log_(o.log_),
      window_(std::make_unique<Window>(*o.window_)),
      staleness_(o.staleness_),
      schedule_(o.schedule_),
      started_(o.started_) {}

Simulation& Simulation::operator=(const Simulation& o) {
    if (this != &o) *this = Simulation(o);
    return *this;
}

Simulation::Simulation(Simulation&&) noexcept = default;
Simulation& Simulation::operator=(Simulation&&) noexcept = default;
Simulation::~Simulation() = default;

std::vector<ClientId> Simulation::benign_ids() const {
    std::vector<ClientId> ids;
    for (const auto& c : clients_)
        if (!c.malicious) ids.push_back(c.id);
    return ids;
}

ParamVector Simulation::honest_update(ClientId i, Round base_round, RngStream& rng) const {
    return local_step(clients_.at(i), model_.with_params(hist_.globals.at(base_round)), cfg_.batch_size, rng);
}

ParamVector Simulation::upload(ClientId i, Round base_round) {
    ClientState& c = clients_.at(i);
    if (!c.malicious) return honest_update(i, base_round, c.rng);

    switch (cfg_.attack) {
        case AttackKind::none:
        case AttackKind::labelflip:
            return honest_update(i, base_round, c.rng);
        case AttackKind::signflip:
            return signflip(honest_update(i, base_round, c.rng));
        case AttackKind::scaling: {
            const double factor = cfg_.scaling_factor > 0.0 ? cfg_.scaling_factor : static_cast<double>(cfg_.n_clients);
            return scaling_attack(honest_update(i, base_round, c.rng), factor);
        }
        case AttackKind::gaussian:
            return gaussian_fabricate(model_.dim(), c.rng);
        case AttackKind::minmax:
        case AttackKind::adaptive: {
            AttackContext ctx;
            ctx.attacker = i;
            ctx.base_round = base_round;
            ctx.global_w = hist_.globals.at(base_round);
            for (const auto& other : clients_) {
                if (other.malicious)
                    ctx.malicious_ids.push_back(other.id);
                else
                    ctx.benign_updates.push_back(honest_update(other.id, base_round, attack_rng_));
            }
            if (ctx.benign_updates.size() < 2) return honest_update(i, base_round, c.rng);
            if (cfg_.attack == AttackKind::minmax) return minmax_attack(ctx);
            ctx.defense_view = defense_->filters() ? &hist_ : nullptr;
            return adaptive_attack(ctx, cfg_.defense.secureafl);
        }
    }
    throw Error("unhandled attack");
}

ParamVector Simulation::benign_gradient(const ParamVector& w) const {
    const Model m = model_.with_params(w);
    ParamVector sum(m.dim());
    std::size_t count = 0;
    for (const auto& c : clients_) {
        if (c.malicious) continue;
        sum += gradient(m, c.shard.samples);
        ++count;
    }
    if (count == 0) return sum;
    return (1.0 / static_cast<double>(count)) * sum;
}

RoundDecision Simulation::process(ClientId i, const ParamVector& g, Round base_round) {
    if (base_round > t_) throw Error("base round lies in the future");
    RoundDecision d = defense_->on_update(i, g, base_round, t_, hist_);

    const ParamVector& w_t = hist_.globals.at(t_);
    ParamVector w_next = w_t;
    if (d.apply) w_next.axpy(-cfg_.eta(), d.aggregate);
    if (!w_next.all_finite()) throw Error("global model diverged at round " + std::to_string(t_));

    Window& win = *window_;
    const Round staleness = t_ - base_round;
    win.max_staleness = std::max(win.max_staleness, staleness);
    staleness_.push_back(staleness);
    schedule_.push_back(i);
    if (d.lambda) {
        ++win.decisions;
        if (d.accepted) ++win.accepted;
        if (std::isfinite(*d.lambda)) {
            win.lambda_sum += *d.lambda;
            ++win.lambda_n;
        }
    }

    if (cfg_.probes) {
        const Model m = model_.with_params(w_t);
        ParamVector grad_h(m.dim());
        std::vector<std::optional<ParamVector>> local(clients_.size());
        std::size_t benign = 0;
        for (const auto& c : clients_) {
            if (c.malicious) continue;
            local[c.id] = gradient(m, c.shard.samples);
            grad_h += *local[c.id];
            ++benign;
        }
        if (benign > 0) grad_h *= 1.0 / static_cast<double>(benign);
        const ParamVector applied = d.apply ? d.aggregate : ParamVector(m.dim());
        const double gn = l2_norm(grad_h);
        const double te = l2_norm(applied - grad_h);
        win.grad_sum += gn * gn;
        win.track_sum += te * te;
        ++win.probe_n;
        for (const auto& [k, est] : d.estimates) {
            if (!local[k]) continue;
            if (l2_norm(*local[k]) == 0.0) continue;
            win.rel_sum += relative_estimation_error(est, *local[k]);
            ++win.rel_n;
        }
    }

    hist_.globals.record(t_ + 1, std::move(w_next));
    model_.params = hist_.globals.at(t_ + 1);
    ++t_;
    if (t_ % cfg_.eval_interval == 0 || t_ == cfg_.rounds) evaluate(t_);
    return d;
}

void Simulation::evaluate(Round round_after) {
    MetricsRecord r;
    r.round = round_after;
    if (cfg_.task == TaskKind::classification) {
        r.ter = test_error_rate(model_, test_);
        if (is_targeted(cfg_.attack)) r.asr = attack_success_rate(model_, test_, cfg_.trigger);
    } else {
        r.rmse = rmse(model_, test_);
    }
    const Window& w = *window_;
    if (w.lambda_n > 0) r.lambda = w.lambda_sum / static_cast<double>(w.lambda_n);
    if (w.decisions > 0) r.accepted = static_cast<double>(w.accepted) / static_cast<double>(w.decisions);
    if (w.probe_n > 0) {
        r.grad_norm_sq = w.grad_sum / static_cast<double>(w.probe_n);
        r.track_err = w.track_sum / static_cast<double>(w.probe_n);
    }
    if (w.rel_n > 0) r.rel_est_error = w.rel_sum / static_cast<double>(w.rel_n);
    r.max_staleness = w.max_staleness;
    r.wall_clock = now_seconds() - started_;
    log_.records.push_back(r);
    *window_ = Window{};
}

void Simulation::step() {
    const ClientId i = schedule_rng_.uniform_index(0, cfg_.n_clients - 1);
    const Round base = sample_stale_base(t_, cfg_.tau_max, stale_rng_);
    const ParamVector g = upload(i, base);
    process(i, g, base);
}

RoundDecision Simulation::inject(ClientId i, const ParamVector& g, Round base_round) {
    if (i >= cfg_.n_clients) throw Error("unknown client " + std::to_string(i));
    return process(i, g, base_round);
}

MetricsLog Simulation::run() {
    while (t_ < cfg_.rounds) step();
    return log_;
}

MetricsLog run_experiment(const ExperimentConfig& cfg) { return Simulation(cfg).run(); }

namespace {

double mean_of(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

}  // namespace

ProbeReport theory_probe(const MetricsLog& log, std::size_t warmup_rounds) {
    if (log.records.empty()) throw Error("missing traces");
    ProbeReport rep;
    rep.tau_max = log.tau_max;
    std::vector<double> rel_after;
    for (const auto& r : log.records) {
        rep.max_staleness = std::max(rep.max_staleness, r.max_staleness);
        if (r.grad_norm_sq) rep.grad_norm_sq.push_back(*r.grad_norm_sq);
        if (r.track_err) rep.track_err.push_back(*r.track_err);
        if (r.rel_est_error) {
            rep.rel_est_error.push_back(*r.rel_est_error);
            // A record summarizes the window ending at r.round.
            if (r.round > warmup_rounds) rel_after.push_back(*r.rel_est_error);
        }
    }
    if (rep.grad_norm_sq.empty() || rep.track_err.empty()) throw Error("missing traces: run without probes");
    rep.staleness_within_bound = rep.max_staleness <= rep.tau_max;

    rep.tracking_floor = 4.0 * mean_of(rep.track_err);
    const std::size_t nw = rep.grad_norm_sq.size();
    const std::size_t quarter = std::max<std::size_t>(1, nw / 4);
    rep.plateau_grad_norm_sq = mean_of(std::span(rep.grad_norm_sq).last(quarter));
    rep.plateau_below_floor = rep.plateau_grad_norm_sq <= 10.0 * rep.tracking_floor;
    rep.gradient_decreased = rep.grad_norm_sq.back() < rep.grad_norm_sq.front();

    const bool finite = std::all_of(rep.track_err.begin(), rep.track_err.end(), [](double x) { return std::isfinite(x); });
    const std::size_t half = std::max<std::size_t>(1, rep.track_err.size() / 2);
    const double early = *std::max_element(rep.track_err.begin(), rep.track_err.begin() + static_cast<std::ptrdiff_t>(half));
    const double late = *std::max_element(rep.track_err.begin() + static_cast<std::ptrdiff_t>(half - 1), rep.track_err.end());
    rep.tracking_bounded = finite && late <= 10.0 * early;

    rep.rel_est_non_increasing = rel_after.size() >= 2;
    for (std::size_t k = 1; k < rel_after.size(); ++k)
        if (rel_after[k] > rel_after[k - 1]) rep.rel_est_non_increasing = false;
    return rep;
}

}  // namespace safl
