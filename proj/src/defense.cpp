#include "safl/defense.hpp"

#include <cmath>
#include <limits>

#include "safl/estimator.hpp"

namespace safl {

void SecureAflConfig::validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw Error("alpha must lie in (0, 1]");
    if (epsilon < 1) throw Error("epsilon must be >= 1");
    if (!(clip_threshold > 0.0)) throw Error("clip_threshold must be > 0");
    if (!(eta > 0.0)) throw Error("eta must be > 0");
    if (!(curvature_bound >= 0.0)) throw Error("curvature_bound must be >= 0");
}

ParamVector clip_l2(const ParamVector& g, double G) {
    if (!(G > 0.0)) throw Error("clip_l2: threshold must be > 0");
    const double norm = l2_norm(g);
    if (norm <= G) return g;
    return (G / norm) * g;
}

double lipschitz_factor(const ParamVector& g_new, const ParamVector& g_old, const ParamVector& w_new,
                        const ParamVector& w_old) {
    if (g_new.size() != g_old.size() || w_new.size() != w_old.size() || g_new.size() != w_new.size())
        throw Error("lipschitz_factor: length mismatch");
    const double num = l2_norm(g_new - g_old);
    const double den = l2_norm(w_new - w_old);
    if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return num / den;
}

namespace {

// Zero steps and pairs violating the curvature condition dg.dw > 0 would make
// the compact system indefinite.
bool pair_is_informative(const ParamVector& dw, const ParamVector& dg) {
    return l2_norm(dw) > 0.0 && dot(dg, dw) > 0.0;
}

// Filter step shared by SecureAFL and the Kardam baseline: computes the factor
// against the client's previous real update and the percentile threshold of Q.
void lipschitz_filter(RoundDecision& d, const ClientRecord& rec, const ParamVector& g, Round base_round,
                      HistoryStore& hist, double alpha, bool append_only_on_accept) {
    const double lambda = lipschitz_factor(g, rec.last_update, hist.globals.at(base_round),
                                           hist.globals.at(rec.last_base_round));
    d.lambda = lambda;
    // +inf never enters Q; it is rejected outright.
    const bool finite = std::isfinite(lambda);
    if (finite && !append_only_on_accept) hist.lipschitz.append(lambda);
    if (!hist.lipschitz.empty()) d.threshold = percentile(hist.lipschitz.values(), alpha);
    if (!finite) {
        d.accepted = false;
    } else if (d.threshold) {
        d.accepted = lambda <= *d.threshold;
    } else {
        // Only reachable with append_only_on_accept and an empty log.
        d.accepted = true;
    }
    if (finite && append_only_on_accept && d.accepted) {
        hist.lipschitz.append(lambda);
        d.threshold = percentile(hist.lipschitz.values(), alpha);
    }
}

}  // namespace

RoundDecision secureafl_round(ClientId i, const ParamVector& g, Round base_round, Round t, HistoryStore& hist,
                              const SecureAflConfig& cfg) {
    cfg.validate();
    require_finite(g, "received update is not finite");
    const ParamVector& w_base = hist.globals.at(base_round);
    if (g.size() != w_base.size()) throw Error("received update has the wrong dimension");
    if (base_round > t) throw Error("base round lies in the future");

    ClientRecord& rec = hist.client(i);
    RoundDecision d;
    d.first_contact = !rec.ever_seen || t == 0;

    ParamVector received = g;
    if (d.first_contact) {
        received = clip_l2(g, cfg.clip_threshold);
        d.accepted = true;
    } else {
        lipschitz_filter(d, rec, g, base_round, hist, cfg.alpha, cfg.append_only_on_accept);
        if (cfg.variant == SecureAflVariant::no_rejection) d.accepted = true;
    }

    if (cfg.variant == SecureAflVariant::direct_apply) {
        d.apply = d.accepted;
        d.aggregate = d.accepted ? received : ParamVector(g.size());
    } else {
        // Estimates use the buffers as they stood before this round; the new
        // (dw, g_hat - g_v) pairs are pushed only after every estimate exists.
        std::vector<ParamVector> inputs;
        std::vector<EstimationResult> results;
        std::vector<ClientId> estimated;
        for (ClientId k = 0; k < hist.n_clients(); ++k) {
            if (k == i || !hist.clients[k].ever_seen) continue;
            EstimationResult est = estimate_update(k, t, hist, cfg.curvature_bound);
            if (est.fallback_used) ++d.fallbacks;
            inputs.push_back(est.estimate);
            d.estimates.emplace_back(k, est.estimate);
            estimated.push_back(k);
            results.push_back(std::move(est));
        }
        d.estimates_used = inputs.size();

        const bool include_received = d.accepted && cfg.variant != SecureAflVariant::estimates_only;
        if (include_received) inputs.push_back(received);

        if (inputs.empty()) {
            d.aggregate = ParamVector(g.size());
        } else if (cfg.variant == SecureAflVariant::mean_aggregation) {
            d.aggregate = coordinate_mean(inputs);
        } else {
            d.aggregate = coordinate_median(inputs);
        }

        for (std::size_t e = 0; e < estimated.size() && cfg.recursive_pairs; ++e) {
            auto& r = results[e];
            if (!pair_is_informative(r.dw, r.hvp)) continue;
            hist.buffers.push(estimated[e], std::move(r.dw), std::move(r.hvp));
        }
    }

    // Secant pair between the client's two most recent real updates.
    if (!d.first_contact && cfg.secant_on_receipt && cfg.variant != SecureAflVariant::direct_apply) {
        ParamVector dw = w_base - hist.globals.at(rec.last_base_round);
        ParamVector dg = g - rec.last_update;
        if (pair_is_informative(dw, dg)) hist.buffers.push(i, std::move(dw), std::move(dg));
    }
    rec.update(g, base_round);
    return d;
}

RoundDecision variant_round(SecureAflVariant variant, ClientId i, const ParamVector& g, Round base_round, Round t,
                            HistoryStore& hist, SecureAflConfig cfg) {
    cfg.variant = variant;
    return secureafl_round(i, g, base_round, t, hist, cfg);
}

ParamVector asyncsgd_round(const ParamVector& g, Round /*t*/, double eta) {
    require_finite(g, "received update is not finite");
    return -eta * g;
}

RoundDecision kardam_round(const ParamVector& g, ClientId i, Round base_round, Round t, HistoryStore& hist,
                           double clip_threshold) {
    require_finite(g, "received update is not finite");
    hist.globals.at(base_round);
    ClientRecord& rec = hist.client(i);
    RoundDecision d;
    d.first_contact = !rec.ever_seen || t == 0;
    ParamVector received = g;
    if (d.first_contact) {
        received = clip_l2(g, clip_threshold);
        d.accepted = true;
    } else {
        lipschitz_filter(d, rec, g, base_round, hist, 0.5, false);
    }
    d.apply = d.accepted;
    d.aggregate = d.accepted ? std::move(received) : ParamVector(g.size());
    rec.update(g, base_round);
    return d;
}

BasgdState::BasgdState(std::size_t bucket_count) : buckets(bucket_count) {
    if (bucket_count == 0) throw Error("BASGD needs at least one bucket");
}

std::optional<ParamVector> basgd_round(const ParamVector& g, ClientId i, BasgdState& state, double eta) {
    require_finite(g, "received update is not finite");
    auto& bucket = state.buckets[state.bucket_of(i)];
    if (bucket.count == 0)
        bucket.sum = g;
    else
        bucket.sum += g;
    ++bucket.count;

    for (const auto& b : state.buckets)
        if (b.count == 0) return std::nullopt;

    std::vector<ParamVector> means;
    means.reserve(state.buckets.size());
    for (auto& b : state.buckets) {
        means.push_back((1.0 / static_cast<double>(b.count)) * b.sum);
        b = BasgdState::Bucket{};
    }
    return -eta * coordinate_median(means);
}

std::string to_string(DefenseKind k) {
    switch (k) {
        case DefenseKind::secureafl: return "secureafl";
        case DefenseKind::asyncsgd: return "asyncsgd";
        case DefenseKind::kardam: return "kardam";
        case DefenseKind::basgd: return "basgd";
    }
    return "?";
}

std::string to_string(SecureAflVariant v) {
    switch (v) {
        case SecureAflVariant::full: return "full";
        case SecureAflVariant::mean_aggregation: return "I";
        case SecureAflVariant::direct_apply: return "II";
        case SecureAflVariant::no_rejection: return "III";
        case SecureAflVariant::estimates_only: return "IV";
    }
    return "?";
}

DefenseKind defense_from_string(const std::string& s) {
    for (auto k : {DefenseKind::secureafl, DefenseKind::asyncsgd, DefenseKind::kardam, DefenseKind::basgd})
        if (to_string(k) == s) return k;
    throw Error("unknown defense '" + s + "'");
}

SecureAflVariant variant_from_string(const std::string& s) {
    for (auto v : {SecureAflVariant::full, SecureAflVariant::mean_aggregation, SecureAflVariant::direct_apply,
                   SecureAflVariant::no_rejection, SecureAflVariant::estimates_only})
        if (to_string(v) == s) return v;
    throw Error("unknown SecureAFL variant '" + s + "'");
}

namespace {

class SecureAflRule final : public DefenseRule {
public:
    explicit SecureAflRule(SecureAflConfig cfg) : cfg_(cfg) { cfg_.validate(); }
    RoundDecision on_update(ClientId i, const ParamVector& g, Round base_round, Round t,
                            HistoryStore& hist) override {
        return secureafl_round(i, g, base_round, t, hist, cfg_);
    }
    std::string name() const override {
        return cfg_.variant == SecureAflVariant::full ? "secureafl" : "secureafl-" + to_string(cfg_.variant);
    }
    bool filters() const override { return true; }
    std::unique_ptr<DefenseRule> clone() const override { return std::make_unique<SecureAflRule>(*this); }

private:
    SecureAflConfig cfg_;
};

class AsyncSgdRule final : public DefenseRule {
public:
    RoundDecision on_update(ClientId, const ParamVector& g, Round base_round, Round t, HistoryStore& hist) override {
        hist.globals.at(base_round);
        RoundDecision d;
        d.accepted = true;
        d.aggregate = -asyncsgd_round(g, t, 1.0);
        return d;
    }
    std::string name() const override { return "asyncsgd"; }
    std::unique_ptr<DefenseRule> clone() const override { return std::make_unique<AsyncSgdRule>(*this); }
};

class KardamRule final : public DefenseRule {
public:
    explicit KardamRule(double clip) : clip_(clip) {}
    RoundDecision on_update(ClientId i, const ParamVector& g, Round base_round, Round t,
                            HistoryStore& hist) override {
        return kardam_round(g, i, base_round, t, hist, clip_);
    }
    std::string name() const override { return "kardam"; }
    bool filters() const override { return true; }
    std::unique_ptr<DefenseRule> clone() const override { return std::make_unique<KardamRule>(*this); }

private:
    double clip_;
};

class BasgdRule final : public DefenseRule {
public:
    explicit BasgdRule(std::size_t buckets) : state_(buckets) {}
    RoundDecision on_update(ClientId i, const ParamVector& g, Round base_round, Round, HistoryStore& hist) override {
        hist.globals.at(base_round);
        RoundDecision d;
        d.accepted = true;
        auto delta = basgd_round(g, i, state_, 1.0);
        d.apply = delta.has_value();
        d.aggregate = delta ? -std::move(*delta) : ParamVector(g.size());
        return d;
    }
    std::string name() const override { return "basgd"; }
    std::unique_ptr<DefenseRule> clone() const override { return std::make_unique<BasgdRule>(*this); }

private:
    BasgdState state_;
};

}  // namespace

std::unique_ptr<DefenseRule> make_defense(const DefenseSettings& s) {
    switch (s.kind) {
        case DefenseKind::secureafl: return std::make_unique<SecureAflRule>(s.secureafl);
        case DefenseKind::asyncsgd: return std::make_unique<AsyncSgdRule>();
        case DefenseKind::kardam: return std::make_unique<KardamRule>(s.secureafl.clip_threshold);
        case DefenseKind::basgd: return std::make_unique<BasgdRule>(s.basgd_buckets);
    }
    throw Error("unknown defense");
}

}  // namespace safl
