#include "safl/attacks.hpp"

#include <algorithm>

namespace safl {

std::string to_string(AttackKind k) {
    switch (k) {
        case AttackKind::none: return "none";
        case AttackKind::labelflip: return "labelflip";
        case AttackKind::signflip: return "signflip";
        case AttackKind::gaussian: return "gaussian";
        case AttackKind::scaling: return "scaling";
        case AttackKind::minmax: return "minmax";
        case AttackKind::adaptive: return "adaptive";
    }
    return "?";
}

AttackKind attack_from_string(const std::string& s) {
    for (auto k : {AttackKind::none, AttackKind::labelflip, AttackKind::signflip, AttackKind::gaussian,
                   AttackKind::scaling, AttackKind::minmax, AttackKind::adaptive})
        if (to_string(k) == s) return k;
    throw Error("unknown attack '" + s + "'");
}

bool is_targeted(AttackKind k) noexcept { return k == AttackKind::scaling; }

bool is_data_poisoning(AttackKind k) noexcept { return k == AttackKind::labelflip || k == AttackKind::scaling; }

Dataset labelflip_poison(const Dataset& shard) {
    if (shard.task != TaskKind::classification) throw Error("labelflip_poison: classification task required");
    Dataset out = shard;
    const int z = static_cast<int>(shard.classes);
    for (auto& s : out.samples) s.label = z - 1 - s.label;
    return out;
}

ParamVector signflip(const ParamVector& g) { return -g; }

ParamVector gaussian_fabricate(std::size_t d, RngStream& rng) {
    if (d == 0) throw Error("gaussian_fabricate: dimension must be >= 1");
    return gaussian_sample(rng, 0.0, kGaussianAttackStd, d);
}

ParamVector scaling_attack(const ParamVector& g_poisoned, double factor) { return factor * g_poisoned; }

Dataset backdoor_poison(const Dataset& shard, const TriggerSpec& trig) {
    if (shard.task != TaskKind::classification) throw Error("backdoor_poison: classification task required");
    Dataset out = shard;
    out.samples.reserve(2 * shard.size());
    for (const auto& s : shard.samples) out.samples.push_back(embed_trigger(s, trig, true));
    return out;
}

namespace {

double max_distance(const ParamVector& x, const std::vector<ParamVector>& others) {
    double worst = 0.0;
    for (const auto& g : others) worst = std::max(worst, l2_norm(x - g));
    return worst;
}

// Inverted unit benign mean; the first basis vector when the mean vanishes.
ParamVector inverse_unit_mean(const ParamVector& mean) {
    const double norm = l2_norm(mean);
    if (norm == 0.0) {
        ParamVector e(mean.size());
        e[0] = 1.0;
        return e;
    }
    return (-1.0 / norm) * mean;
}

}  // namespace

ParamVector minmax_attack(const AttackContext& ctx) {
    const auto& benign = ctx.benign_updates;
    if (benign.size() < 2) throw Error("minmax_attack: needs at least two benign updates");
    const ParamVector mean = coordinate_mean(benign);
    const ParamVector dir = inverse_unit_mean(mean);

    double tau = 0.0;
    for (std::size_t a = 0; a < benign.size(); ++a)
        for (std::size_t b = a + 1; b < benign.size(); ++b) tau = std::max(tau, l2_norm(benign[a] - benign[b]));

    double lo = 0.0;
    double hi = 10.0 * tau;
    for (int it = 0; it < 30; ++it) {
        const double mid = 0.5 * (lo + hi);
        ParamVector cand = mean;
        cand.axpy(mid, dir);
        if (max_distance(cand, benign) <= tau)
            lo = mid;
        else
            hi = mid;
    }
    ParamVector out = mean;
    out.axpy(lo, dir);
    return out;
}

ParamVector adaptive_attack(const AttackContext& ctx, const SecureAflConfig& cfg) {
    const HistoryStore* view = ctx.defense_view;
    if (view == nullptr || view->lipschitz.empty() || !view->client(ctx.attacker).ever_seen)
        return minmax_attack(ctx);
    const ClientRecord& rec = view->client(ctx.attacker);
    const double theta = percentile(view->lipschitz.values(), cfg.alpha);
    const ParamVector& w_new = view->globals.at(ctx.base_round);
    const ParamVector& w_old = view->globals.at(rec.last_base_round);
    const double budget = 0.99 * theta * l2_norm(w_new - w_old);

    ParamVector out = rec.last_update;
    if (budget > 0.0) out.axpy(budget, inverse_unit_mean(coordinate_mean(ctx.benign_updates)));
    return out;
}

}  // namespace safl
