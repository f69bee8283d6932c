#include "safl/estimator.hpp"

#include <algorithm>

namespace safl {

ParamVector lbfgs_hvp(std::span<const ParamVector> model_diffs, std::span<const ParamVector> update_diffs,
                      const ParamVector& dw, double ridge) {
    const std::size_t s = model_diffs.size();
    if (s == 0 || update_diffs.size() != s) throw Error("lbfgs_hvp: need s >= 1 aligned pairs");
    for (std::size_t i = 0; i < s; ++i)
        if (model_diffs[i].size() != dw.size() || update_diffs[i].size() != dw.size())
            throw Error("lbfgs_hvp: length mismatch");

    const ParamVector& dw_prev = model_diffs[s - 1];
    const ParamVector& dg_prev = update_diffs[s - 1];
    const double dw_sq = dot(dw_prev, dw_prev);
    if (!(dw_sq > 0.0)) throw Error("degenerate curvature pair");
    const double mu = dot(dg_prev, dw_prev) / dw_sq;

    // Block system [[-B, J^T], [J, mu Phi^T Phi]] l = [Pi^T dw; mu Phi^T dw] with
    // Y = Phi^T Pi, B = Diag(Y), J = strictly lower triangle of Y.
    DenseMatrix m(2 * s, 2 * s);
    for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t j = 0; j < s; ++j) {
            const double y_ij = dot(model_diffs[i], update_diffs[j]);
            if (i == j) m(i, i) = -y_ij;
            if (i > j) {
                m(s + i, j) = y_ij;  // J
                m(j, s + i) = y_ij;  // J^T
            }
            m(s + i, s + j) = mu * dot(model_diffs[i], model_diffs[j]);
        }
    }
    std::vector<double> rhs(2 * s);
    for (std::size_t i = 0; i < s; ++i) {
        rhs[i] = dot(update_diffs[i], dw);
        rhs[s + i] = mu * dot(model_diffs[i], dw);
    }
    const auto l = solve_dense(m, rhs, ridge);

    ParamVector out = mu * dw;
    for (std::size_t i = 0; i < s; ++i) {
        out.axpy(-l[i], update_diffs[i]);
        out.axpy(-mu * l[s + i], model_diffs[i]);
    }
    return out;
}

EstimationResult estimate_update(ClientId k, Round t, const HistoryStore& hist, double curvature_bound,
                                 double ridge) {
    const ClientRecord& rec = hist.client(k);
    if (!rec.ever_seen) throw Error("no anchor update");

    EstimationResult r;
    r.dw = hist.globals.delta_w(t, rec.last_base_round);
    r.hvp = ParamVector(r.dw.size());
    r.estimate = rec.last_update;

    if (hist.buffers.pair_count(k) == 0) {
        r.fallback_used = true;
        return r;
    }
    const auto phi = hist.buffers.model_diffs(k);
    const auto pi = hist.buffers.update_diffs(k);
    try {
        ParamVector hvp = lbfgs_hvp(phi, pi, r.dw, ridge);
        if (!hvp.all_finite()) throw Error("non-finite vector");
        if (curvature_bound > 0.0) {
            double ratio = 0.0;
            for (std::size_t j = 0; j < phi.size(); ++j) ratio = std::max(ratio, l2_norm(pi[j]) / l2_norm(phi[j]));
            if (l2_norm(hvp) > curvature_bound * ratio * l2_norm(r.dw)) throw Error("implausible curvature");
        }
        r.estimate += hvp;
        r.hvp = std::move(hvp);
    } catch (const Error&) {
        r.estimate = rec.last_update;
        r.fallback_used = true;
    }
    return r;
}

double relative_estimation_error(const ParamVector& estimate, const ParamVector& truth) {
    const double denom = l2_norm(truth);
    if (denom == 0.0) throw Error("undefined relative error");
    return l2_norm(estimate - truth) / denom;
}

}  // namespace safl
