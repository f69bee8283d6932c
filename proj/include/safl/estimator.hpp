#pragma once

// Reconstruction of a silent client's update at the current global model:
//
//   g_hat_k(t) = g_k(v) + H_k (w^t - w^v)
//
// where the integrated Hessian H_k is never formed; its product with the model
// difference comes from the compact L-BFGS representation built on the
// client's stored (model difference, update difference) pairs.

#include <span>

#include "safl/history.hpp"
#include "safl/numkit.hpp"

namespace safl {

inline constexpr double kLbfgsRidge = 1e-6;
inline constexpr double kDefaultCurvatureBound = 2.0;

struct EstimationResult {
    ParamVector estimate;
    ParamVector hvp;  // H_k * dw; zero when the fallback was taken
    ParamVector dw;   // w^t - w^v
    bool fallback_used = false;
};

/// Compact L-BFGS product H * dw from s aligned pairs (oldest first).
/// model_diffs holds the dw pairs (Phi), update_diffs the dg pairs (Pi). The
/// initial scaling mu is taken from the newest pair.
///
/// Throws Error("degenerate curvature pair") when the newest model difference
/// is zero and Error("singular system") if the 2s x 2s system cannot be
/// solved even with the ridge.
ParamVector lbfgs_hvp(std::span<const ParamVector> model_diffs, std::span<const ParamVector> update_diffs,
                      const ParamVector& dw, double ridge = kLbfgsRidge);

/// Estimate for client k at round t. Falls back to the anchor update when the
/// client has no curvature pairs, the product cannot be formed, or
/// ||H dw|| exceeds curvature_bound * max_j ||dg_j|| / ||dw_j|| * ||dw||
/// (a bound of 0 disables that check).
/// Throws Error("no anchor update") for a client the server has never heard from.
EstimationResult estimate_update(ClientId k, Round t, const HistoryStore& hist,
                                 double curvature_bound = kDefaultCurvatureBound, double ridge = kLbfgsRidge);

/// ||estimate - truth|| / ||truth||.
double relative_estimation_error(const ParamVector& estimate, const ParamVector& truth);

}  // namespace safl
