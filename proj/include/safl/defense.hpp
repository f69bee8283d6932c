#pragma once

// Server-side defenses for asynchronous FL. Each round the server receives one
// client update computed against a possibly stale global model and turns it
// into an aggregate direction g^t; the caller then applies
// w^{t+1} = w^t - eta * g^t when the decision says so.

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "safl/history.hpp"
#include "safl/numkit.hpp"

namespace safl {

enum class SecureAflVariant {
    full,
    mean_aggregation,  // I: arithmetic mean instead of the coordinate median
    direct_apply,      // II: no estimation; apply the update only if accepted
    no_rejection,      // III: never discard the received update
    estimates_only,    // IV: aggregate estimated updates only
};

struct SecureAflConfig {
    double alpha = 0.8;
    std::size_t epsilon = 3;
    double clip_threshold = 50.0;
    double eta = 0.01;
    SecureAflVariant variant = SecureAflVariant::full;
    /// Ablation: only accepted factors enter Q.
    bool append_only_on_accept = false;
    /// Push the observed (dw, dg) secant pair of a client's consecutive real
    /// updates into its L-BFGS rings.
    bool secant_on_receipt = true;
    /// Also push (w^t - w^v, g_hat - g_v) after every estimation.
    bool recursive_pairs = false;
    /// Estimates whose curvature correction outgrows the stored secant ratios
    /// by more than this factor revert to the anchor; 0 disables.
    double curvature_bound = 2.0;
    DiffAnchoring anchoring = DiffAnchoring::per_client;

    void validate() const;
};

struct RoundDecision {
    bool accepted = false;
    bool first_contact = false;
    /// False when the global model must stay unchanged this round.
    bool apply = true;
    std::optional<double> lambda;
    std::optional<double> threshold;
    ParamVector aggregate;
    std::size_t estimates_used = 0;
    std::size_t fallbacks = 0;
    /// (client, estimate) pairs that entered the aggregation.
    std::vector<std::pair<ClientId, ParamVector>> estimates;
};

/// Rescales g onto the l2 ball of radius G when it lies outside.
ParamVector clip_l2(const ParamVector& g, double G);

/// ||g_new - g_old|| / ||w_new - w_old||. A zero denominator yields 0 when the
/// numerator also vanishes and +infinity otherwise.
double lipschitz_factor(const ParamVector& g_new, const ParamVector& g_old, const ParamVector& w_new,
                        const ParamVector& w_old);

/// One round of SecureAFL (or one of its ablation variants) for the update g
/// that client i computed at global model base_round.
RoundDecision secureafl_round(ClientId i, const ParamVector& g, Round base_round, Round t, HistoryStore& hist,
                              const SecureAflConfig& cfg);

/// The variant rules run through the same round with cfg.variant overridden.
RoundDecision variant_round(SecureAflVariant variant, ClientId i, const ParamVector& g, Round base_round, Round t,
                            HistoryStore& hist, SecureAflConfig cfg);

/// Plain asynchronous SGD: the model delta -eta * g.
ParamVector asyncsgd_round(const ParamVector& g, Round t, double eta);

/// Simplified Kardam-style filter: accept iff the Lipschitz factor is at most
/// the median of the log, then apply the update directly.
RoundDecision kardam_round(const ParamVector& g, ClientId i, Round base_round, Round t, HistoryStore& hist,
                           double clip_threshold);

struct BasgdState {
    struct Bucket {
        ParamVector sum;
        std::size_t count = 0;
    };
    std::vector<Bucket> buckets;

    explicit BasgdState(std::size_t bucket_count);
    std::size_t bucket_of(ClientId i) const noexcept { return i % buckets.size(); }
};

/// Buffered asynchronous SGD: accumulate into the client's bucket; once every
/// bucket is non-empty return -eta * median of the bucket means and reset.
std::optional<ParamVector> basgd_round(const ParamVector& g, ClientId i, BasgdState& state, double eta);

enum class DefenseKind { secureafl, asyncsgd, kardam, basgd };

std::string to_string(DefenseKind k);
std::string to_string(SecureAflVariant v);
DefenseKind defense_from_string(const std::string& s);
SecureAflVariant variant_from_string(const std::string& s);

/// Stateful strategy driven by the simulation loop, one instance per run.
class DefenseRule {
public:
    virtual ~DefenseRule() = default;
    virtual RoundDecision on_update(ClientId i, const ParamVector& g, Round base_round, Round t,
                                    HistoryStore& hist) = 0;
    virtual std::string name() const = 0;
    /// True when the rule maintains the Lipschitz log and client records.
    virtual bool filters() const { return false; }
    virtual std::unique_ptr<DefenseRule> clone() const = 0;
};

struct DefenseSettings {
    DefenseKind kind = DefenseKind::secureafl;
    SecureAflConfig secureafl;
    std::size_t basgd_buckets = 3;
};

std::unique_ptr<DefenseRule> make_defense(const DefenseSettings& s);

}  // namespace safl
