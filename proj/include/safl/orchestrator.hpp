#pragma once

// Logical simulation of asynchronous federated learning. Each round one
// uniformly chosen client computes an update against a uniformly delayed
// global model, the configured defense turns it into an aggregate, and the
// server steps the global model. Everything is driven by seeded streams, so a
// configuration and seed determine the whole trajectory.

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "safl/attacks.hpp"
#include "safl/defense.hpp"
#include "safl/history.hpp"
#include "safl/numkit.hpp"
#include "safl/taskbench.hpp"

namespace safl {

struct ExperimentConfig {
    TaskKind task = TaskKind::classification;
    std::size_t classes = 3;
    std::size_t features = 10;
    std::size_t train_samples = 3000;
    std::size_t test_samples = 1000;
    double separation = 2.0;
    double noise_std = 0.5;

    std::size_t n_clients = 50;
    double malicious_fraction = 0.2;
    std::size_t tau_max = 10;
    std::size_t rounds = 2000;
    std::size_t batch_size = 0;  // 0 = full shard
    double noniid_x = 0.5;

    DefenseSettings defense;
    AttackKind attack = AttackKind::none;
    double scaling_factor = 0.0;  // 0 = n_clients
    TriggerSpec trigger{{8, 9}, {6.0, 6.0}, 0};

    std::size_t eval_interval = 50;
    bool probes = true;
    std::uint64_t seed = 1;

    /// Shared learning rate; lives in the SecureAFL block so every defense
    /// sees the same value.
    double eta() const noexcept { return defense.secureafl.eta; }
    std::size_t malicious_count() const noexcept;
    void validate() const;
};

/// Ceiling on the malicious fraction accepted by validate().
inline constexpr double kMaxMaliciousFraction = 0.45;

struct ClientState {
    ClientId id = 0;
    Dataset shard;
    bool malicious = false;
    RngStream rng;
};

struct MetricsRecord {
    Round round = 0;
    std::optional<double> ter;
    std::optional<double> asr;
    std::optional<double> rmse;
    std::optional<double> lambda;         // mean finite Lipschitz factor in the window
    std::optional<double> accepted;       // filter acceptance rate in the window
    std::optional<double> grad_norm_sq;   // mean ||grad F_H(w^t)||^2 in the window
    std::optional<double> track_err;      // mean ||g^t - grad F_H(w^t)||^2 in the window
    std::optional<double> rel_est_error;  // mean relative error of benign estimates
    std::size_t max_staleness = 0;        // within the window
    double wall_clock = 0.0;              // seconds since start; not serialized
};

struct MetricsLog {
    std::vector<MetricsRecord> records;
    std::size_t tau_max = 0;

    const MetricsRecord& final() const;
    /// Metric columns present in this log, alphabetical. The round column is
    /// not included.
    std::vector<std::string> columns() const;
};

/// t - tau with tau uniform on {0, ..., min(tau_max, t)}.
Round sample_stale_base(Round t, std::size_t tau_max, RngStream& rng);

/// Honest local update: gradient over a uniform minibatch (without
/// replacement) of the client's shard at w_base; batch_size 0 uses the shard.
ParamVector local_step(const ClientState& c, const Model& at_base, std::size_t batch_size, RngStream& rng);

class Simulation {
public:
    explicit Simulation(ExperimentConfig cfg);
    Simulation(const Simulation& other);
    Simulation& operator=(const Simulation& other);
    Simulation(Simulation&&) noexcept;
    Simulation& operator=(Simulation&&) noexcept;
    ~Simulation();

    /// Runs one full round.
    void step();
    /// Runs rounds until the configured T.
    MetricsLog run();

    /// Feeds a chosen update through the defense as round t and applies it.
    RoundDecision inject(ClientId i, const ParamVector& g, Round base_round);

    /// Update client i would upload this round at base_round (attack applied).
    ParamVector upload(ClientId i, Round base_round);
    /// Honest gradient of client i at base_round from the given stream.
    ParamVector honest_update(ClientId i, Round base_round, RngStream& rng) const;

    Round round() const noexcept { return t_; }
    const ExperimentConfig& config() const noexcept { return cfg_; }
    const Model& model() const noexcept { return model_; }
    const HistoryStore& history() const noexcept { return hist_; }
    const std::vector<ClientState>& clients() const noexcept { return clients_; }
    const Dataset& test_set() const noexcept { return test_; }
    const DefenseRule& defense() const noexcept { return *defense_; }
    const MetricsLog& metrics() const noexcept { return log_; }
    const std::vector<Round>& staleness_trace() const noexcept { return staleness_; }
    const std::vector<ClientId>& schedule_trace() const noexcept { return schedule_; }
    std::vector<ClientId> benign_ids() const;

    /// Mean of the benign clients' full-shard gradients at w.
    ParamVector benign_gradient(const ParamVector& w) const;

private:
    struct Window;
    RoundDecision process(ClientId i, const ParamVector& g, Round base_round);
    void evaluate(Round round_after);

    ExperimentConfig cfg_;
    Model model_;
    Dataset test_;
    std::vector<ClientState> clients_;
    HistoryStore hist_;
    std::unique_ptr<DefenseRule> defense_;
    RngStream schedule_rng_;
    RngStream stale_rng_;
    RngStream attack_rng_;
    Round t_ = 0;
    MetricsLog log_;
    std::unique_ptr<Window> window_;
    std::vector<Round> staleness_;
    std::vector<ClientId> schedule_;
    double started_ = 0.0;
};

MetricsLog run_experiment(const ExperimentConfig& cfg);

/// Checks derived from a completed run's metrics.
struct ProbeReport {
    std::vector<double> grad_norm_sq;    // per record window
    std::vector<double> rel_est_error;   // per record window (benign estimates)
    std::vector<double> track_err;       // per record window
    std::size_t max_staleness = 0;
    std::size_t tau_max = 0;
    bool staleness_within_bound = false;
    double tracking_floor = 0.0;         // 4 * mean tracking error
    double plateau_grad_norm_sq = 0.0;   // mean over the last quarter of windows
    bool plateau_below_floor = false;    // plateau <= 10 * floor
    bool gradient_decreased = false;     // last window below first
    bool tracking_bounded = false;       // finite, late windows <= 10x early max
    bool rel_est_non_increasing = false; // after warm-up windows
};

ProbeReport theory_probe(const MetricsLog& log, std::size_t warmup_rounds = 200);

}  // namespace safl
