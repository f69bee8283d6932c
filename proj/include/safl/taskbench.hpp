#pragma once

// Synthetic desk-scale learning tasks: Gaussian-mixture classification and
// noisy linear regression, the two shallow models trained on them, non-IID
// client partitioning and the evaluation metrics (TER, ASR, RMSE).

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "safl/numkit.hpp"

namespace safl {

enum class TaskKind { classification, regression };

struct Sample {
    std::vector<double> features;
    int label = 0;        // classification only
    double target = 0.0;  // regression only
    bool triggered = false;
};

struct Dataset {
    TaskKind task = TaskKind::classification;
    std::size_t feature_dim = 0;
    std::size_t classes = 0;  // 0 for regression
    std::vector<Sample> samples;

    std::size_t size() const noexcept { return samples.size(); }
    bool empty() const noexcept { return samples.empty(); }
    Dataset empty_like() const { return Dataset{task, feature_dim, classes, {}}; }
};

/// Softmax regression over z classes (d = p*z + z, weights row-major by class
/// then biases) or linear regression (d = p + 1, weights then bias).
struct Model {
    TaskKind arch = TaskKind::classification;
    std::size_t feature_dim = 0;
    std::size_t classes = 0;
    ParamVector params;

    static Model softmax(std::size_t p, std::size_t z);
    static Model linear(std::size_t p);
    static Model for_dataset(const Dataset& ds);

    std::size_t dim() const noexcept { return params.size(); }
    Model with_params(ParamVector w) const;

    /// Class logits (softmax) or a single prediction (linear).
    std::vector<double> outputs(std::span<const double> x) const;
    int predict_class(std::span<const double> x) const;
    double predict_value(std::span<const double> x) const;
};

struct TriggerSpec {
    std::vector<std::size_t> indices;
    std::vector<double> values;
    int target_label = 0;

    void validate(std::size_t feature_dim) const;
};

Dataset gen_classification(std::size_t classes, std::size_t feature_dim, std::size_t n, double sep, RngStream& rng);

/// y = w*.x + b* + N(0, noise_std^2); the hidden (w*, b*) is drawn from rng.
Dataset gen_regression(std::size_t feature_dim, std::size_t n, double noise_std, RngStream& rng);

/// Label-skewed split. Client c belongs to group c mod z; a sample with label q
/// goes to a random client of group q with probability x, otherwise to a random
/// client of a uniformly chosen other group.
std::vector<Dataset> partition_noniid(const Dataset& ds, std::size_t n_clients, double x, RngStream& rng);

/// Uniform random split, used for regression where labels carry no groups.
std::vector<Dataset> partition_iid(const Dataset& ds, std::size_t n_clients, RngStream& rng);

/// Mean loss: cross-entropy (softmax) or 0.5 * squared error (linear).
double loss(const Model& m, std::span<const Sample> batch);

/// Mean gradient of loss() over the batch, in closed form.
ParamVector gradient(const Model& m, std::span<const Sample> batch);

double test_error_rate(const Model& m, const Dataset& test);

/// Fraction of triggered non-target test samples predicted as the target.
double attack_success_rate(const Model& m, const Dataset& test, const TriggerSpec& trig);

double rmse(const Model& m, const Dataset& test);

/// Writes trigger values into the listed features. With relabel = true the
/// label becomes the trigger target (poisoning); otherwise it is kept.
Sample embed_trigger(const Sample& s, const TriggerSpec& trig, bool relabel = true);

/// Debug dump: feature columns then the label (or target) column.
void write_csv(std::ostream& os, const Dataset& ds);

}  // namespace safl
