#include "safl/taskbench.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace safl {

Model Model::softmax(std::size_t p, std::size_t z) {
    if (p == 0 || z < 2) throw Error("softmax model needs p >= 1 and z >= 2");
    return Model{TaskKind::classification, p, z, ParamVector(p * z + z)};
}

Model Model::linear(std::size_t p) {
    if (p == 0) throw Error("linear model needs p >= 1");
    return Model{TaskKind::regression, p, 0, ParamVector(p + 1)};
}

Model Model::for_dataset(const Dataset& ds) {
    return ds.task == TaskKind::classification ? softmax(ds.feature_dim, ds.classes) : linear(ds.feature_dim);
}

Model Model::with_params(ParamVector w) const {
    if (w.size() != params.size()) throw Error("model parameter length mismatch");
    Model m = *this;
    m.params = std::move(w);
    return m;
}

std::vector<double> Model::outputs(std::span<const double> x) const {
    if (x.size() != feature_dim) throw Error("feature length does not match model");
    const std::size_t p = feature_dim;
    if (arch == TaskKind::regression) {
        double y = params[p];
        for (std::size_t j = 0; j < p; ++j) y += params[j] * x[j];
        return {y};
    }
    std::vector<double> logits(classes);
    for (std::size_t q = 0; q < classes; ++q) {
        double s = params[p * classes + q];
        for (std::size_t j = 0; j < p; ++j) s += params[q * p + j] * x[j];
        logits[q] = s;
    }
    return logits;
}

int Model::predict_class(std::span<const double> x) const {
    if (arch != TaskKind::classification) throw Error("predict_class on a regression model");
    const auto logits = outputs(x);
    // max_element returns the first maximum: lowest index wins ties.
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

double Model::predict_value(std::span<const double> x) const {
    if (arch != TaskKind::regression) throw Error("predict_value on a classification model");
    return outputs(x)[0];
}

void TriggerSpec::validate(std::size_t feature_dim) const {
    if (indices.size() != values.size()) throw Error("trigger indices and values differ in length");
    std::vector<std::size_t> sorted = indices;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw Error("trigger indices must be distinct");
    for (auto j : indices)
        if (j >= feature_dim) throw Error("trigger index " + std::to_string(j) + " out of range");
}

Dataset gen_classification(std::size_t classes, std::size_t feature_dim, std::size_t n, double sep, RngStream& rng) {
    if (classes < 2) throw Error("gen_classification: need at least two classes");
    if (feature_dim < classes) throw Error("gen_classification: feature_dim must be >= classes");
    if (n < classes) throw Error("gen_classification: fewer samples than classes");
    if (!(sep >= 0.0)) throw Error("gen_classification: negative separation");

    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % classes);
    std::shuffle(labels.begin(), labels.end(), rng.engine());

    Dataset ds{TaskKind::classification, feature_dim, classes, {}};
    ds.samples.reserve(n);
    for (int q : labels) {
        Sample s;
        s.label = q;
        s.features = gaussian_sample(rng, 0.0, 1.0, feature_dim).values();
        s.features[static_cast<std::size_t>(q)] += sep;
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

Dataset gen_regression(std::size_t feature_dim, std::size_t n, double noise_std, RngStream& rng) {
    if (feature_dim == 0) throw Error("gen_regression: feature_dim must be >= 1");
    if (n == 0) throw Error("gen_regression: empty request");
    if (!(noise_std >= 0.0)) throw Error("gen_regression: negative noise");

    const ParamVector w_star = gaussian_sample(rng, 0.0, 1.0, feature_dim);
    const double b_star = rng.normal(0.0, 1.0);

    Dataset ds{TaskKind::regression, feature_dim, 0, {}};
    ds.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Sample s;
        s.features = gaussian_sample(rng, 0.0, 1.0, feature_dim).values();
        double y = b_star;
        for (std::size_t j = 0; j < feature_dim; ++j) y += w_star[j] * s.features[j];
        s.target = y + rng.normal(0.0, noise_std);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

std::vector<Dataset> partition_noniid(const Dataset& ds, std::size_t n_clients, double x, RngStream& rng) {
    if (ds.task != TaskKind::classification) throw Error("partition_noniid: classification task required");
    const std::size_t z = ds.classes;
    if (n_clients < z) throw Error("fewer clients than groups");
    if (!(x >= 1.0 / static_cast<double>(z) - 1e-12 && x <= 1.0)) throw Error("partition_noniid: x must lie in [1/z, 1]");

    std::vector<std::vector<std::size_t>> groups(z);
    for (std::size_t c = 0; c < n_clients; ++c) groups[c % z].push_back(c);

    std::vector<Dataset> shards(n_clients, ds.empty_like());
    for (const auto& s : ds.samples) {
        auto group = static_cast<std::size_t>(s.label);
        if (rng.uniform01() >= x) {
            // One of the other z - 1 groups, uniformly.
            std::size_t other = rng.uniform_index(0, z - 2);
            group = other >= group ? other + 1 : other;
        }
        const auto& members = groups[group];
        shards[members[rng.uniform_index(0, members.size() - 1)]].samples.push_back(s);
    }
    return shards;
}

std::vector<Dataset> partition_iid(const Dataset& ds, std::size_t n_clients, RngStream& rng) {
    if (n_clients == 0) throw Error("partition_iid: need at least one client");
    std::vector<Dataset> shards(n_clients, ds.empty_like());
    for (const auto& s : ds.samples) shards[rng.uniform_index(0, n_clients - 1)].samples.push_back(s);
    return shards;
}

namespace {

void require_batch(std::span<const Sample> batch) {
    if (batch.empty()) throw Error("empty batch");
}

std::vector<double> softmax_probs(std::vector<double> logits) {
    const double top = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (auto& l : logits) {
        l = std::exp(l - top);
        total += l;
    }
    for (auto& l : logits) l /= total;
    return logits;
}

}  // namespace

double loss(const Model& m, std::span<const Sample> batch) {
    require_batch(batch);
    double acc = 0.0;
    for (const auto& s : batch) {
        if (m.arch == TaskKind::regression) {
            const double r = m.predict_value(s.features) - s.target;
            acc += 0.5 * r * r;
        } else {
            const auto logits = m.outputs(s.features);
            const double top = *std::max_element(logits.begin(), logits.end());
            double lse = 0.0;
            for (double l : logits) lse += std::exp(l - top);
            acc += top + std::log(lse) - logits[static_cast<std::size_t>(s.label)];
        }
    }
    return acc / static_cast<double>(batch.size());
}

ParamVector gradient(const Model& m, std::span<const Sample> batch) {
    require_batch(batch);
    const std::size_t p = m.feature_dim;
    ParamVector g(m.dim());
    for (const auto& s : batch) {
        if (m.arch == TaskKind::regression) {
            const double r = m.predict_value(s.features) - s.target;
            for (std::size_t j = 0; j < p; ++j) g[j] += r * s.features[j];
            g[p] += r;
        } else {
            if (s.label < 0 || static_cast<std::size_t>(s.label) >= m.classes) throw Error("label out of range");
            auto probs = softmax_probs(m.outputs(s.features));
            probs[static_cast<std::size_t>(s.label)] -= 1.0;
            for (std::size_t q = 0; q < m.classes; ++q) {
                const double e = probs[q];
                for (std::size_t j = 0; j < p; ++j) g[q * p + j] += e * s.features[j];
                g[p * m.classes + q] += e;
            }
        }
    }
    g *= 1.0 / static_cast<double>(batch.size());
    return g;
}

double test_error_rate(const Model& m, const Dataset& test) {
    if (test.task != TaskKind::classification) throw Error("test_error_rate: classification task required");
    if (test.empty()) throw Error("test_error_rate: empty test set");
    std::size_t wrong = 0;
    for (const auto& s : test.samples)
        if (m.predict_class(s.features) != s.label) ++wrong;
    return static_cast<double>(wrong) / static_cast<double>(test.size());
}

double attack_success_rate(const Model& m, const Dataset& test, const TriggerSpec& trig) {
    if (test.task != TaskKind::classification) throw Error("attack_success_rate: classification task required");
    if (test.empty()) throw Error("attack_success_rate: empty test set");
    std::size_t eligible = 0;
    std::size_t hits = 0;
    for (const auto& s : test.samples) {
        if (s.label == trig.target_label) continue;
        ++eligible;
        const Sample t = embed_trigger(s, trig, false);
        if (m.predict_class(t.features) == trig.target_label) ++hits;
    }
    if (eligible == 0) throw Error("undefined ASR");
    return static_cast<double>(hits) / static_cast<double>(eligible);
}

double rmse(const Model& m, const Dataset& test) {
    if (test.task != TaskKind::regression) throw Error("rmse: regression task required");
    if (test.empty()) throw Error("rmse: empty test set");
    double acc = 0.0;
    for (const auto& s : test.samples) {
        const double r = m.predict_value(s.features) - s.target;
        acc += r * r;
    }
    return std::sqrt(acc / static_cast<double>(test.size()));
}

Sample embed_trigger(const Sample& s, const TriggerSpec& trig, bool relabel) {
    trig.validate(s.features.size());
    Sample out = s;
    for (std::size_t k = 0; k < trig.indices.size(); ++k) out.features[trig.indices[k]] = trig.values[k];
    if (relabel) out.label = trig.target_label;
    out.triggered = true;
    return out;
}

void write_csv(std::ostream& os, const Dataset& ds) {
    for (std::size_t j = 0; j < ds.feature_dim; ++j) os << 'x' << j << ',';
    os << (ds.task == TaskKind::classification ? "label" : "target") << '\n';
    os << std::setprecision(17);
    for (const auto& s : ds.samples) {
        for (double f : s.features) os << f << ',';
        if (ds.task == TaskKind::classification)
            os << s.label << '\n';
        else
            os << s.target << '\n';
    }
}

}  // namespace safl
