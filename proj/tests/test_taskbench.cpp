#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "safl/taskbench.hpp"

using namespace safl;

namespace {

Model train_full_batch(Model m, const Dataset& ds, double eta, int steps) {
    for (int k = 0; k < steps; ++k) m.params.axpy(-eta, gradient(m, ds.samples));
    return m;
}

// Normal equations for [x, 1] solved by Gauss-Jordan elimination.
std::vector<double> ols(const Dataset& ds) {
    const std::size_t k = ds.feature_dim + 1;
    std::vector<std::vector<double>> a(k, std::vector<double>(k + 1, 0.0));
    for (const auto& s : ds.samples) {
        std::vector<double> x = s.features;
        x.push_back(1.0);
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < k; ++j) a[i][j] += x[i] * x[j];
            a[i][k] += x[i] * s.target;
        }
    }
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < k; ++r)
            if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
        std::swap(a[c], a[piv]);
        for (std::size_t r = 0; r < k; ++r) {
            if (r == c) continue;
            const double f = a[r][c] / a[c][c];
            for (std::size_t j = c; j <= k; ++j) a[r][j] -= f * a[c][j];
        }
    }
    std::vector<double> w(k);
    for (std::size_t i = 0; i < k; ++i) w[i] = a[i][k] / a[i][i];
    return w;
}

double relative_gap(const ParamVector& a, const ParamVector& b) {
    return l2_norm(a - b) / std::max(1e-12, std::max(l2_norm(a), l2_norm(b)));
}

ParamVector finite_difference(const Model& m, std::span<const Sample> batch, double h = 1e-5) {
    ParamVector g(m.dim());
    for (std::size_t j = 0; j < m.dim(); ++j) {
        Model up = m;
        Model down = m;
        up.params[j] += h;
        down.params[j] -= h;
        g[j] = (loss(up, batch) - loss(down, batch)) / (2.0 * h);
    }
    return g;
}

}  // namespace

TEST_CASE("gen_classification") {
    RngStream rng(1);
    CHECK_THROWS_AS(gen_classification(3, 5, 0, 2.0, rng), Error);
    CHECK_THROWS_AS(gen_classification(3, 2, 30, 2.0, rng), Error);

    const Dataset ds = gen_classification(3, 5, 301, 2.0, rng);
    CHECK(ds.size() == 301);
    std::map<int, int> counts;
    for (const auto& s : ds.samples) {
        CHECK(s.features.size() == 5);
        ++counts[s.label];
    }
    for (int q = 0; q < 3; ++q) CHECK(std::abs(counts[q] - 301 / 3) <= 1);
}

TEST_CASE("separable classification is learnable by the reference trainer") {
    RngStream rng(2);
    const Dataset ds = gen_classification(2, 2, 200, 4.0, rng);
    const Model m = train_full_batch(Model::for_dataset(ds), ds, 0.1, 500);
    CHECK(test_error_rate(m, ds) <= 0.05);
}

TEST_CASE("indistinguishable classes give coin-flip error") {
    RngStream rng(3);
    const Dataset train = gen_classification(2, 2, 100, 0.0, rng);
    // Held-out error of a trained model, measured on a large fresh draw.
    const Dataset test = gen_classification(2, 2, 5000, 0.0, rng);
    const Model m = train_full_batch(Model::for_dataset(train), train, 0.1, 500);
    CHECK(std::abs(test_error_rate(m, test) - 0.5) <= 0.07);
    // Constant-zero model: every logit ties, argmax picks class 0.
    CHECK(std::abs(test_error_rate(Model::for_dataset(test), test) - 0.5) <= 0.07);
}

TEST_CASE("gen_regression and the OLS oracle") {
    RngStream rng(4);
    CHECK_THROWS_AS(gen_regression(3, 0, 0.1, rng), Error);

    const Dataset clean = gen_regression(4, 200, 0.0, rng);
    const auto w = ols(clean);
    Model m = Model::linear(4);
    for (std::size_t j = 0; j < w.size(); ++j) m.params[j] = w[j];
    CHECK(rmse(m, clean) <= 1e-6);

    const Dataset line = gen_regression(1, 2, 0.0, rng);
    const auto w2 = ols(line);
    Model m2 = Model::linear(1);
    m2.params = ParamVector{w2[0], w2[1]};
    CHECK(rmse(m2, line) <= 1e-9);

    // Same hidden model for train and test: draw once, split.
    const double sigma = 0.7;
    const Dataset noisy = gen_regression(5, 4000, sigma, rng);
    Dataset train = noisy.empty_like();
    Dataset test = noisy.empty_like();
    for (std::size_t i = 0; i < noisy.size(); ++i) (i % 2 ? test : train).samples.push_back(noisy.samples[i]);
    const auto w3 = ols(train);
    Model m3 = Model::linear(5);
    for (std::size_t j = 0; j < w3.size(); ++j) m3.params[j] = w3[j];
    const double r = rmse(m3, test);
    CHECK(r >= 0.8 * sigma);
    CHECK(r <= 1.2 * sigma);
}

TEST_CASE("partition_noniid") {
    RngStream rng(5);
    const Dataset ds = gen_classification(10, 10, 10000, 1.0, rng);
    CHECK_THROWS_WITH(partition_noniid(ds, 9, 0.5, rng), "fewer clients than groups");

    SUBCASE("default x: own-group fraction near one half") {
        const auto shards = partition_noniid(ds, 50, 0.5, rng);
        std::size_t own = 0;
        std::size_t total = 0;
        for (std::size_t c = 0; c < shards.size(); ++c)
            for (const auto& s : shards[c].samples) {
                ++total;
                if (static_cast<std::size_t>(s.label) == c % 10) ++own;
            }
        CHECK(total == ds.size());
        CHECK(std::abs(static_cast<double>(own) / static_cast<double>(total) - 0.5) <= 0.03);
    }
    SUBCASE("x = 1 sends every label to its group") {
        const auto shards = partition_noniid(ds, 20, 1.0, rng);
        for (std::size_t c = 0; c < shards.size(); ++c)
            for (const auto& s : shards[c].samples) CHECK(static_cast<std::size_t>(s.label) == c % 10);
    }
    SUBCASE("x = 1/z gives a uniform group histogram") {
        RngStream r2(6);
        const Dataset d3 = gen_classification(3, 3, 5000, 1.0, r2);
        const auto shards = partition_noniid(d3, 9, 1.0 / 3.0, r2);
        // Per label, the counts landing in each of the 3 groups.
        double chi2 = 0.0;
        for (int q = 0; q < 3; ++q) {
            std::vector<double> hist(3, 0.0);
            double n_q = 0.0;
            for (std::size_t c = 0; c < shards.size(); ++c)
                for (const auto& s : shards[c].samples)
                    if (s.label == q) {
                        hist[c % 3] += 1.0;
                        n_q += 1.0;
                    }
            for (double h : hist) chi2 += (h - n_q / 3.0) * (h - n_q / 3.0) / (n_q / 3.0);
        }
        // 3 labels x 2 degrees of freedom; 99th percentile of chi-square(6).
        CHECK(chi2 < 16.81);
    }
}

TEST_CASE("partitions assign every sample exactly once") {
    RngStream rng(7);
    Dataset ds = gen_classification(3, 4, 600, 1.0, rng);
    // Tag each sample so the multiset comparison is exact.
    for (std::size_t i = 0; i < ds.size(); ++i) ds.samples[i].features[3] = static_cast<double>(i);
    for (int mode = 0; mode < 2; ++mode) {
        const auto shards = mode == 0 ? partition_noniid(ds, 12, 0.5, rng) : partition_iid(ds, 12, rng);
        std::multiset<double> tags;
        for (const auto& sh : shards)
            for (const auto& s : sh.samples) tags.insert(s.features[3]);
        CHECK(tags.size() == ds.size());
        std::set<double> unique(tags.begin(), tags.end());
        CHECK(unique.size() == ds.size());
    }
}

TEST_CASE("gradient examples") {
    Model lin = Model::linear(1);
    const std::vector<Sample> one = {Sample{{1.0}, 0, 2.0, false}};
    CHECK(gradient(lin, one) == ParamVector{-2.0, -2.0});

    // Uniform logits, target class c: bias block is 1/z with -(z-1)/z at c.
    const std::size_t z = 4;
    Model sm = Model::softmax(3, z);
    const std::vector<Sample> cls = {Sample{{0.5, -1.0, 2.0}, 2, 0.0, false}};
    const ParamVector g = gradient(sm, cls);
    for (std::size_t q = 0; q < z; ++q) {
        const double expect = q == 2 ? -(static_cast<double>(z) - 1.0) / static_cast<double>(z) : 1.0 / static_cast<double>(z);
        CHECK(g[3 * z + q] == doctest::Approx(expect));
    }

    const std::vector<Sample> empty;
    CHECK_THROWS_AS(gradient(lin, empty), Error);
}

TEST_CASE("gradient matches central finite differences") {
    RngStream rng(8);
    const Dataset cls = gen_classification(3, 4, 40, 1.5, rng);
    const Dataset reg = gen_regression(4, 40, 0.3, rng);
    for (int point = 0; point < 10; ++point) {
        Model sm = Model::for_dataset(cls).with_params(gaussian_sample(rng, 0.0, 0.5, 15));
        CHECK(relative_gap(gradient(sm, cls.samples), finite_difference(sm, cls.samples)) <= 1e-5);
        Model lm = Model::for_dataset(reg).with_params(gaussian_sample(rng, 0.0, 0.5, 5));
        CHECK(relative_gap(gradient(lm, reg.samples), finite_difference(lm, reg.samples)) <= 1e-5);
    }
}

TEST_CASE("gradient vanishes at a minimizer") {
    RngStream rng(9);
    const Dataset reg = gen_regression(3, 50, 0.0, rng);
    const auto w = ols(reg);
    Model m = Model::linear(3);
    for (std::size_t j = 0; j < w.size(); ++j) m.params[j] = w[j];
    CHECK(l2_norm(gradient(m, reg.samples)) <= 1e-6);
}

TEST_CASE("test_error_rate") {
    RngStream rng(10);
    const Dataset ds = gen_classification(3, 3, 90, 3.0, rng);
    CHECK_THROWS_AS(test_error_rate(Model::softmax(3, 3), ds.empty_like()), Error);

    // A model whose weights copy each sample's label into a huge logit is
    // right by construction on a dataset built to match.
    Dataset exact = ds.empty_like();
    for (int q = 0; q < 3; ++q) {
        Sample s;
        s.label = q;
        s.features = {0.0, 0.0, 0.0};
        s.features[static_cast<std::size_t>(q)] = 1.0;
        exact.samples.push_back(s);
    }
    Model eye = Model::softmax(3, 3);
    for (std::size_t q = 0; q < 3; ++q) eye.params[q * 3 + q] = 10.0;
    CHECK(test_error_rate(eye, exact) == 0.0);

    const Model trained = train_full_batch(Model::for_dataset(ds), ds, 0.1, 300);
    std::size_t right = 0;
    for (const auto& s : ds.samples)
        if (trained.predict_class(s.features) == s.label) ++right;
    CHECK(test_error_rate(trained, ds) + static_cast<double>(right) / static_cast<double>(ds.size()) ==
          doctest::Approx(1.0));
}

TEST_CASE("attack_success_rate") {
    RngStream rng(11);
    const Dataset test = gen_classification(3, 6, 900, 2.0, rng);
    const TriggerSpec trig{{4, 5}, {6.0, 6.0}, 0};

    // Untrained model: ties resolve to class 0, which is the target.
    CHECK(attack_success_rate(Model::softmax(6, 3), test, trig) == 1.0);

    // A model that ignores the trigger coordinates: ASR is its rate of
    // predicting class 0 on non-target samples.
    const Model clean = train_full_batch(Model::for_dataset(test), test, 0.1, 300);
    Model blind = clean;
    for (std::size_t q = 0; q < 3; ++q) {
        blind.params[q * 6 + 4] = 0.0;
        blind.params[q * 6 + 5] = 0.0;
    }
    std::size_t eligible = 0;
    std::size_t to_target = 0;
    for (const auto& s : test.samples) {
        if (s.label == 0) continue;
        ++eligible;
        if (blind.predict_class(s.features) == 0) ++to_target;
    }
    // Zeroed weights make the trigger values irrelevant to the logits.
    CHECK(attack_success_rate(blind, test, trig) ==
          doctest::Approx(static_cast<double>(to_target) / static_cast<double>(eligible)));

    // Trained only on triggered copies relabelled to the target.
    Dataset poisoned = test.empty_like();
    for (const auto& s : test.samples) poisoned.samples.push_back(embed_trigger(s, trig));
    Dataset mixed = test;
    mixed.samples.insert(mixed.samples.end(), poisoned.samples.begin(), poisoned.samples.end());
    const Model bd = train_full_batch(Model::for_dataset(mixed), mixed, 0.1, 1000);
    CHECK(attack_success_rate(bd, test, trig) >= 0.95);

    Dataset all_target = test.empty_like();
    for (const auto& s : test.samples)
        if (s.label == 0) all_target.samples.push_back(s);
    CHECK_THROWS_WITH(attack_success_rate(clean, all_target, trig), "undefined ASR");
}

TEST_CASE("rmse") {
    Dataset ds{TaskKind::regression, 2, 0, {}};
    for (int i = 0; i < 5; ++i) ds.samples.push_back(Sample{{double(i), 1.0}, 0, -3.0, false});
    CHECK(rmse(Model::linear(2), ds) == doctest::Approx(3.0));
    Model perfect = Model::linear(2);
    perfect.params[2] = -3.0;
    CHECK(rmse(perfect, ds) == 0.0);
    CHECK_THROWS_AS(rmse(perfect, ds.empty_like()), Error);
}

TEST_CASE("embed_trigger") {
    const Sample s{{1.0, 2.0}, 1, 0.0, false};
    const TriggerSpec t{{0}, {9.0}, 0};
    const Sample e = embed_trigger(s, t);
    CHECK(e.features == std::vector<double>{9.0, 2.0});
    CHECK(e.label == 0);
    CHECK(e.triggered);
    CHECK(embed_trigger(s, t, false).label == 1);

    const Sample none = embed_trigger(s, TriggerSpec{{}, {}, 0}, false);
    CHECK(none.features == s.features);

    const Sample twice = embed_trigger(e, t);
    CHECK(twice.features == e.features);
    CHECK(twice.label == e.label);

    CHECK_THROWS_AS(embed_trigger(s, TriggerSpec{{2}, {1.0}, 0}), Error);
    CHECK_THROWS_AS(embed_trigger(s, TriggerSpec{{0, 0}, {1.0, 2.0}, 0}), Error);
}

TEST_CASE("embed_trigger touches only the listed indices") {
    RngStream rng(12);
    for (int k = 0; k < 100; ++k) {
        Sample s;
        s.features = gaussian_sample(rng, 0, 1, 8).values();
        const TriggerSpec t{{1, 6}, {rng.normal(0, 3), rng.normal(0, 3)}, 2};
        const Sample e = embed_trigger(s, t);
        for (std::size_t j = 0; j < 8; ++j) {
            if (j == 1 || j == 6) continue;
            CHECK(e.features[j] == s.features[j]);
        }
        CHECK(embed_trigger(e, t).features == e.features);
    }
}

TEST_CASE("csv dump has a header and one row per sample") {
    RngStream rng(13);
    const Dataset ds = gen_classification(2, 2, 5, 1.0, rng);
    std::ostringstream os;
    write_csv(os, ds);
    const std::string text = os.str();
    CHECK(text.rfind("x0,x1,label\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 6);
}
