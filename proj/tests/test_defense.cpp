#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "safl/defense.hpp"

using namespace safl;

namespace {

// History with two rounds of global models and the given anchors for
// clients 1..n-1; client 0 is the fresh uploader.
HistoryStore seeded_history(const std::vector<ParamVector>& anchors) {
    HistoryStore h(anchors.size() + 1, 3);
    const std::size_t d = anchors.front().size();
    h.globals.record(0, ParamVector(d));
    h.globals.record(1, ParamVector(d, 0.5));
    for (std::size_t k = 0; k < anchors.size(); ++k) h.client(k + 1).update(anchors[k], 0);
    return h;
}

std::vector<double> column(const std::vector<ParamVector>& vs, std::size_t j) {
    std::vector<double> c;
    for (const auto& v : vs) c.push_back(v[j]);
    return c;
}

}  // namespace

TEST_CASE("clip_l2") {
    CHECK(clip_l2({3, 4}, 10) == ParamVector{3, 4});
    CHECK(clip_l2({3, 4}, 5) == ParamVector{3, 4});
    const ParamVector c = clip_l2({6, 8}, 5);
    CHECK(c[0] == doctest::Approx(3.0));
    CHECK(c[1] == doctest::Approx(4.0));
    CHECK_THROWS_AS(clip_l2({1, 1}, 0.0), Error);

    RngStream rng(1);
    for (int k = 0; k < 200; ++k) {
        const ParamVector g = gaussian_sample(rng, 0, 30, 5);
        const double G = 1.0 + 50.0 * rng.uniform01();
        const ParamVector out = clip_l2(g, G);
        CHECK(l2_norm(out) <= G * (1 + 1e-12));
        CHECK(dot(out, g) / (l2_norm(out) * l2_norm(g)) == doctest::Approx(1.0));
    }
}

TEST_CASE("lipschitz_factor") {
    CHECK(lipschitz_factor({3, 4}, {0, 0}, {1, 0}, {0, 0}) == doctest::Approx(5.0));
    CHECK(lipschitz_factor({1, 2}, {1, 2}, {1, 0}, {0, 3}) == 0.0);
    CHECK(lipschitz_factor({1, 2}, {1, 2}, {1, 0}, {1, 0}) == 0.0);
    CHECK(std::isinf(lipschitz_factor({1, 2}, {1, 3}, {1, 0}, {1, 0})));
    CHECK_THROWS_AS(lipschitz_factor({1}, {1, 2}, {1, 0}, {1, 0}), Error);
}

TEST_CASE("first contacts are clipped and accepted without touching Q") {
    HistoryStore h(3, 3);
    h.globals.record(0, ParamVector(2));
    SecureAflConfig cfg;
    for (ClientId i = 0; i < 3; ++i) {
        const RoundDecision d = secureafl_round(i, ParamVector{300, 400}, 0, i, h, cfg);
        CHECK(d.first_contact);
        CHECK(d.accepted);
        CHECK_FALSE(d.lambda.has_value());
        CHECK(h.lipschitz.empty());
        h.globals.record(i + 1, ParamVector(2, double(i + 1)));
    }
    // The clipped update (norm 50) is what the aggregate sees on round 0.
    HistoryStore g(1, 3);
    g.globals.record(0, ParamVector(2));
    const RoundDecision d = secureafl_round(0, ParamVector{300, 400}, 0, 0, g, cfg);
    CHECK(l2_norm(d.aggregate) == doctest::Approx(50.0));
    // The record keeps the raw upload.
    CHECK(g.client(0).last_update == ParamVector{300, 400});
}

TEST_CASE("filter path: lambda enters Q before the decision") {
    HistoryStore h(2, 3);
    h.globals.record(0, ParamVector{0, 0});
    h.globals.record(1, ParamVector{1, 0});
    h.globals.record(2, ParamVector{2, 0});
    SecureAflConfig cfg;
    h.lipschitz.append(1.0);
    h.lipschitz.append(2.0);
    h.lipschitz.append(3.0);
    h.lipschitz.append(4.0);
    h.client(0).update(ParamVector{0, 0}, 0);

    // lambda = ||(3,4)|| / ||(1,0)|| = 5; Q becomes {1,2,3,4,5}, p80 = 4.
    RoundDecision d = secureafl_round(0, ParamVector{3, 4}, 1, 2, h, cfg);
    CHECK(*d.lambda == doctest::Approx(5.0));
    CHECK(*d.threshold == doctest::Approx(4.0));
    CHECK_FALSE(d.accepted);
    CHECK(h.lipschitz.size() == 5);
    // Anchor refreshed even on reject.
    CHECK(h.client(0).last_update == ParamVector{3, 4});
    CHECK(h.client(0).last_base_round == 1);

    // A repeated base model with a changed update is the +inf sentinel.
    d = secureafl_round(0, ParamVector{0, 1}, 1, 2, h, cfg);
    CHECK(std::isinf(*d.lambda));
    CHECK_FALSE(d.accepted);
    CHECK(h.lipschitz.size() == 5);
    // Rejected with no other seen client: zero aggregate.
    CHECK(d.aggregate == ParamVector{0, 0});

    CHECK_THROWS_WITH(secureafl_round(0, ParamVector{0, 1}, 9, 10, h, cfg), "unknown base model: round 9");
}

TEST_CASE("accepted implies lambda at most the threshold") {
    RngStream rng(2);
    HistoryStore h(5, 3);
    h.globals.record(0, ParamVector(3));
    SecureAflConfig cfg;
    ParamVector w(3);
    for (Round t = 0; t < 300; ++t) {
        const ClientId i = rng.uniform_index(0, 4);
        const Round base = t - rng.uniform_index(0, std::min<Round>(t, 4));
        const double scale = rng.uniform01() < 0.1 ? 50.0 : 1.0;
        const ParamVector g = h.globals.at(base) + gaussian_sample(rng, 0, scale, 3);
        const RoundDecision d = secureafl_round(i, g, base, t, h, cfg);
        if (d.accepted && d.lambda && d.threshold) CHECK(*d.lambda <= *d.threshold);
        CHECK(d.aggregate.all_finite());
        w.axpy(-cfg.eta, d.aggregate);
        h.globals.record(t + 1, w);
    }
}

TEST_CASE("median vs mean aggregation") {
    SecureAflConfig cfg;
    {
        HistoryStore h = seeded_history({{3, 0}, {30, 0}});
        const RoundDecision d = secureafl_round(0, ParamVector{0, 0}, 1, 1, h, cfg);
        CHECK(d.aggregate[0] == doctest::Approx(3.0));
        CHECK(d.estimates_used == 2);
        CHECK(d.fallbacks == 2);
    }
    {
        HistoryStore h = seeded_history({{3, 0}, {30, 0}});
        const RoundDecision d = variant_round(SecureAflVariant::mean_aggregation, 0, ParamVector{0, 0}, 1, 1, h, cfg);
        CHECK(d.aggregate[0] == doctest::Approx(11.0));
    }
}

TEST_CASE("variant IV never uses the received update") {
    SecureAflConfig cfg;
    HistoryStore a = seeded_history({{1, 1}, {2, 2}, {4, 4}});
    HistoryStore b = seeded_history({{1, 1}, {2, 2}, {4, 4}});
    const RoundDecision da = variant_round(SecureAflVariant::estimates_only, 0, ParamVector{0, 0}, 1, 1, a, cfg);
    const RoundDecision db = variant_round(SecureAflVariant::estimates_only, 0, ParamVector{1e6, -1e6}, 1, 1, b, cfg);
    CHECK(da.aggregate == db.aggregate);
    CHECK(da.aggregate == ParamVector{2, 2});
}

TEST_CASE("variant II applies accepted updates directly and skips rejected ones") {
    SecureAflConfig cfg;
    HistoryStore h = seeded_history({{1, 1}, {2, 2}});
    RoundDecision d = variant_round(SecureAflVariant::direct_apply, 0, ParamVector{5, 7}, 1, 1, h, cfg);
    CHECK(d.accepted);
    CHECK(d.apply);
    CHECK(d.aggregate == ParamVector{5, 7});
    CHECK(d.estimates_used == 0);

    h.globals.record(2, ParamVector{0.5, 0.5});
    d = variant_round(SecureAflVariant::direct_apply, 0, ParamVector{9, 9}, 1, 2, h, cfg);
    CHECK_FALSE(d.accepted);  // same base, new update: +inf
    CHECK_FALSE(d.apply);
}

TEST_CASE("variant III never rejects") {
    SecureAflConfig cfg;
    HistoryStore h = seeded_history({{1, 1}, {2, 2}});
    h.client(0).update(ParamVector{0, 0}, 1);
    const RoundDecision d = variant_round(SecureAflVariant::no_rejection, 0, ParamVector{9, 9}, 1, 1, h, cfg);
    CHECK(std::isinf(*d.lambda));
    CHECK(d.accepted);
    CHECK(d.aggregate == ParamVector{2, 2});  // median of {1, 2, 9}
}

TEST_CASE("aggregate is exact on a quadratic with conjugate curvature") {
    // f_k(w) = 0.5 w^T A w + b_k^T w; every client shares A = diag(1..d).
    const std::size_t d = 4;
    const std::size_t n = 5;
    RngStream rng(3);
    std::vector<ParamVector> b;
    for (std::size_t k = 0; k < n; ++k) b.push_back(gaussian_sample(rng, 0, 1, d));
    auto A = [&](const ParamVector& v) {
        ParamVector o(d);
        for (std::size_t j = 0; j < d; ++j) o[j] = double(j + 1) * v[j];
        return o;
    };
    auto grad = [&](std::size_t k, const ParamVector& w) { return A(w) + b[k]; };

    HistoryStore h(n, 3);
    const ParamVector w0 = gaussian_sample(rng, 0, 1, d);
    // w^1 differs from w^0 in the first three coordinates only, which the
    // coordinate (hence A-conjugate) pairs span.
    ParamVector w1 = w0;
    for (std::size_t j = 0; j < 3; ++j) w1[j] += rng.normal(0, 1);
    h.globals.record(0, w0);
    h.globals.record(1, w1);
    for (std::size_t k = 1; k < n; ++k) {
        h.client(k).update(grad(k, w0), 0);
        for (std::size_t j = 0; j < 3; ++j) {
            ParamVector e(d);
            e[j] = 1.0;
            h.buffers.push(k, e, A(e));
        }
    }
    SecureAflConfig cfg;
    const RoundDecision dec = secureafl_round(0, grad(0, w1), 1, 1, h, cfg);
    std::vector<ParamVector> truth;
    for (std::size_t k = 0; k < n; ++k) truth.push_back(grad(k, w1));
    CHECK(l2_norm(dec.aggregate - coordinate_median(truth)) <= 1e-4);
}

TEST_CASE("scaling the received update moves the aggregate only within the input range") {
    RngStream rng(4);
    SecureAflConfig cfg;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<ParamVector> anchors;
        for (int k = 0; k < 4; ++k) anchors.push_back(gaussian_sample(rng, 0, 1, 3));
        const ParamVector g = gaussian_sample(rng, 0, 1, 3);
        for (double c : {1.0, 10.0, 1e4}) {
            HistoryStore h = seeded_history(anchors);
            const RoundDecision d = secureafl_round(0, c * g, 1, 1, h, cfg);
            std::vector<ParamVector> inputs = anchors;
            inputs.push_back(clip_l2(c * g, cfg.clip_threshold));
            for (std::size_t j = 0; j < 3; ++j) {
                const auto col = column(inputs, j);
                CHECK(d.aggregate[j] >= *std::min_element(col.begin(), col.end()));
                CHECK(d.aggregate[j] <= *std::max_element(col.begin(), col.end()));
            }
        }
        // Once rejected, the factor has no effect at all.
        std::vector<ParamVector> aggs;
        for (double c : {2.0, 100.0}) {
            HistoryStore h = seeded_history(anchors);
            h.client(0).update(ParamVector(3), 1);
            const RoundDecision d = secureafl_round(0, c * g, 1, 1, h, cfg);
            CHECK_FALSE(d.accepted);
            aggs.push_back(d.aggregate);
        }
        CHECK(aggs[0] == aggs[1]);
    }
}

TEST_CASE("median aggregate is bracketed by benign estimates") {
    RngStream rng(5);
    SecureAflConfig cfg;
    for (int trial = 0; trial < 100; ++trial) {
        // 11 seen clients besides the (rejected) uploader, 4 adversarial.
        std::vector<ParamVector> anchors;
        for (int k = 0; k < 7; ++k) anchors.push_back(gaussian_sample(rng, 0, 1, 3));
        for (int k = 0; k < 4; ++k) anchors.push_back(gaussian_sample(rng, 0, 1e6, 3));
        HistoryStore h = seeded_history(anchors);
        h.client(0).update(ParamVector(3), 1);
        const RoundDecision d = secureafl_round(0, ParamVector(3, 1e9), 1, 1, h, cfg);
        CHECK_FALSE(d.accepted);
        for (std::size_t j = 0; j < 3; ++j) {
            const auto col = column(std::vector<ParamVector>(anchors.begin(), anchors.begin() + 7), j);
            CHECK(d.aggregate[j] >= *std::min_element(col.begin(), col.end()));
            CHECK(d.aggregate[j] <= *std::max_element(col.begin(), col.end()));
        }
    }
}

TEST_CASE("record keeps the base round of real updates only") {
    SecureAflConfig cfg;
    HistoryStore h = seeded_history({{1, 1}, {2, 2}});
    h.globals.record(2, ParamVector{1, 1});
    secureafl_round(0, ParamVector{1, 0}, 1, 2, h, cfg);
    CHECK(h.client(0).last_base_round == 1);
    // Estimating clients 1 and 2 does not move their records.
    CHECK(h.client(1).last_base_round == 0);
    CHECK(h.client(2).last_base_round == 0);
}

TEST_CASE("asyncsgd_round") {
    ParamVector w{1, 1};
    w += asyncsgd_round({2, -2}, 0, 0.1);
    CHECK(w[0] == doctest::Approx(0.8));
    CHECK(w[1] == doctest::Approx(1.2));
    CHECK(asyncsgd_round({0, 0}, 0, 0.1) == ParamVector{0, 0});
    const ParamVector a{1, 2};
    const ParamVector b{-3, 5};
    CHECK(l2_norm(asyncsgd_round(a, 0, 0.1) + asyncsgd_round(b, 1, 0.1) - asyncsgd_round(a + b, 0, 0.1)) <= 1e-15);
}

TEST_CASE("kardam_round") {
    HistoryStore h(2, 3);
    h.globals.record(0, ParamVector{0, 0});
    h.globals.record(1, ParamVector{1, 0});
    RoundDecision d = kardam_round(ParamVector{300, 400}, 0, 0, 1, h, 50.0);
    CHECK(d.first_contact);
    CHECK(d.accepted);
    CHECK(l2_norm(d.aggregate) == doctest::Approx(50.0));

    d = kardam_round(ParamVector{1, 1}, 0, 0, 1, h, 50.0);
    CHECK(std::isinf(*d.lambda));
    CHECK_FALSE(d.accepted);
    CHECK_FALSE(d.apply);

    // Median threshold: Q = {1, 3} plus the new lambda.
    h.lipschitz.append(1.0);
    h.lipschitz.append(3.0);
    h.client(1).update(ParamVector{0, 0}, 0);
    d = kardam_round(ParamVector{2, 0}, 1, 1, 1, h, 50.0);
    CHECK(*d.lambda == doctest::Approx(2.0));
    CHECK(*d.threshold == doctest::Approx(2.0));
    CHECK(d.accepted);
    CHECK(d.aggregate == ParamVector{2, 0});
}

TEST_CASE("basgd_round") {
    SUBCASE("one bucket equals asyncsgd") {
        BasgdState s(1);
        for (int k = 0; k < 5; ++k) {
            const ParamVector g{double(k), 1.0};
            const auto out = basgd_round(g, ClientId(k), s, 0.1);
            REQUIRE(out.has_value());
            CHECK(*out == asyncsgd_round(g, 0, 0.1));
        }
    }
    SUBCASE("three buckets wait until all are touched") {
        BasgdState s(3);
        CHECK_FALSE(basgd_round({1, 1}, 0, s, 1.0).has_value());
        CHECK_FALSE(basgd_round({1, 1}, 3, s, 1.0).has_value());  // same bucket as 0
        CHECK_FALSE(basgd_round({5, 5}, 1, s, 1.0).has_value());
        const auto out = basgd_round({100, 100}, 5, s, 1.0);
        REQUIRE(out.has_value());
        CHECK(*out == ParamVector{-5, -5});
        // Buckets reset after emitting.
        CHECK_FALSE(basgd_round({1, 1}, 0, s, 1.0).has_value());
    }
    CHECK_THROWS_AS(BasgdState(0), Error);
}

TEST_CASE("config validation and names") {
    SecureAflConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.alpha = 0.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = SecureAflConfig{};
    cfg.epsilon = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = SecureAflConfig{};
    cfg.clip_threshold = -1;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = SecureAflConfig{};
    cfg.eta = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);

    for (auto k : {DefenseKind::secureafl, DefenseKind::asyncsgd, DefenseKind::kardam, DefenseKind::basgd})
        CHECK(defense_from_string(to_string(k)) == k);
    for (auto v : {SecureAflVariant::full, SecureAflVariant::mean_aggregation, SecureAflVariant::direct_apply,
                   SecureAflVariant::no_rejection, SecureAflVariant::estimates_only})
        CHECK(variant_from_string(to_string(v)) == v);
    CHECK_THROWS_AS(defense_from_string("krum"), Error);
}

TEST_CASE("defense rules are cloneable strategies") {
    DefenseSettings s;
    for (auto k : {DefenseKind::secureafl, DefenseKind::asyncsgd, DefenseKind::kardam, DefenseKind::basgd}) {
        s.kind = k;
        const auto rule = make_defense(s);
        CHECK(rule->name() == to_string(k));
        CHECK(rule->clone()->name() == rule->name());
        CHECK(rule->filters() == (k == DefenseKind::secureafl || k == DefenseKind::kardam));
    }
}
