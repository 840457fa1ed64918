#include "doctest.h"

#include <cmath>
#include <random>
#include <stdexcept>

#include "dopobc/equity.hpp"
#include "dopobc/register_attention.hpp"

using namespace dopobc;
using namespace dopobc::equity;

namespace {

ObjectStats stats(double size, double persistence, double attn, double conf) {
    ObjectStats o;
    o.size = size;
    o.persistence = persistence;
    o.attn_share = attn;
    o.confidence = conf;
    return o;
}

numerics::EmaGaussianState density(std::vector<double> mean, std::vector<double> var) {
    numerics::EmaGaussianState s;
    s.mean = std::move(mean);
    s.variance = std::move(var);
    s.count = 1;
    return s;
}

}  // namespace

TEST_CASE("normalize_object_stats") {
    const auto single = normalize_object_stats(std::vector<ObjectStats>{stats(3, 4, 0.5, 0.9)});
    CHECK(single.size == std::vector<double>{0});
    CHECK(single.persistence == std::vector<double>{0});
    CHECK(single.attention == std::vector<double>{0});

    const auto sized = normalize_object_stats(
        std::vector<ObjectStats>{stats(10, 1, 0, 1), stats(30, 1, 0, 1), stats(50, 1, 0, 1)});
    CHECK(std::abs(sized.size[0]) < 1e-8);
    CHECK(std::abs(sized.size[1] - 0.5) < 1e-8);
    CHECK(std::abs(sized.size[2] - 1.0) < 1e-8);

    const auto same = normalize_object_stats(std::vector<ObjectStats>(4, stats(2, 2, 0.2, 0.7)));
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(same.size[k] == 0.0);
        CHECK(same.persistence[k] == 0.0);
        CHECK(same.attention[k] == 0.0);
    }
    CHECK_THROWS_AS(normalize_object_stats(std::vector<ObjectStats>{}), std::invalid_argument);
    CHECK_THROWS_AS(normalize_object_stats(std::vector<ObjectStats>{stats(1, 1, 1.5, 0.5)}), std::invalid_argument);
}

TEST_CASE("dominance_score") {
    const DominanceWeights defaults{0.5, 0.25, 0.25};
    CHECK(dominance_score(1, 1, 1, defaults) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(dominance_score(1, 1, 1, DominanceWeights{0.2, 0.3, 0.5}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(dominance_score(0, 0, 0, defaults) == 0.0);
    CHECK(dominance_score(0.8, 0.4, 0.2, defaults) == doctest::Approx(0.55).epsilon(1e-15));
    CHECK_THROWS_AS(dominance_score(0.5, 0.5, 0.5, DominanceWeights{0.5, 0.5, 0.5}), std::invalid_argument);
    CHECK_THROWS_AS(dominance_score(0.5, 0.5, 0.5, DominanceWeights{1.5, -0.25, -0.25}), std::invalid_argument);
}

TEST_CASE("dominant_penalty") {
    CHECK(dominant_penalty(0.0, 1.0) == 1.0);
    CHECK(dominant_penalty(0.7, 0.0) == 1.0);
    CHECK(std::abs(dominant_penalty(1.0, 1.0) - 0.367879) < 1e-6);
    CHECK_THROWS_AS(dominant_penalty(0.5, -1.0), std::invalid_argument);

    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const double a = u(rng);
        const double b = u(rng);
        const double lambda = 0.01 + 3.0 * u(rng);
        if (a < b) CHECK(dominant_penalty(a, lambda) > dominant_penalty(b, lambda));
        const double p = dominant_penalty(a, lambda);
        CHECK(p > 0.0);
        CHECK(p <= 1.0);
    }
}

TEST_CASE("rarity_score") {
    const auto d = density({0.0, 0.0}, {1.0, 1.0});
    CHECK(rarity_score(std::vector<double>{0.0, 0.0}, d, 1.0, 2.0) == 0.0);
    // Distance 10 clamps at r_max.
    CHECK(rarity_score(std::vector<double>{6.0, 8.0}, d, 1.0, 2.0) == 2.0);
    CHECK(rarity_score(std::vector<double>{0.3, 0.4}, d, 1.0, 2.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(rarity_score(std::vector<double>{0.3, 0.4}, d, 0.25, 2.0) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK_THROWS_AS(rarity_score(std::vector<double>{0.0}, numerics::EmaGaussianState{}, 1.0, 2.0),
                    std::invalid_argument);
}

TEST_CASE("outlier_boost") {
    CHECK(outlier_boost(1.7, 0.4, 0.3, 0.5) == 0.0);
    CHECK(outlier_boost(2.0, 0.9, 0.3, 0.5) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(outlier_boost(1.0, 0.5, 0.3, 0.5) == doctest::Approx(0.3).epsilon(1e-15));

    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 5000; ++trial) {
        const double r = 2.0 * u(rng);
        const double conf = u(rng);
        const double b = outlier_boost(r, conf, 0.3, 0.5);
        CHECK(b >= 0.0);
        CHECK(b <= 0.3 * 2.0);
        if (conf < 0.5) CHECK(b == 0.0);
    }
}

TEST_CASE("row_modulation") {
    EquityParams p;
    p.alpha0 = 1.0;
    p.sigma0 = 0.05;
    p.alpha_floor = 0.1;
    p.sigma_min = 0.005;

    SUBCASE("unmapped rows keep defaults") {
        const auto m = row_modulation(RowObjectMap{{-1, -1}}, std::vector<double>{0.2}, std::vector<double>{0.6}, p);
        CHECK(m.alphas == std::vector<double>{1.0, 1.0});
        CHECK(m.sigmas == std::vector<double>{0.05, 0.05});
    }
    SUBCASE("penalty and boost combine") {
        const auto m = row_modulation(RowObjectMap{{0, -1}}, std::vector<double>{std::exp(-1.0)},
                                      std::vector<double>{0.6}, p);
        // e^-1 * 1.6 evaluated at 40 digits.
        CHECK(std::abs(m.alphas[0] - 0.5886071058743077) < 1e-6);
        CHECK(std::abs(m.sigmas[0] - 0.03125) < 1e-6);
        CHECK(m.alphas[1] == 1.0);
    }
    SUBCASE("alpha floor engages") {
        const auto m = row_modulation(RowObjectMap{{0}}, std::vector<double>{0.01}, std::vector<double>{0.0}, p);
        CHECK(m.alphas[0] == doctest::Approx(0.1));
    }
    SUBCASE("sigma stays in bounds") {
        EquityParams q = p;
        q.sigma_min = 0.04;
        const auto m = row_modulation(RowObjectMap{{0}}, std::vector<double>{1.0}, std::vector<double>{0.6}, q);
        CHECK(m.sigmas[0] == 0.04);
    }
    SUBCASE("unknown object") {
        CHECK_THROWS_AS(row_modulation(RowObjectMap{{0, 3}}, std::vector<double>{1, 1}, std::vector<double>{0, 0}, p),
                        std::invalid_argument);
        CHECK_THROWS_AS(row_modulation(RowObjectMap{{-2}}, std::vector<double>{1}, std::vector<double>{0}, p),
                        std::invalid_argument);
    }
}

TEST_CASE("sigma is non-increasing in the boost") {
    EquityParams p;
    double prev = 1e9;
    for (double b = 0.0; b <= 0.6 + 1e-12; b += 0.01) {
        const auto m = row_modulation(RowObjectMap{{0}}, std::vector<double>{0.8}, std::vector<double>{b}, p);
        CHECK(m.sigmas[0] <= prev);
        CHECK(m.sigmas[0] >= p.sigma_min);
        CHECK(m.sigmas[0] <= p.sigma0);
        CHECK(m.alphas[0] >= p.alpha_floor);
        prev = m.sigmas[0];
    }
}

TEST_CASE("identity configuration leaves every row at the defaults") {
    EquityParams p;
    p.lambda = 0.0;
    p.gamma = 0.0;
    EquityContext ctx(p);
    std::vector<ObjectStats> window{stats(0.6, 20, 0.7, 0.9), stats(0.1, 3, 0.1, 0.8), stats(0.05, 2, 0.0, 0.2)};
    for (int step = 0; step < 5; ++step) {
        const auto sig = ctx.step(window);
        const auto m = ctx.modulate(RowObjectMap{{0, 1, 2, -1, 0, 1}}, sig);
        for (std::size_t i = 0; i < 6; ++i) {
            CHECK(m.alphas[i] == p.alpha0);
            CHECK(m.sigmas[i] == p.sigma0);
        }
    }

    std::mt19937_64 rng(47);
    std::uniform_real_distribution<double> score(-3.0, 3.0);
    const std::size_t n = 6;
    std::vector<double> data(n * n);
    for (double& v : data) v = score(rng);
    const Matrix s(n, n, data);
    const auto m = ctx.modulate(RowObjectMap{{0, 1, 2, -1, 0, 1}}, ctx.step(window));
    const auto modulated = compose_attention({s, m.alphas, m.sigmas});
    const auto plain = compose_attention({s, std::vector<double>(n, p.alpha0), std::vector<double>(n, p.sigma0)});
    CHECK(max_abs_diff(modulated.attention, plain.attention) <= 1e-12);
}

TEST_CASE("attention_share") {
    const Matrix uniform(4, 4, 0.25);
    const auto halves = attention_share(uniform, RowObjectMap{{0, 0, 1, 1}}, 2);
    CHECK(halves[0] == doctest::Approx(0.5));
    CHECK(halves[1] == doctest::Approx(0.5));

    const auto partial = attention_share(uniform, RowObjectMap{{0, 0, -1, -1}}, 2);
    CHECK(partial[0] == doctest::Approx(0.5));
    CHECK(partial[1] == 0.0);

    CHECK_THROWS_AS(attention_share(Matrix(3, 3), RowObjectMap{{0, -1, -1}}, 1), std::invalid_argument);
    CHECK_THROWS_AS(attention_share(uniform, RowObjectMap{{0, 0, 1}}, 2), std::invalid_argument);
}

TEST_CASE("attention_share sums to at most one, exactly one when fully mapped") {
    std::mt19937_64 rng(53);
    std::uniform_real_distribution<double> score(-2.0, 2.0);
    std::uniform_int_distribution<int> obj(-1, 3);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + static_cast<std::size_t>(trial % 20);
        std::vector<double> data(n * n);
        for (double& v : data) v = score(rng);
        const auto a = compose_attention({Matrix(n, n, data), std::vector<double>(n, 1.0), std::vector<double>(n, 0.3)});
        RowObjectMap cols;
        bool full = trial % 2 == 0;
        for (std::size_t j = 0; j < n; ++j) cols.assignment.push_back(full ? static_cast<int>(j % 4) : obj(rng));
        const auto shares = attention_share(a.attention, cols, 4);
        double total = 0.0;
        for (double s : shares) {
            CHECK(s >= 0.0);
            total += s;
        }
        CHECK(total <= 1.0 + 1e-12);
        if (full) CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("rescale_proposals") {
    CHECK(rescale_proposals(std::vector<double>{0.3, 0.9}, std::vector<double>{1, 1}, std::vector<double>{0, 0}) ==
          std::vector<double>{0.3, 0.9});
    const auto r = rescale_proposals(std::vector<double>{0.8}, std::vector<double>{0.5}, std::vector<double>{0.6});
    CHECK(r[0] == doctest::Approx(0.64).epsilon(1e-15));
    CHECK(rescale_proposals({}, {}, {}).empty());
    CHECK_THROWS_AS(rescale_proposals(std::vector<double>{1.0}, {}, {}), std::invalid_argument);
}

TEST_CASE("EquityParams validation") {
    EquityParams p;
    CHECK_NOTHROW(p.validate());
    EquityParams bad = p;
    bad.weights = {0.6, 0.25, 0.25};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = p;
    bad.sigma_min = 0.1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = p;
    bad.tau_r = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = p;
    bad.lambda = -0.5;
    CHECK_THROWS_AS(EquityContext{bad}, std::invalid_argument);
}

TEST_CASE("EquityContext signals") {
    EquityParams p;
    EquityContext ctx(p);
    std::vector<ObjectStats> window{stats(0.6, 24, 0.8, 0.95), stats(0.1, 4, 0.05, 0.9), stats(0.08, 3, 0.02, 0.3)};
    EquitySignals sig;
    for (int step = 0; step < 10; ++step) sig = ctx.step(window);
    CHECK(ctx.density().count == 30);
    // The largest object carries the full dominance score.
    CHECK(sig.dominance[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(sig.penalties[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-6));
    CHECK(sig.penalties[1] > sig.penalties[0]);
    CHECK(sig.boosts[2] == 0.0);  // below tau_p
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(sig.rarity[k] >= 0.0);
        CHECK(sig.rarity[k] <= p.r_max);
        CHECK(sig.boosts[k] <= p.gamma * p.r_max);
        CHECK(sig.routed_scores[k] == doctest::Approx(window[k].confidence * sig.penalties[k] * (1 + sig.boosts[k])));
    }

    ObjectStats custom = stats(0.2, 1, 0.0, 0.9);
    custom.feature = {5.0, 5.0};
    EquityContext other(p);
    const auto s2 = other.step(std::vector<ObjectStats>{custom});
    CHECK(other.density().dimension() == 2);
    CHECK(s2.rarity[0] == 0.0);
}

TEST_CASE("PersistenceTracker counts frames in a sliding window") {
    PersistenceTracker t(3);
    t.observe_frame(std::vector<int>{1, 2});
    t.observe_frame(std::vector<int>{1});
    t.observe_frame(std::vector<int>{1, 3, 3});
    CHECK(t.persistence(1) == 3.0);
    CHECK(t.persistence(2) == 1.0);
    CHECK(t.persistence(3) == 1.0);
    t.observe_frame(std::vector<int>{3});
    CHECK(t.frames() == 3);
    CHECK(t.persistence(2) == 0.0);
    CHECK(t.persistence(1) == 2.0);
    CHECK(t.persistence(3) == 2.0);
    CHECK(t.persistence(42) == 0.0);
    CHECK_THROWS_AS(PersistenceTracker(0), std::invalid_argument);
}

TEST_CASE("operation counts grow linearly in proposals and rows") {
    EquityParams p;
    auto count = [&](std::size_t proposals, std::size_t rows) {
        EquityContext ctx(p);
        std::vector<ObjectStats> window;
        for (std::size_t k = 0; k < proposals; ++k) window.push_back(stats(1.0 + k, 1.0 + k, 0.0, 0.9));
        RowObjectMap map;
        for (std::size_t i = 0; i < rows; ++i) map.assignment.push_back(static_cast<int>(i % proposals));
        OpCounter c;
        const auto sig = ctx.step(window, &c);
        ctx.modulate(map, sig, &c);
        attention_share_from_columns(std::vector<double>(rows, 1.0), map, proposals, &c);
        return static_cast<double>(c.ops);
    };
    // Doubling both inputs from a base point doubles the variable part.
    const double base = count(4, 32);
    const double p2 = count(8, 32) - base;
    const double p4 = count(16, 32) - base;
    CHECK(p4 == doctest::Approx(3.0 * p2));
    const double n2 = count(4, 64) - base;
    const double n4 = count(4, 128) - base;
    CHECK(n4 == doctest::Approx(3.0 * n2));
}
