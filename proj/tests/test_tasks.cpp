#include <cmath>

#include "attnlab/tasks.hpp"
#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace attnlab;

TEST_CASE("collision oracle") {
    CollisionConfig cfg{32, 2, 4, 1};
    std::vector<Position> pos{{0, 0}, {5, 4}, {9, 30}, {1, 15}};
    auto v = collision_value_oracle(cfg, pos);
    CHECK(v == std::vector<double>{-2, -1, -1, 0});

    // value equals the rollout simulator's distinct-collision count
    std::mt19937_64 rng(1);
    for (std::size_t L : {2, 5, 10, 20}) {
        cfg.L = L;
        for (int n = 0; n < 50; ++n) {
            auto p = sample_positions(cfg, rng);
            std::vector<std::pair<std::size_t, std::size_t>> xy;
            for (auto& q : p) xy.push_back({q.x, q.y});
            auto sim = oracle::collision_rollout(32, 2, xy);
            auto val = collision_value_oracle(cfg, p);
            for (std::size_t i = 0; i < L; ++i) CHECK(val[i] == sim[i]);
        }
    }

    CHECK_THROWS(validate(CollisionConfig{8, 2, 5, 1}));
    CHECK_THROWS(validate(CollisionConfig{32, 2, 1, 1}));
    CHECK_THROWS(validate(CollisionConfig{32, 2, 5, 3}));
}

TEST_CASE("collision batch") {
    CollisionConfig cfg{16, 1, 7, 1};
    auto base = build_one_hot({16});
    auto a = sample_collision_batch(cfg, 30, 42, base);
    auto b = sample_collision_batch(cfg, 30, 42, base);
    auto c = sample_collision_batch(cfg, 30, 43, base);
    auto plain = sample_collision_batch(cfg, 30, 42, base, false);
    CHECK(a.tuples == b.tuples);
    CHECK(a.tuples != c.tuples);
    CHECK(a.size() == 30);
    CHECK(a.d2 == 1);
    // a prefix of a larger batch is the smaller batch
    auto big = sample_collision_batch(cfg, 60, 42, base);
    for (std::size_t n = 0; n < 30; ++n) {
        CHECK(big.tuples[n] == a.tuples[n]);
        CHECK(max_abs_diff(a.Y[n], plain.Y[n]) == 1.0);
        CHECK(max_abs_diff(a.X[n], embed(base, a.tuples[n])) == 0.0);
    }
    CHECK_THROWS_AS(sample_collision_batch(cfg, 5, 0, build_one_hot({15})), DimensionError);

    CollisionConfig c2{8, 1, 5, 2};
    auto b2 = sample_collision_batch(c2, 10, 1, build_one_hot({64}));
    for (auto& t : b2.tuples)
        for (auto s : t) CHECK(s < 64);
}

TEST_CASE("genotype") {
    ActivationDict dict{{1, {3}}, {2, {}}, {4, {2, 0}}};
    Tuple t{1, 3, 2, 4, 0};
    Matrix P = genotype_targets(dict, t);
    auto ref = oracle::genotype(dict, t);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(P(i, 0) == doctest::Approx(ref[i]));
    CHECK(P(0, 0) == 1.0);
    CHECK(P(2, 0) == 1.0);
    CHECK(P(3, 0) == 1.0);
    CHECK(P(1, 0) == 0.0);

    auto batch = sample_genotype_batch(dict, 6, 4, 50, 3);
    for (std::size_t n = 0; n < batch.size(); ++n) {
        auto tt = batch.tuples[n];
        std::sort(tt.begin(), tt.end());
        CHECK(std::adjacent_find(tt.begin(), tt.end()) == tt.end());
        CHECK(max_abs_diff(batch.Y[n], genotype_targets(dict, batch.tuples[n])) == 0.0);
    }
    CHECK_THROWS(sample_genotype_batch(dict, 3, 4, 1, 0));
}

TEST_CASE("factorized tokens") {
    FeatureLayout lay{{3, 4, 2}};
    for (std::size_t code = 0; code < 24; ++code) CHECK(encode_token(lay, decode_token(lay, code)) == code);
    CHECK(encode_token(lay, {1, 2, 1}) == 1 * 8 + 2 * 2 + 1);
    CHECK_THROWS(encode_token(lay, {3, 0, 0}));
    CHECK_THROWS(decode_token(lay, 24));
}

TEST_CASE("orthogonal factor task") {
    auto task = orthogonal_factor_task(4, 7);
    REQUIRE(task.factors.size() == 2);
    const Matrix& F1 = task.factors[0].F;
    const Matrix& F2 = task.factors[1].F;
    double mean = 0, dot = 0;
    for (std::size_t i = 0; i < 16; ++i) {
        mean += F1.data()[i];
        dot += F1.data()[i] * F2.data()[i];
    }
    CHECK(std::abs(mean) <= 1e-12);
    CHECK(std::abs(dot) <= 1e-12);
    CHECK(max_abs_diff(orthogonal_factor_task(4, 7).factors[1].F, F2) == 0.0);

    auto batch = sample_factorized_batch(task, 5, 20, 1);
    for (std::size_t n = 0; n < batch.size(); ++n) {
        std::vector<std::vector<std::size_t>> toks;
        for (auto c : batch.tuples[n]) toks.push_back(decode_token(task.layout, c));
        for (std::size_t i = 0; i < 5; ++i) {
            double ref = 0;
            for (std::size_t j = 0; j < 5; ++j) ref += F1(toks[i][0], toks[j][0]) * F2(toks[i][1], toks[j][1]);
            CHECK(batch.Y[n](i, 0) == doctest::Approx(ref).epsilon(1e-12));
        }
        for (std::size_t i = 0; i < 5; ++i) {
            auto x = task.layout.embed(toks[i]);
            for (std::size_t k = 0; k < x.size(); ++k) CHECK(batch.X[n](i, k) == x[k]);
        }
    }

    // the generating HFA reproduces the targets
    auto p = build_hfa_factorized(task.factors, task.layout);
    for (std::size_t n = 0; n < batch.size(); ++n) CHECK(max_abs_diff(hfa(batch.X[n], p), batch.Y[n]) <= 1e-10);
}

TEST_CASE("ternary task") {
    const std::size_t S = 4;
    std::mt19937_64 rng(2);
    TensorN f({S, S, S});
    for (double& v : f.data()) v = std::normal_distribution<double>()(rng);
    Matrix w = testutil::randn(S, S, rng);
    CHECK_THROWS(sample_ternary_batch(f, w, S, 5, 2, 0));
    for (std::size_t a = 0; a < S; ++a) w(a, a) = 0;

    Tuple t{0, 3, 1, 3, 2};
    Matrix y = ternary_targets(f, w, t);
    for (std::size_t i = 0; i < t.size(); ++i) {
        double ref = 0;
        for (std::size_t j = 0; j < t.size(); ++j)
            for (std::size_t k = j + 1; k < t.size(); ++k) ref += f(t[i], t[j], t[k]) * w(t[j], t[k]);
        CHECK(y(i, 0) == doctest::Approx(ref).epsilon(1e-12));
    }

    // zero-diagonal w makes the j <= k and j < k sums coincide
    auto batch = sample_ternary_batch(f, w, S, 6, 10, 5);
    auto p = build_ha_ternary(f, w, S);
    for (std::size_t n = 0; n < batch.size(); ++n) CHECK(max_abs_diff(ha_naive(batch.X[n], p), batch.Y[n]) <= 1e-10);
}

TEST_CASE("timeseries task") {
    TimeseriesTask task{{{2, 0.5}, {3, -0.25}}, Matrix::identity(2), 10};
    std::mt19937_64 rng(3);
    Matrix m = timeseries_series(task, rng);
    CHECK(m.rows() == 10);
    for (std::size_t u = 3; u < 10; ++u)
        for (std::size_t c = 0; c < 2; ++c) CHECK(m(u, c) == doctest::Approx(0.5 * m(u - 2, c) - 0.25 * m(u - 3, c)));

    Matrix X = timeseries_tokens(task, m);
    CHECK(X.rows() == 11);
    CHECK(X.cols() == 2 + 11);
    CHECK(X(10, 0) == 0.0);
    CHECK(X(10, 2 + 10) == 1.0);

    Matrix Y = timeseries_targets(task, m);
    auto next = oracle::recursion_next(m, task.delays, task.A);
    for (std::size_t c = 0; c < 2; ++c) CHECK(Y(10, c) == doctest::Approx(next[c]));

    auto p = build_timeseries(task.delays, task.A, task.L);
    auto batch = sample_timeseries_batch(task, 8, 9);
    for (std::size_t n = 0; n < batch.size(); ++n) CHECK(max_abs_diff(linear_sa(batch.X[n], p), batch.Y[n]) <= 1e-12);
}
