#pragma once

#include <map>
#include <vector>

#include "attnlab/constructions.hpp"
#include "attnlab/domain.hpp"

namespace attnlab {

struct CollisionConfig {
    std::size_t N = 32;
    std::size_t R = 2;
    std::size_t L = 20;
    std::size_t dims = 1;  // 1: value depends on y only (agents move right); 2: square footprint on a torus
};

struct Position {
    std::size_t x = 0, y = 0;
};

void validate(const CollisionConfig& cfg);

// V_i = -sum_{j != i} 1[agents i and j collide]
std::vector<double> collision_value_oracle(const CollisionConfig& cfg, const std::vector<Position>& pos);

// symbol of an agent: y for dims = 1, x * N + y for dims = 2
std::size_t collision_symbol(const CollisionConfig& cfg, const Position& p);

// Targets are V_i - 1 by default: linear attention sums over j = i too, and
// that term is the constant -1 self-collision. include_self = false gives V_i.
SequenceBatch sample_collision_batch(const CollisionConfig& cfg, std::size_t B, std::uint64_t seed,
                                     const EmbeddingBase& base, bool include_self = true);
std::vector<Position> sample_positions(const CollisionConfig& cfg, std::mt19937_64& rng);

// P_i = 1[always active] + (1/m) #{j : t_j activates t_i}, m = number of activators of t_i
Matrix genotype_targets(const ActivationDict& dict, const Tuple& t);
SequenceBatch sample_genotype_batch(const ActivationDict& dict, std::size_t vocab_size, std::size_t L, std::size_t B,
                                    std::uint64_t seed);

struct FactorizedTask {
    FeatureLayout layout;
    std::vector<FactorSpec> factors;
};

// tuples hold mixed-radix token codes (feature 0 most significant)
std::size_t encode_token(const FeatureLayout& layout, const std::vector<std::size_t>& symbols);
std::vector<std::size_t> decode_token(const FeatureLayout& layout, std::size_t code);
Matrix factorized_targets(const FactorizedTask& task, const std::vector<std::vector<std::size_t>>& tokens);
SequenceBatch sample_factorized_batch(const FactorizedTask& task, std::size_t L, std::size_t B, std::uint64_t seed);

// two features of size K; f1 zero-mean, f2 Frobenius-orthogonal to f1; target sum_j f1(a_i,a_j) f2(b_i,b_j)
FactorizedTask orthogonal_factor_task(std::size_t K, std::uint64_t seed);

// sum_{j<k} f(t_i, t_j, t_k) w(t_j, t_k); w2 must have a zero diagonal
Matrix ternary_targets(const TensorN& f3, const Matrix& w2, const Tuple& t);
SequenceBatch sample_ternary_batch(const TensorN& f3, const Matrix& w2, std::size_t vocab_size, std::size_t L,
                                   std::size_t B, std::uint64_t seed);

struct TimeseriesTask {
    std::map<std::size_t, double> delays;  // k -> a_k
    Matrix A;                              // d2 x d2
    std::size_t L = 0;
};

// series m[1..L] (row t-1), random first max-delay values then the recursion
Matrix timeseries_series(const TimeseriesTask& task, std::mt19937_64& rng);
// tokens [m[t], one-hot t] for t = 1..L, plus the query slot [0, one-hot L+1]
Matrix timeseries_tokens(const TimeseriesTask& task, const Matrix& series);
// row u = sum_k a_k A m[u-k] with m = 0 outside [1, L]; the last row is the prediction of m[L+1]
Matrix timeseries_targets(const TimeseriesTask& task, const Matrix& series);
SequenceBatch sample_timeseries_batch(const TimeseriesTask& task, std::size_t B, std::uint64_t seed);

}  // namespace attnlab
