#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "attnlab/numerics.hpp"

namespace attnlab {

using Tuple = std::vector<std::size_t>;

struct Vocabulary {
    std::size_t size = 1;
};

enum class EmbeddingKind { one_hot, sinusoidal, random_orthonormal };

std::string to_string(EmbeddingKind k);
EmbeddingKind embedding_kind_from_string(const std::string& s);

struct EmbeddingBase {
    EmbeddingKind kind = EmbeddingKind::one_hot;
    Matrix B;  // |S| x d, row = x(symbol)
    std::uint64_t seed = 0;

    std::size_t vocab_size() const { return B.rows(); }
    std::size_t dim() const { return B.cols(); }
};

struct SequenceBatch {
    std::vector<Tuple> tuples;
    std::vector<Matrix> X;
    std::vector<Matrix> Y;
    std::size_t L = 0;
    std::size_t d2 = 0;

    std::size_t size() const { return tuples.size(); }
};

struct DataMatrixSet {
    std::vector<Matrix> S;  // per symbol, |B_mu| x |S|
};

struct VersatilityEntry {
    std::size_t rank = 0;
    bool full_rank = false;
    double sigma_min = 0.0;
};

// Per-sample generator: sample n of a run with seed s gets mt19937_64 seeded by
// splitmix64(splitmix64(s) ^ (n + 1)). Samples are therefore independent of
// thread count and of the order in which they are drawn.
std::uint64_t splitmix64(std::uint64_t x);
std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t index);

EmbeddingBase build_one_hot(const Vocabulary& vocab);
EmbeddingBase build_sinusoidal(std::size_t N);
EmbeddingBase build_random_orthonormal(const Vocabulary& vocab, std::uint64_t seed);

// true if B^T B = I and B B^T = I within tol (square orthogonal base)
bool is_orthonormal(const EmbeddingBase& base, double tol = 1e-10);

Matrix embed(const EmbeddingBase& base, const Tuple& t);
SequenceBatch embed_batch(const Vocabulary& vocab, const EmbeddingBase& base, const std::vector<Tuple>& tuples);

// s_nu = multiplicity of nu in t
std::vector<double> count_vector(const Tuple& t, std::size_t vocab_size);
DataMatrixSet count_matrix(const std::vector<Tuple>& tuples, const Vocabulary& vocab);
std::vector<VersatilityEntry> versatility_check(const DataMatrixSet& dms, double rel_tol);

std::vector<Tuple> uniform_tuples(std::size_t vocab_size, std::size_t L, std::size_t B, std::uint64_t seed);

}  // namespace attnlab
