#include "attnlab/domain.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace attnlab {

std::string to_string(EmbeddingKind k) {
    switch (k) {
        case EmbeddingKind::one_hot: return "one_hot";
        case EmbeddingKind::sinusoidal: return "sinusoidal";
        case EmbeddingKind::random_orthonormal: return "random_orthonormal";
    }
    return "?";
}

EmbeddingKind embedding_kind_from_string(const std::string& s) {
    if (s == "one_hot") return EmbeddingKind::one_hot;
    if (s == "sinusoidal") return EmbeddingKind::sinusoidal;
    if (s == "random_orthonormal") return EmbeddingKind::random_orthonormal;
    throw std::invalid_argument("unknown embedding kind '" + s + "'");
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t index) {
    return std::mt19937_64(splitmix64(splitmix64(seed) ^ (index + 1)));
}

EmbeddingBase build_one_hot(const Vocabulary& vocab) {
    if (vocab.size < 1) throw std::invalid_argument("vocabulary must be non-empty");
    return {EmbeddingKind::one_hot, Matrix::identity(vocab.size), 0};
}

EmbeddingBase build_sinusoidal(std::size_t N) {
    if (N == 0 || N % 2 != 0) throw std::invalid_argument("sinusoidal base needs even N");
    const double pi = std::numbers::pi;
    const double scale = std::sqrt(2.0 / N);
    Matrix B(N, N);
    for (std::size_t n = 0; n < N; ++n) {
        B(n, 0) = scale / std::sqrt(2.0);
        for (std::size_t k = 1; k < N / 2; ++k) {
            const double th = 2.0 * pi * double(k * n % N) / N;
            B(n, 2 * k - 1) = scale * std::sin(th);
            B(n, 2 * k) = scale * std::cos(th);
        }
        B(n, N - 1) = scale / std::sqrt(2.0) * (n % 2 == 0 ? 1.0 : -1.0);
    }
    return {EmbeddingKind::sinusoidal, std::move(B), 0};
}

EmbeddingBase build_random_orthonormal(const Vocabulary& vocab, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Matrix g(vocab.size, vocab.size);
    for (double& v : g.data()) v = nd(rng);
    return {EmbeddingKind::random_orthonormal, orthonormalize_columns(g), seed};
}

bool is_orthonormal(const EmbeddingBase& base, double tol) {
    if (base.B.rows() != base.B.cols()) return false;
    const std::size_t n = base.B.rows();
    return max_abs_diff(matmul(base.B, base.B.transpose()), Matrix::identity(n)) <= tol;
}

Matrix embed(const EmbeddingBase& base, const Tuple& t) {
    Matrix X(t.size(), base.dim());
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] >= base.vocab_size()) throw std::out_of_range("symbol index out of range");
        std::copy(base.B.row_ptr(t[i]), base.B.row_ptr(t[i]) + base.dim(), X.row_ptr(i));
    }
    return X;
}

SequenceBatch embed_batch(const Vocabulary& vocab, const EmbeddingBase& base, const std::vector<Tuple>& tuples) {
    if (base.vocab_size() != vocab.size) throw DimensionError("embedding base does not match vocabulary");
    SequenceBatch b;
    b.tuples = tuples;
    b.L = tuples.empty() ? 0 : tuples.front().size();
    b.X.reserve(tuples.size());
    for (const auto& t : tuples) b.X.push_back(embed(base, t));
    return b;
}

std::vector<double> count_vector(const Tuple& t, std::size_t vocab_size) {
    std::vector<double> s(vocab_size, 0.0);
    for (auto x : t) {
        if (x >= vocab_size) throw std::out_of_range("symbol index out of range");
        s[x] += 1.0;
    }
    return s;
}

DataMatrixSet count_matrix(const std::vector<Tuple>& tuples, const Vocabulary& vocab) {
    const std::size_t S = vocab.size;
    std::vector<std::vector<std::vector<double>>> rows(S);
    for (const auto& t : tuples) {
        auto s = count_vector(t, S);
        for (std::size_t mu = 0; mu < S; ++mu)
            if (s[mu] > 0) rows[mu].push_back(s);
    }
    DataMatrixSet out;
    for (std::size_t mu = 0; mu < S; ++mu) {
        Matrix m(rows[mu].size(), S);
        for (std::size_t r = 0; r < rows[mu].size(); ++r)
            std::copy(rows[mu][r].begin(), rows[mu][r].end(), m.row_ptr(r));
        out.S.push_back(std::move(m));
    }
    return out;
}

std::vector<VersatilityEntry> versatility_check(const DataMatrixSet& dms, double rel_tol) {
    std::vector<VersatilityEntry> out;
    for (const auto& m : dms.S) {
        VersatilityEntry e;
        if (m.rows() > 0) {
            auto s = singular_values(m);
            e.rank = column_rank(m, rel_tol);
            // sigma_min over the columns; a short matrix has structural zeros
            e.sigma_min = m.rows() >= m.cols() ? s.back() : 0.0;
        }
        e.full_rank = e.rank == m.cols();
        out.push_back(e);
    }
    return out;
}

std::vector<Tuple> uniform_tuples(std::size_t vocab_size, std::size_t L, std::size_t B, std::uint64_t seed) {
    std::vector<Tuple> out(B, Tuple(L));
    for (std::size_t n = 0; n < B; ++n) {
        auto rng = sample_rng(seed, n);
        std::uniform_int_distribution<std::size_t> u(0, vocab_size - 1);
        for (auto& x : out[n]) x = u(rng);
    }
    return out;
}

}  // namespace attnlab
