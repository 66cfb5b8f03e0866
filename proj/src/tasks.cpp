#include "attnlab/tasks.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace attnlab {

void validate(const CollisionConfig& cfg) {
    if (cfg.N == 0 || 4 * cfg.R >= cfg.N) throw std::invalid_argument("collision config needs 2R < N/2");
    if (cfg.L < 2) throw std::invalid_argument("collision config needs L >= 2");
    if (cfg.dims != 1 && cfg.dims != 2) throw std::invalid_argument("collision dims must be 1 or 2");
}

namespace {

bool collide(const CollisionConfig& cfg, const Position& a, const Position& b) {
    const bool y_close = circ_dist(a.y, b.y, cfg.N) <= 2 * cfg.R;
    if (cfg.dims == 1) return y_close;
    return y_close && circ_dist(a.x, b.x, cfg.N) <= 2 * cfg.R;
}

}  // namespace

std::vector<double> collision_value_oracle(const CollisionConfig& cfg, const std::vector<Position>& pos) {
    validate(cfg);
    std::vector<double> v(pos.size(), 0.0);
    for (std::size_t i = 0; i < pos.size(); ++i)
        for (std::size_t j = 0; j < pos.size(); ++j)
            if (i != j && collide(cfg, pos[i], pos[j])) v[i] -= 1.0;
    return v;
}

std::size_t collision_symbol(const CollisionConfig& cfg, const Position& p) {
    return cfg.dims == 1 ? p.y : p.x * cfg.N + p.y;
}

std::vector<Position> sample_positions(const CollisionConfig& cfg, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> u(0, cfg.N - 1);
    std::vector<Position> pos(cfg.L);
    for (auto& p : pos) {
        p.x = u(rng);
        p.y = u(rng);
    }
    return pos;
}

SequenceBatch sample_collision_batch(const CollisionConfig& cfg, std::size_t B, std::uint64_t seed,
                                     const EmbeddingBase& base, bool include_self) {
    validate(cfg);
    const std::size_t S = cfg.dims == 1 ? cfg.N : cfg.N * cfg.N;
    if (base.vocab_size() != S) throw DimensionError("embedding base does not match the collision vocabulary");
    std::vector<Tuple> tuples(B);
    std::vector<Matrix> Y(B);
    for (std::size_t n = 0; n < B; ++n) {
        auto rng = sample_rng(seed, n);
        auto pos = sample_positions(cfg, rng);
        auto v = collision_value_oracle(cfg, pos);
        Matrix y(cfg.L, 1);
        tuples[n].resize(cfg.L);
        for (std::size_t i = 0; i < cfg.L; ++i) {
            tuples[n][i] = collision_symbol(cfg, pos[i]);
            y(i, 0) = v[i] - (include_self ? 1.0 : 0.0);
        }
        Y[n] = std::move(y);
    }
    auto batch = embed_batch({S}, base, tuples);
    batch.Y = std::move(Y);
    batch.d2 = 1;
    return batch;
}

Matrix genotype_targets(const ActivationDict& dict, const Tuple& t) {
    Matrix P(t.size(), 1);
    for (std::size_t i = 0; i < t.size(); ++i) {
        auto it = dict.find(t[i]);
        if (it == dict.end()) continue;
        const auto& act = it->second;
        if (act.empty()) {
            P(i, 0) = 1.0;
            continue;
        }
        for (std::size_t j = 0; j < t.size(); ++j)
            if (std::find(act.begin(), act.end(), t[j]) != act.end()) P(i, 0) += 1.0 / double(act.size());
    }
    return P;
}

SequenceBatch sample_genotype_batch(const ActivationDict& dict, std::size_t vocab_size, std::size_t L, std::size_t B,
                                    std::uint64_t seed) {
    if (L > vocab_size) throw std::invalid_argument("genotype sequences hold distinct alleles: need L <= |S|");
    std::vector<Tuple> tuples(B);
    std::vector<Matrix> Y(B);
    for (std::size_t n = 0; n < B; ++n) {
        auto rng = sample_rng(seed, n);
        Tuple all(vocab_size);
        std::iota(all.begin(), all.end(), 0);
        std::shuffle(all.begin(), all.end(), rng);
        all.resize(L);
        Y[n] = genotype_targets(dict, all);
        tuples[n] = std::move(all);
    }
    auto batch = embed_batch({vocab_size}, build_one_hot({vocab_size}), tuples);
    batch.Y = std::move(Y);
    batch.d2 = 1;
    return batch;
}

std::size_t encode_token(const FeatureLayout& layout, const std::vector<std::size_t>& symbols) {
    if (symbols.size() != layout.sizes.size()) throw DimensionError("one symbol per feature expected");
    std::size_t code = 0;
    for (std::size_t f = 0; f < symbols.size(); ++f) {
        if (symbols[f] >= layout.sizes[f]) throw std::out_of_range("feature symbol out of range");
        code = code * layout.sizes[f] + symbols[f];
    }
    return code;
}

std::vector<std::size_t> decode_token(const FeatureLayout& layout, std::size_t code) {
    std::vector<std::size_t> s(layout.sizes.size());
    for (std::size_t f = s.size(); f-- > 0;) {
        s[f] = code % layout.sizes[f];
        code /= layout.sizes[f];
    }
    if (code != 0) throw std::out_of_range("token code outside the feature layout");
    return s;
}

Matrix factorized_targets(const FactorizedTask& task, const std::vector<std::vector<std::size_t>>& tokens) {
    const std::size_t L = tokens.size(), d2 = task.factors.at(0).W.cols();
    Matrix Y(L, d2);
    for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < L; ++j) {
            double f = 1.0;
            for (const auto& fs : task.factors) f *= fs.F(tokens[i][fs.query_feature], tokens[j][fs.key_feature]);
            for (std::size_t k = 0; k < d2; ++k) {
                double w = 1.0;
                for (const auto& fs : task.factors) w *= fs.W(tokens[j][fs.value_feature], k);
                Y(i, k) += f * w;
            }
        }
    return Y;
}

SequenceBatch sample_factorized_batch(const FactorizedTask& task, std::size_t L, std::size_t B, std::uint64_t seed) {
    const auto& lay = task.layout;
    SequenceBatch batch;
    batch.L = L;
    batch.d2 = task.factors.at(0).W.cols();
    for (std::size_t n = 0; n < B; ++n) {
        auto rng = sample_rng(seed, n);
        std::vector<std::vector<std::size_t>> tokens(L, std::vector<std::size_t>(lay.sizes.size()));
        Tuple t(L);
        Matrix X(L, lay.dim());
        for (std::size_t i = 0; i < L; ++i) {
            for (std::size_t f = 0; f < lay.sizes.size(); ++f)
                tokens[i][f] = std::uniform_int_distribution<std::size_t>(0, lay.sizes[f] - 1)(rng);
            t[i] = encode_token(lay, tokens[i]);
            auto x = lay.embed(tokens[i]);
            std::copy(x.begin(), x.end(), X.row_ptr(i));
        }
        batch.tuples.push_back(std::move(t));
        batch.X.push_back(std::move(X));
        batch.Y.push_back(factorized_targets(task, tokens));
    }
    return batch;
}

FactorizedTask orthogonal_factor_task(std::size_t K, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Matrix F1(K, K), F2(K, K);
    for (double& v : F1.data()) v = nd(rng);
    for (double& v : F2.data()) v = nd(rng);
    double mean = 0;
    for (double v : F1.data()) mean += v;
    mean /= double(K * K);
    for (double& v : F1.data()) v -= mean;
    double dot = 0;
    for (std::size_t k = 0; k < F1.size(); ++k) dot += F1.data()[k] * F2.data()[k];
    F2 -= (dot / F1.frobenius_sq()) * F1;

    FactorizedTask t;
    t.layout.sizes = {K, K};
    t.factors.push_back({0, 0, 0, F1, Matrix(K, 1, 1.0)});
    t.factors.push_back({1, 1, 1, F2, Matrix(K, 1, 1.0)});
    return t;
}

Matrix ternary_targets(const TensorN& f3, const Matrix& w2, const Tuple& t) {
    Matrix Y(t.size(), 1);
    for (std::size_t i = 0; i < t.size(); ++i)
        for (std::size_t j = 0; j < t.size(); ++j)
            for (std::size_t k = j + 1; k < t.size(); ++k) Y(i, 0) += f3(t[i], t[j], t[k]) * w2(t[j], t[k]);
    return Y;
}

SequenceBatch sample_ternary_batch(const TensorN& f3, const Matrix& w2, std::size_t vocab_size, std::size_t L,
                                   std::size_t B, std::uint64_t seed) {
    for (std::size_t a = 0; a < vocab_size; ++a)
        if (w2(a, a) != 0.0)
            throw std::invalid_argument("ternary task needs w2 with zero diagonal so j<k and j<=k sums agree");
    auto tuples = uniform_tuples(vocab_size, L, B, seed);
    auto batch = embed_batch({vocab_size}, build_one_hot({vocab_size}), tuples);
    for (const auto& t : tuples) batch.Y.push_back(ternary_targets(f3, w2, t));
    batch.d2 = 1;
    return batch;
}

Matrix timeseries_series(const TimeseriesTask& task, std::mt19937_64& rng) {
    const std::size_t d2 = task.A.rows(), L = task.L;
    std::size_t lag = 0;
    for (const auto& [k, a] : task.delays) lag = std::max(lag, k);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix m(L, d2);
    for (std::size_t t = 0; t < L; ++t) {
        if (t < lag || task.delays.empty()) {
            for (std::size_t c = 0; c < d2; ++c) m(t, c) = u(rng);
            continue;
        }
        for (const auto& [k, a] : task.delays)
            for (std::size_t r = 0; r < d2; ++r)
                for (std::size_t c = 0; c < d2; ++c) m(t, r) += a * task.A(r, c) * m(t - k, c);
    }
    return m;
}

Matrix timeseries_tokens(const TimeseriesTask& task, const Matrix& series) {
    const std::size_t d2 = task.A.rows(), L = task.L;
    Matrix X(L + 1, d2 + L + 1);
    for (std::size_t t = 0; t <= L; ++t) {
        if (t < L)
            for (std::size_t c = 0; c < d2; ++c) X(t, c) = series(t, c);
        X(t, d2 + t) = 1.0;
    }
    return X;
}

Matrix timeseries_targets(const TimeseriesTask& task, const Matrix& series) {
    const std::size_t d2 = task.A.rows(), L = task.L;
    Matrix Y(L + 1, d2);
    for (std::size_t u = 0; u <= L; ++u)
        for (const auto& [k, a] : task.delays) {
            if (k > u) continue;
            for (std::size_t r = 0; r < d2; ++r)
                for (std::size_t c = 0; c < d2; ++c) Y(u, r) += a * task.A(r, c) * series(u - k, c);
        }
    return Y;
}

SequenceBatch sample_timeseries_batch(const TimeseriesTask& task, std::size_t B, std::uint64_t seed) {
    if (task.A.rows() != task.A.cols()) throw DimensionError("A must be square");
    for (const auto& [k, a] : task.delays)
        if (k == 0 || k > task.L) throw std::invalid_argument("delays must lie in [1, L]");
    SequenceBatch batch;
    batch.L = task.L + 1;
    batch.d2 = task.A.rows();
    for (std::size_t n = 0; n < B; ++n) {
        auto rng = sample_rng(seed, n);
        Matrix m = timeseries_series(task, rng);
        Tuple t(task.L + 1);
        std::iota(t.begin(), t.end(), 0);
        batch.tuples.push_back(std::move(t));
        batch.X.push_back(timeseries_tokens(task, m));
        batch.Y.push_back(timeseries_targets(task, m));
    }
    return batch;
}

}  // namespace attnlab
