#include "attnlab/attention.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace attnlab {

namespace {

constexpr double kMaskedScore = -1e30;

void require(bool ok, const std::string& what) {
    if (!ok) throw DimensionError(what);
}

}  // namespace

std::string to_string(Nonlinearity n) { return n == Nonlinearity::linear ? "linear" : "softmax"; }
std::string to_string(HFAVariant v) { return v == HFAVariant::value_product ? "value_product" : "single_value"; }
std::string to_string(HAMask m) {
    switch (m) {
        case HAMask::none: return "none";
        case HAMask::ordered_leq: return "ordered_leq";
        case HAMask::ordered_geq: return "ordered_geq";
        case HAMask::strict_leq: return "strict_leq";
        case HAMask::strict_geq: return "strict_geq";
    }
    return "?";
}

Nonlinearity nonlinearity_from_string(const std::string& s) {
    if (s == "linear") return Nonlinearity::linear;
    if (s == "softmax") return Nonlinearity::softmax;
    throw std::invalid_argument("unknown nonlinearity '" + s + "'");
}

HFAVariant hfa_variant_from_string(const std::string& s) {
    if (s == "value_product") return HFAVariant::value_product;
    if (s == "single_value") return HFAVariant::single_value;
    throw std::invalid_argument("unknown HFA variant '" + s + "'");
}

HAMask ha_mask_from_string(const std::string& s) {
    for (auto m : {HAMask::none, HAMask::ordered_leq, HAMask::ordered_geq, HAMask::strict_leq, HAMask::strict_geq})
        if (to_string(m) == s) return m;
    throw std::invalid_argument("unknown HA mask '" + s + "'");
}

Matrix linear_sa(const Matrix& X, const LinearSAParams& p) {
    require(X.cols() == p.C.rows() && p.C.rows() == p.C.cols(), "linear_sa: C must be d x d");
    require(p.Wv.rows() == X.cols(), "linear_sa: Wv must have d rows");
    Matrix scores = matmul(matmul(X, p.C), X.transpose());
    return matmul(scores, matmul(X, p.Wv));
}

Matrix multihead_linear_sa(const Matrix& X, const MultiheadLinearSAParams& p) {
    require(!p.heads.empty(), "multihead_linear_sa: no heads");
    if (p.WO.empty()) {
        Matrix out = linear_sa(X, p.heads[0]);
        for (std::size_t h = 1; h < p.heads.size(); ++h) out += linear_sa(X, p.heads[h]);
        return out;
    }
    std::size_t width = 0;
    for (const auto& h : p.heads) width += h.Wv.cols();
    require(p.WO.rows() == width, "multihead_linear_sa: WO rows must equal concatenated head width");
    Matrix cat(X.rows(), width);
    std::size_t off = 0;
    for (const auto& h : p.heads) {
        Matrix o = linear_sa(X, h);
        for (std::size_t i = 0; i < o.rows(); ++i)
            for (std::size_t k = 0; k < o.cols(); ++k) cat(i, off + k) = o(i, k);
        off += o.cols();
    }
    return matmul(cat, p.WO);
}

Matrix softmax_rows(const Matrix& s) {
    Matrix out(s.rows(), s.cols());
    for (std::size_t i = 0; i < s.rows(); ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < s.cols(); ++j) m = std::max(m, s(i, j));
        double z = 0;
        for (std::size_t j = 0; j < s.cols(); ++j) z += (out(i, j) = std::exp(s(i, j) - m));
        for (std::size_t j = 0; j < s.cols(); ++j) out(i, j) /= z;
    }
    return out;
}

Matrix softmax_sa(const Matrix& X, const LinearSAParams& p) {
    require(X.cols() == p.C.rows(), "softmax_sa: shape mismatch");
    return matmul(softmax_rows(matmul(matmul(X, p.C), X.transpose())), matmul(X, p.Wv));
}

Matrix hfa(const Matrix& X, const HFAParams& p) {
    require(p.order() >= 1, "hfa: order must be at least 1");
    const std::size_t nv = p.variant == HFAVariant::single_value ? 1 : p.order();
    require(p.Wv.size() >= nv, "hfa: missing value matrices");
    Matrix scores;
    for (const auto& C : p.C) {
        require(C.rows() == X.cols() && C.cols() == X.cols(), "hfa: C must be d x d");
        Matrix s = matmul(matmul(X, C), X.transpose());
        scores = scores.empty() ? s : hadamard(scores, s);
    }
    if (p.scale_sqrt_dk) scores *= 1.0 / std::sqrt(double(X.cols()));
    if (p.nonlinearity == Nonlinearity::softmax) scores = softmax_rows(scores);
    Matrix values;
    for (std::size_t a = 0; a < nv; ++a) {
        require(p.Wv[a].rows() == X.cols(), "hfa: Wv must have d rows");
        Matrix v = matmul(X, p.Wv[a]);
        values = values.empty() ? v : hadamard(values, v);
    }
    return matmul(scores, values);
}

Matrix hfa_multihead(const Matrix& X, const std::vector<HFAParams>& heads) {
    require(!heads.empty(), "hfa_multihead: no heads");
    Matrix out = hfa(X, heads[0]);
    for (std::size_t h = 1; h < heads.size(); ++h) out += hfa(X, heads[h]);
    return out;
}

std::size_t HAParams::out_dim() const {
    if (W_dense) return W_dense->shape().back();
    return Vout.rows();
}

void HAParams::validate(std::size_t d) const {
    if (order < 2) throw std::invalid_argument("HyperAttention order must be at least 2");
    if (C_dense || W_dense) {
        if (!C_dense || !W_dense) throw std::invalid_argument("dense mode needs both C and W tensors");
        if (C_dense->rank() != order || W_dense->rank() != order)
            throw DimensionError("dense HA tensors must have rank n");
        for (std::size_t k = 0; k < order; ++k) require(C_dense->shape()[k] == d, "dense C must be d^n");
        for (std::size_t k = 0; k + 1 < order; ++k) require(W_dense->shape()[k] == d, "dense W must be d^(n-1) x d2");
        return;
    }
    const std::size_t nk = sharing ? 1 : order - 1;
    if (keys.size() != nk || values.size() != nk)
        throw std::invalid_argument(sharing ? "sharing HA takes exactly one key and one value matrix"
                                            : "HA without sharing takes n-1 key and value matrices");
    require(WQ.rows() == d && WQ.cols() == rank, "W^Q must be d x R");
    for (const auto& m : keys) require(m.rows() == d && m.cols() == rank, "key matrices must be d x R");
    for (const auto& m : values) require(m.rows() == d && m.cols() == rank, "value matrices must be d x R");
    require(Vout.cols() == rank, "V-out must be d2 x R");
}

bool ha_mask_allows(HAMask m, const std::vector<std::size_t>& js) {
    for (std::size_t k = 1; k < js.size(); ++k) {
        const auto a = js[k - 1], b = js[k];
        switch (m) {
            case HAMask::none: break;
            case HAMask::ordered_leq: if (!(a <= b)) return false; break;
            case HAMask::ordered_geq: if (!(a >= b)) return false; break;
            case HAMask::strict_leq: if (!(a < b)) return false; break;
            case HAMask::strict_geq: if (!(a > b)) return false; break;
        }
    }
    return true;
}

namespace {

// range of j_m given j_{m-1} under the mask
std::pair<std::size_t, std::size_t> next_range(HAMask m, std::size_t prev, std::size_t L) {
    switch (m) {
        case HAMask::none: return {0, L};
        case HAMask::ordered_leq: return {prev, L};
        case HAMask::ordered_geq: return {0, prev + 1};
        case HAMask::strict_leq: return {prev + 1, L};
        case HAMask::strict_geq: return {0, prev};
    }
    return {0, L};
}

}  // namespace

Matrix ha_naive(const Matrix& X, const HAParams& p) {
    const std::size_t L = X.rows(), d = X.cols(), n = p.order, depth = n - 1;
    p.validate(d);
    const bool strict = p.mask == HAMask::strict_leq || p.mask == HAMask::strict_geq;
    if (strict && L < depth) throw std::invalid_argument("strict HA mask needs L >= n-1");
    const std::size_t d2 = p.out_dim();
    const bool dense = p.C_dense.has_value();
    const std::size_t R = dense ? 0 : p.rank;
    const double scale = p.scale_sqrt_dk ? 1.0 / std::sqrt(double(dense ? d : R)) : 1.0;

    Matrix Q, out(L, d2);
    std::vector<Matrix> K, V;
    if (!dense) {
        Q = matmul(X, p.WQ);
        for (std::size_t m = 0; m < depth; ++m) {
            K.push_back(matmul(X, p.keys[p.sharing ? 0 : m]));
            V.push_back(matmul(X, p.values[p.sharing ? 0 : m]));
        }
    }

    std::vector<double> scores, vals;
    std::vector<std::size_t> js(depth);
    // per-depth partial products; CP: length R vectors, dense: contracted tensors
    std::vector<std::vector<double>> ps(depth + 1), pv(depth + 1);

    for (std::size_t i = 0; i < L; ++i) {
        scores.clear();
        vals.clear();
        if (dense) {
            const auto& C = p.C_dense->data();
            const std::size_t tail = C.size() / d;
            ps[0].assign(tail, 0.0);
            for (std::size_t a = 0; a < d; ++a) {
                const double x = X(i, a);
                if (x == 0.0) continue;
                for (std::size_t t = 0; t < tail; ++t) ps[0][t] += x * C[a * tail + t];
            }
            pv[0] = p.W_dense->data();
        } else {
            ps[0].assign(Q.row_ptr(i), Q.row_ptr(i) + R);
            pv[0].assign(R, 1.0);
        }

        std::function<void(std::size_t)> rec = [&](std::size_t m) {
            if (m == depth) {
                double s = 0;
                std::vector<double> v(d2, 0.0);
                if (dense) {
                    s = ps[depth][0];
                    for (std::size_t t = 0; t < d2; ++t) v[t] = pv[depth][t];
                } else {
                    for (std::size_t r = 0; r < R; ++r) s += ps[depth][r];
                    for (std::size_t t = 0; t < d2; ++t) {
                        double acc = 0;
                        for (std::size_t r = 0; r < R; ++r) acc += pv[depth][r] * p.Vout(t, r);
                        v[t] = acc;
                    }
                }
                scores.push_back(s * scale);
                vals.insert(vals.end(), v.begin(), v.end());
                return;
            }
            auto [lo, hi] = m == 0 ? std::pair<std::size_t, std::size_t>{0, L} : next_range(p.mask, js[m - 1], L);
            for (std::size_t j = lo; j < hi; ++j) {
                js[m] = j;
                if (dense) {
                    const std::size_t tail_s = ps[m].size() / d, tail_v = pv[m].size() / d;
                    ps[m + 1].assign(tail_s, 0.0);
                    pv[m + 1].assign(tail_v, 0.0);
                    for (std::size_t a = 0; a < d; ++a) {
                        const double x = X(j, a);
                        if (x == 0.0) continue;
                        for (std::size_t t = 0; t < tail_s; ++t) ps[m + 1][t] += x * ps[m][a * tail_s + t];
                        for (std::size_t t = 0; t < tail_v; ++t) pv[m + 1][t] += x * pv[m][a * tail_v + t];
                    }
                } else {
                    ps[m + 1].resize(R);
                    pv[m + 1].resize(R);
                    const double* k = K[m].row_ptr(j);
                    const double* v = V[m].row_ptr(j);
                    for (std::size_t r = 0; r < R; ++r) {
                        ps[m + 1][r] = ps[m][r] * k[r];
                        pv[m + 1][r] = pv[m][r] * v[r];
                    }
                }
                rec(m + 1);
            }
        };
        rec(0);

        std::vector<double> w = scores;
        if (p.nonlinearity == Nonlinearity::softmax) {
            // the mask is applied by enumerating only allowed tuples; masked
            // tuples would enter with score -1e30 and weight exactly 0
            double mx = kMaskedScore;
            for (double s : w) mx = std::max(mx, s);
            double z = 0;
            for (double& s : w) z += (s = std::exp(s - mx));
            for (double& s : w) s /= z;
        }
        for (std::size_t k = 0; k < w.size(); ++k)
            for (std::size_t t = 0; t < d2; ++t) out(i, t) += w[k] * vals[k * d2 + t];
    }
    return out;
}

Matrix ha_fast_linear(const Matrix& X, const HAParams& p) {
    if (p.nonlinearity != Nonlinearity::linear || p.mask != HAMask::none)
        throw UnsupportedConfiguration("ha_fast_linear covers only the linear, unmasked sum");
    if (p.C_dense) throw UnsupportedConfiguration("ha_fast_linear needs CP factors");
    const std::size_t d = X.cols(), R = p.rank, depth = p.order - 1;
    p.validate(d);
    // P[s][t] = prod_m sum_j K^m_{js} V^m_{jt}
    Matrix P(R, R, 1.0);
    for (std::size_t m = 0; m < depth; ++m) {
        Matrix K = matmul(X, p.keys[p.sharing ? 0 : m]);
        Matrix V = matmul(X, p.values[p.sharing ? 0 : m]);
        P = hadamard(P, matmul(K.transpose(), V));
    }
    Matrix out = matmul(matmul(matmul(X, p.WQ), P), p.Vout.transpose());
    if (p.scale_sqrt_dk) out *= 1.0 / std::sqrt(double(R));
    return out;
}

}  // namespace attnlab
