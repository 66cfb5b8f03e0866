#include "attnlab/constructions.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

namespace attnlab {

LinearSAParams build_exact(const InteractionSpec& spec, const EmbeddingBase& base) {
    const std::size_t S = spec.F.rows();
    if (spec.F.cols() != S || spec.W.rows() != S) throw DimensionError("interaction spec must be |S| x |S| and |S| x d2");
    if (base.vocab_size() != S) throw DimensionError("base does not match vocabulary size");
    if (!is_orthonormal(base)) throw std::invalid_argument("build_exact needs an orthonormal base with d = |S|");
    const Matrix Bt = base.B.transpose();
    return {matmul(matmul(Bt, spec.F), base.B), matmul(Bt, spec.W)};
}

ApproxResult build_approx(const InteractionSpec& spec, std::size_t d) {
    const std::size_t S = spec.F.rows(), d2 = spec.W.cols();
    if (d < 1 || d >= S) throw std::invalid_argument("build_approx needs 1 <= d < |S|; use build_exact for d = |S|");

    // truncated SVD of F, expressed in the span of its top-d left singular vectors
    SVD f = svd(spec.F);
    Matrix B(S, d);
    for (std::size_t i = 0; i < S; ++i)
        for (std::size_t k = 0; k < d; ++k) B(i, k) = f.U(i, k);
    Matrix Fd(S, S);
    for (std::size_t i = 0; i < S; ++i)
        for (std::size_t j = 0; j < S; ++j) {
            double acc = 0;
            for (std::size_t k = 0; k < d; ++k) acc += f.U(i, k) * f.s[k] * f.V(j, k);
            Fd(i, j) = acc;
        }
    const Matrix Bt = B.transpose();

    ApproxResult r;
    r.base = {EmbeddingKind::random_orthonormal, B, 0};
    r.params = {matmul(matmul(Bt, Fd), B), matmul(Bt, spec.W)};

    for (std::size_t mu = 0; mu < S; ++mu) {
        double n = 0;
        for (std::size_t k = 0; k < d2; ++k) n += spec.W(mu, k) * spec.W(mu, k);
        r.zeta1 = std::max(r.zeta1, std::sqrt(n));
    }
    r.zeta2 = matmul(matmul(B, r.params.C), Bt).max_abs();

    r.bound_per_token = r.zeta1 * f.s[d];
    if (d2 > d) {
        auto sw = singular_values(spec.W);
        const std::size_t hi = std::min(d2, S);
        double tail = 0;
        for (std::size_t i = d; i < hi && i < sw.size(); ++i) tail += sw[i] * sw[i];
        r.bound_per_token += r.zeta2 * std::sqrt(tail);
    }
    return r;
}

std::size_t circ_dist(std::size_t a, std::size_t b, std::size_t N) {
    const std::size_t d = a > b ? a - b : b - a;
    return std::min(d, N - d);
}

LinearSAParams build_collision_onehot(std::size_t N, std::size_t R) {
    if (4 * R >= N) throw std::invalid_argument("collision needs 2R < N/2");
    Matrix C(N, N);
    for (std::size_t m = 0; m < N; ++m)
        for (std::size_t n = 0; n < N; ++n) C(m, n) = circ_dist(m, n, N) <= 2 * R ? 1.0 : 0.0;
    return {C, Matrix(N, 1, -1.0)};
}

Matrix build_general_window_C(const std::vector<double>& f) {
    const std::size_t N = f.size();
    if (N == 0 || N % 2 != 0) throw std::invalid_argument("window length must be even");
    const double pi = std::numbers::pi;
    // F[k] = (1/N) sum_n f[n] e^{-i 2 pi k n / N}
    std::vector<std::complex<double>> F(N / 2 + 1);
    for (std::size_t k = 0; k <= N / 2; ++k) {
        std::complex<double> acc = 0;
        for (std::size_t n = 0; n < N; ++n) acc += f[n] * std::polar(1.0, -2.0 * pi * double(k * n % N) / N);
        F[k] = acc / double(N);
    }
    // unnormalized base: C00 = 2F0, block (a, b; -b, a) with a = 2Re F, b = -2Im F, last = 2F[N/2];
    // the stored base is scaled by sqrt(2/N), so C picks up N/2
    const double s = N / 2.0;
    Matrix C(N, N);
    C(0, 0) = s * 2.0 * F[0].real();
    for (std::size_t k = 1; k < N / 2; ++k) {
        const double a = 2.0 * F[k].real(), b = -2.0 * F[k].imag();
        C(2 * k - 1, 2 * k - 1) = s * a;
        C(2 * k, 2 * k) = s * a;
        C(2 * k - 1, 2 * k) = s * b;
        C(2 * k, 2 * k - 1) = -s * b;
    }
    C(N - 1, N - 1) = s * 2.0 * F[N / 2].real();
    return C;
}

LinearSAParams build_collision_sinusoidal(std::size_t N, std::size_t R) {
    if (N % 2 != 0) throw std::invalid_argument("sinusoidal collision needs even N");
    if (4 * R >= N) throw std::invalid_argument("collision needs 2R < N/2");
    std::vector<double> f(N);
    for (std::size_t n = 0; n < N; ++n) f[n] = circ_dist(n, 0, N) <= 2 * R ? 1.0 : 0.0;
    // the dc coordinate of every normalized row is 1/sqrt(N)
    Matrix Wv(N, 1);
    Wv(0, 0) = -std::sqrt(double(N));
    return {build_general_window_C(f), Wv};
}

EmbeddingBase build_sinusoidal_2d(std::size_t N) {
    Matrix p = build_sinusoidal(N).B;
    Matrix B(N * N, N * N);
    for (std::size_t x = 0; x < N; ++x)
        for (std::size_t y = 0; y < N; ++y)
            for (std::size_t a = 0; a < N; ++a)
                for (std::size_t b = 0; b < N; ++b) B(x * N + y, a * N + b) = p(x, a) * p(y, b);
    return {EmbeddingKind::sinusoidal, std::move(B), 0};
}

LinearSAParams build_2d_kronecker(const Matrix& table, std::size_t N, double value) {
    if (table.rows() != N || table.cols() != N) throw DimensionError("2d window table must be N x N");
    // f(dx, dy) = sum_m delta(dx - m) f(m, dy): one Kronecker term per x-offset
    Matrix C(N * N, N * N);
    for (std::size_t m = 0; m < N; ++m) {
        std::vector<double> fy(N), dx(N, 0.0);
        bool any = false;
        for (std::size_t y = 0; y < N; ++y) any |= (fy[y] = table(m, y)) != 0.0;
        if (!any) continue;
        dx[m] = 1.0;
        C += kronecker(build_general_window_C(dx), build_general_window_C(fy));
    }
    Matrix Wv(N * N, 1);
    Wv(0, 0) = value * double(N);  // dc coordinate is 1/N
    return {C, Wv};
}

LinearSAParams build_genotype(const ActivationDict& dict, std::size_t L, std::size_t vocab_size) {
    if (L == 0) throw std::invalid_argument("genotype construction needs L >= 1");
    Matrix C(vocab_size, vocab_size);
    for (const auto& [allele, activators] : dict) {
        if (allele >= vocab_size) throw std::out_of_range("allele index out of range");
        if (activators.empty()) {
            for (std::size_t j = 0; j < vocab_size; ++j) C(allele, j) = 1.0 / double(L);
            continue;
        }
        for (auto a : activators) {
            if (a >= vocab_size) throw std::out_of_range("activator index out of range");
            C(allele, a) = 1.0 / double(activators.size());
        }
    }
    return {C, Matrix(vocab_size, 1, 1.0)};
}

LinearSAParams build_timeseries(const std::map<std::size_t, double>& delays, const Matrix& A, std::size_t L) {
    const std::size_t d2 = A.rows();
    if (A.cols() != d2) throw DimensionError("A must be square");
    const std::size_t d = d2 + L + 1;
    Matrix C(d, d);
    for (const auto& [k, a] : delays) {
        if (k == 0 || k > L) throw std::invalid_argument("delays must lie in [1, L]");
        for (std::size_t u = k; u <= L; ++u) C(d2 + u, d2 + u - k) += a;
    }
    // row-vector convention: output row = m^T A^T = (A m)^T
    Matrix Wv(d, d2);
    for (std::size_t i = 0; i < d2; ++i)
        for (std::size_t j = 0; j < d2; ++j) Wv(i, j) = A(j, i);
    return {C, Wv};
}

LinearSAParams build_vision(const std::vector<Offset>& offsets, std::size_t H, std::size_t W) {
    const std::size_t P = H * W, d = P + 1;
    Matrix C(d, d);
    for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < W; ++c)
            for (const auto& o : offsets) {
                const long rr = long(r) + o.dr, cc = long(c) + o.dc;
                if (rr < 0 || cc < 0 || rr >= long(H) || cc >= long(W)) continue;
                C(1 + r * W + c, 1 + std::size_t(rr) * W + std::size_t(cc)) = 1.0;
            }
    Matrix Wv(d, 1);
    Wv(0, 0) = 1.0;
    return {C, Wv};
}

std::size_t FeatureLayout::dim() const {
    std::size_t d = 0;
    for (auto s : sizes) d += s;
    return d;
}

std::size_t FeatureLayout::offset(std::size_t feature) const {
    if (feature >= sizes.size()) throw std::out_of_range("feature index out of range");
    std::size_t off = 0;
    for (std::size_t k = 0; k < feature; ++k) off += sizes[k];
    return off;
}

std::vector<double> FeatureLayout::embed(const std::vector<std::size_t>& symbols) const {
    if (symbols.size() != sizes.size()) throw DimensionError("one symbol per feature expected");
    std::vector<double> x(dim(), 0.0);
    for (std::size_t f = 0; f < sizes.size(); ++f) {
        if (symbols[f] >= sizes[f]) throw std::out_of_range("feature symbol out of range");
        x[offset(f) + symbols[f]] = 1.0;
    }
    return x;
}

HFAParams build_hfa_factorized(const std::vector<FactorSpec>& factors, const FeatureLayout& layout) {
    if (factors.empty()) throw std::invalid_argument("at least one factor required");
    const std::size_t d = layout.dim(), d2 = factors[0].W.cols();
    HFAParams p;
    for (const auto& fs : factors) {
        const std::size_t qo = layout.offset(fs.query_feature), ko = layout.offset(fs.key_feature),
                          vo = layout.offset(fs.value_feature);
        if (fs.F.rows() != layout.sizes[fs.query_feature] || fs.F.cols() != layout.sizes[fs.key_feature])
            throw DimensionError("factor table does not match its feature sizes");
        if (fs.W.rows() != layout.sizes[fs.value_feature] || fs.W.cols() != d2)
            throw DimensionError("factor value table does not match its feature");
        Matrix C(d, d), W(d, d2);
        for (std::size_t i = 0; i < fs.F.rows(); ++i)
            for (std::size_t j = 0; j < fs.F.cols(); ++j) C(qo + i, ko + j) = fs.F(i, j);
        for (std::size_t i = 0; i < fs.W.rows(); ++i)
            for (std::size_t k = 0; k < d2; ++k) W(vo + i, k) = fs.W(i, k);
        p.C.push_back(std::move(C));
        p.Wv.push_back(std::move(W));
    }
    return p;
}

namespace {

void check_ternary(const TensorN& f3, const Matrix& w2, std::size_t S) {
    if (f3.shape() != std::vector<std::size_t>{S, S, S}) throw DimensionError("f3 must be |S| x |S| x |S|");
    if (w2.rows() != S || w2.cols() != S) throw DimensionError("w2 must be |S| x |S|");
}

}  // namespace

HAParams build_ha_ternary(const TensorN& f3, const Matrix& w2, std::size_t vocab_size) {
    const std::size_t S = vocab_size, R = S * S;
    check_ternary(f3, w2, S);
    HAParams p;
    p.order = 3;
    p.rank = R;
    p.sharing = false;
    p.mask = HAMask::ordered_leq;
    p.WQ = Matrix(S, R);
    Matrix K1(S, R), K2(S, R);
    p.Vout = Matrix(1, R);
    // sigma = (beta, gamma) selects one slice of f and one entry of w
    for (std::size_t b = 0; b < S; ++b)
        for (std::size_t g = 0; g < S; ++g) {
            const std::size_t s = b * S + g;
            for (std::size_t a = 0; a < S; ++a) p.WQ(a, s) = f3(a, b, g);
            K1(b, s) = 1.0;
            K2(g, s) = 1.0;
            p.Vout(0, s) = w2(b, g);
        }
    p.keys = {K1, K2};
    p.values = {K1, K2};
    return p;
}

HAParams build_ha_ternary_dense(const TensorN& f3, const Matrix& w2, std::size_t vocab_size) {
    const std::size_t S = vocab_size;
    check_ternary(f3, w2, S);
    HAParams p;
    p.order = 3;
    p.mask = HAMask::ordered_leq;
    p.C_dense = f3;
    TensorN W({S, S, 1});
    for (std::size_t b = 0; b < S; ++b)
        for (std::size_t g = 0; g < S; ++g) W(b, g, 0) = w2(b, g);
    p.W_dense = W;
    return p;
}

}  // namespace attnlab
