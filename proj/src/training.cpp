#include "attnlab/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

namespace attnlab {

namespace {

constexpr std::size_t kChunk = 32;

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

bool usable_square_base(const EmbeddingBase& base) {
    return base.B.rows() == base.B.cols() && is_orthonormal(base, 1e-9);
}

bool is_identity(const Matrix& B) { return B.rows() == B.cols() && max_abs_diff(B, Matrix::identity(B.rows())) == 0.0; }

std::string fmt(double v) { return format_g17(v); }

// C and w in symbol coordinates: B C B^T and B w
std::pair<Matrix, Matrix> symbol_coords(const LinearSAParams& p, const EmbeddingBase& base) {
    if (is_identity(base.B)) return {p.C, p.Wv};
    return {matmul(matmul(base.B, p.C), base.B.transpose()), matmul(base.B, p.Wv)};
}

std::vector<double> residual_from(const Matrix& Ct, const Matrix& wt, const Matrix& C0, const Matrix& w0) {
    const std::size_t S = Ct.rows();
    std::vector<double> r(S);
    for (std::size_t a = 0; a < S; ++a) {
        double ct = 0, c0 = 0;
        for (std::size_t m = 0; m < S; ++m) {
            ct += Ct(m, a) * Ct(m, a);
            c0 += C0(m, a) * C0(m, a);
        }
        r[a] = (wt(a, 0) * wt(a, 0) - ct) - (w0(a, 0) * w0(a, 0) - c0);
    }
    return r;
}

double max_abs(const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

void check_linear_batch(const LinearSAParams& p, const SequenceBatch& batch) {
    if (batch.size() == 0) throw std::invalid_argument("empty batch");
    const std::size_t d = p.C.rows();
    if (p.C.cols() != d || p.Wv.rows() != d) throw DimensionError("linear SA params: C must be d x d, Wv d x d2");
    for (std::size_t n = 0; n < batch.size(); ++n) {
        if (batch.X[n].cols() != d) throw DimensionError("batch embedding width does not match C");
        if (batch.Y[n].rows() != batch.X[n].rows() || batch.Y[n].cols() != p.Wv.cols())
            throw DimensionError("batch targets do not match the output shape");
    }
}

// loss and (optionally) the displayed gradient formulas
double linear_loss_grad(const LinearSAParams& p, const SequenceBatch& batch, LinearSAGrad* g) {
    check_linear_batch(p, batch);
    const std::size_t d = p.C.rows(), nc = chunk_count(batch.size(), kChunk);
    const double scale = 2.0 / double(batch.size());
    std::vector<double> loss(nc, 0.0);
    std::vector<LinearSAGrad> part(g ? nc : 0);
    const Matrix Ct = p.C.transpose();
    for_each_chunk(batch.size(), kChunk, [&](std::size_t c, std::size_t b, std::size_t e) {
        if (g) part[c] = {Matrix(d, d), Matrix(d, 1)};
        for (std::size_t n = b; n < e; ++n) {
            const Matrix& X = batch.X[n];
            const Matrix Xt = X.transpose();
            const Matrix G = matmul(Xt, X);
            Matrix D = matmul(matmul(X, matmul(p.C, G)), p.Wv) - batch.Y[n];
            loss[c] += D.frobenius_sq();
            if (!g) continue;
            const Matrix XtD = matmul(Xt, D);
            part[c].dC += matmul(matmul(XtD, p.Wv.transpose()), G);
            part[c].dw += matmul(matmul(G, Ct), XtD);
        }
    });
    double total = 0;
    for (double l : loss) total += l;
    if (g) {
        *g = {Matrix(d, d), Matrix(d, 1)};
        for (auto& q : part) {
            g->dC += q.dC;
            g->dw += q.dw;
        }
        g->dC *= scale;
        g->dw *= scale;
    }
    return total / double(batch.size());
}

}  // namespace

void TrainConfig::validate() const {
    if (!(eta > 0) || !std::isfinite(eta)) throw std::invalid_argument("training step size must be positive");
    if (!(init_bias > 0)) throw std::invalid_argument("init bias b must be positive");
    if (log_period == 0) throw std::invalid_argument("log period must be positive");
    if (!(loss_tol >= 0)) throw std::invalid_argument("loss tolerance must be nonnegative");
}

void TrainTrace::write_csv(std::ostream& os) const {
    os << "step,loss,max_conservation_residual,min_w\n";
    for (const auto& r : rows)
        os << r.step << ',' << fmt(r.loss) << ',' << fmt(r.max_residual) << ',' << fmt(r.min_w) << '\n';
}

double mse_loss(const LinearSAParams& p, const SequenceBatch& batch) { return linear_loss_grad(p, batch, nullptr); }

double mse_loss(const HAParams& p, const SequenceBatch& batch) {
    if (batch.size() == 0) throw std::invalid_argument("empty batch");
    double total = 0;
    for (std::size_t n = 0; n < batch.size(); ++n) total += (ha_naive(batch.X[n], p) - batch.Y[n]).frobenius_sq();
    return total / double(batch.size());
}

double target_power(const SequenceBatch& batch) {
    if (batch.size() == 0) throw std::invalid_argument("empty batch");
    double total = 0;
    for (const auto& y : batch.Y) total += y.frobenius_sq();
    return total / double(batch.size());
}

LinearSAGrad grad_linear_sa(const LinearSAParams& p, const SequenceBatch& batch) {
    if (p.Wv.cols() != 1) throw UnsupportedConfiguration("grad_linear_sa: only d2 = 1 is supported");
    LinearSAGrad g;
    linear_loss_grad(p, batch, &g);
    return g;
}

LinearSAMoments::LinearSAMoments(const SequenceBatch& batch, const EmbeddingBase& base) : base_(base) {
    if (!usable_square_base(base)) throw UnsupportedConfiguration("moment path needs a square orthonormal base");
    if (batch.size() == 0) throw std::invalid_argument("empty batch");
    if (batch.d2 != 1) throw UnsupportedConfiguration("moment path needs d2 = 1");
    S_ = base.vocab_size();
    identity_base_ = is_identity(base.B);
    B_ = double(batch.size());
    M3_.assign(S_ * S_ * S_, 0.0);
    Z_ = Matrix(S_, S_);
    std::vector<double> s(S_), z(S_);
    std::vector<std::size_t> present;
    for (std::size_t n = 0; n < batch.size(); ++n) {
        std::fill(s.begin(), s.end(), 0.0);
        std::fill(z.begin(), z.end(), 0.0);
        const Tuple& t = batch.tuples[n];
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (t[i] >= S_) throw DimensionError("token outside the vocabulary");
            s[t[i]] += 1.0;
            z[t[i]] += batch.Y[n](i, 0);
            Y2_ += batch.Y[n](i, 0) * batch.Y[n](i, 0);
        }
        present.clear();
        for (std::size_t m = 0; m < S_; ++m)
            if (s[m] != 0) present.push_back(m);
        for (auto m : present) {
            for (auto v : present) Z_(m, v) += z[m] * s[v];
            for (auto k : present) {
                double* row = &M3_[(m * S_ + k) * S_];
                const double smk = s[m] * s[k];
                for (auto v : present) row[v] += smk * s[v];
            }
        }
    }
}

double LinearSAMoments::loss_and_grad(const LinearSAParams& p, LinearSAGrad* grad) const {
    if (p.C.rows() != S_ || p.C.cols() != S_ || p.Wv.rows() != S_ || p.Wv.cols() != 1)
        throw DimensionError("params do not match the moment base");
    Matrix C, w;
    if (identity_base_) {
        C = p.C;
        w = p.Wv;
    } else {
        std::tie(C, w) = symbol_coords(p, base_);
    }
    const std::size_t S = S_;
    Matrix A(S, S), G(S, S);
    for (std::size_t m = 0; m < S; ++m)
        for (std::size_t k = 0; k < S; ++k) A(m, k) = C(m, k) * w(k, 0);
    double lin = 0, quad = 0;
    for (std::size_t m = 0; m < S; ++m) {
        double* gm = G.row_ptr(m);
        for (std::size_t k = 0; k < S; ++k) {
            const double a = A(m, k);
            if (a == 0) continue;
            const double* row = &M3_[(m * S + k) * S];
            for (std::size_t v = 0; v < S; ++v) gm[v] += a * row[v];
        }
        for (std::size_t v = 0; v < S; ++v) {
            quad += gm[v] * A(m, v);
            lin += A(m, v) * Z_(m, v);
            gm[v] -= Z_(m, v);
        }
    }
    const double loss = (Y2_ - 2.0 * lin + quad) / B_;
    if (grad) {
        const double sc = 2.0 / B_;
        Matrix dC(S, S), dw(S, 1);
        for (std::size_t m = 0; m < S; ++m)
            for (std::size_t k = 0; k < S; ++k) {
                dC(m, k) = sc * G(m, k) * w(k, 0);
                dw(k, 0) += sc * C(m, k) * G(m, k);
            }
        if (identity_base_) {
            grad->dC = std::move(dC);
            grad->dw = std::move(dw);
        } else {
            const Matrix Bt = base_.B.transpose();
            grad->dC = matmul(matmul(Bt, dC), base_.B);
            grad->dw = matmul(Bt, dw);
        }
    }
    return loss;
}

LinearSAParams initial_linear_sa(const EmbeddingBase& base, double b) {
    const std::size_t d = base.dim();
    return {Matrix(d, d), matmul(base.B.transpose(), Matrix(base.vocab_size(), 1, b))};
}

std::vector<double> conservation_residual(const LinearSAParams& pt, const LinearSAParams& p0, const EmbeddingBase& base) {
    if (pt.Wv.cols() != 1 || p0.Wv.cols() != 1) throw UnsupportedConfiguration("conservation residual needs d2 = 1");
    auto [Ct, wt] = symbol_coords(pt, base);
    auto [C0, w0] = symbol_coords(p0, base);
    return residual_from(Ct, wt, C0, w0);
}

LinearTrainResult train_linear_sa(const SequenceBatch& batch, const EmbeddingBase& base, const TrainConfig& cfg) {
    cfg.validate();
    return train_linear_sa(batch, base, cfg, initial_linear_sa(base, cfg.init_bias));
}

LinearTrainResult train_linear_sa(const SequenceBatch& batch, const EmbeddingBase& base, const TrainConfig& cfg,
                                  const LinearSAParams& init) {
    cfg.validate();
    if (init.Wv.cols() != 1) throw UnsupportedConfiguration("train_linear_sa: only d2 = 1 is supported");
    check_linear_batch(init, batch);
    if (base.dim() != init.C.rows()) throw DimensionError("base width does not match params");

    std::optional<LinearSAMoments> mom;
    if (usable_square_base(base) && base.vocab_size() <= 256) mom.emplace(batch, base);

    LinearTrainResult res{init, {}};
    auto& tr = res.trace;
    auto [C0, w0] = symbol_coords(init, base);
    tr.min_w = w0.data().empty() ? 0.0 : *std::min_element(w0.data().begin(), w0.data().end());

    LinearSAParams& p = res.params;
    LinearSAGrad g;
    double loss0 = 0;
    for (std::size_t step = 0;; ++step) {
        const double loss = mom ? mom->loss_and_grad(p, &g) : linear_loss_grad(p, batch, &g);
        if (step == 0) loss0 = loss;
        if (!std::isfinite(loss) || (step > 0 && loss > 10.0 * loss0)) {
            std::ostringstream os;
            os << "training diverged at step " << step << ": loss " << fmt(loss) << " vs initial " << fmt(loss0)
               << "; reduce the step size below " << fmt(cfg.eta);
            throw DivergenceError(os.str());
        }
        auto [Ct, wt] = symbol_coords(p, base);
        const double res_now = max_abs(residual_from(Ct, wt, C0, w0));
        const double minw = *std::min_element(wt.data().begin(), wt.data().end());
        tr.max_residual = std::max(tr.max_residual, res_now);
        tr.min_w = std::min(tr.min_w, minw);

        const bool done = loss <= cfg.loss_tol || step >= cfg.max_steps;
        if (step % cfg.log_period == 0 || done) {
            tr.rows.push_back({step, loss, res_now, minw});
            if (cfg.keep_snapshots) tr.snapshots.push_back(p);
        }
        if (done) {
            tr.steps = step;
            tr.converged = loss <= cfg.loss_tol;
            break;
        }
        for (std::size_t k = 0; k < p.C.size(); ++k) p.C.data()[k] -= cfg.eta * g.dC.data()[k];
        for (std::size_t k = 0; k < p.Wv.size(); ++k) p.Wv.data()[k] -= cfg.eta * g.dw.data()[k];
    }
    tr.final_loss = mse_loss(p, batch);
    return res;
}

// ---- order-3 HyperAttention

namespace {

void check_ha3(const HAParams& p, std::size_t d) {
    if (p.order != 3) throw UnsupportedConfiguration("HA training supports order 3 only");
    if (p.nonlinearity != Nonlinearity::linear) throw UnsupportedConfiguration("HA training supports linear HA only");
    if (!p.C_dense || !p.W_dense) throw UnsupportedConfiguration("HA training needs dense-mode params");
    if (p.scale_sqrt_dk) throw UnsupportedConfiguration("HA training does not scale scores");
    p.validate(d);
    if (p.W_dense->shape()[2] != 1) throw UnsupportedConfiguration("HA training supports d2 = 1 only");
}

// out_{abc} = sum T_{xyz} M_{ax} M_{by} M_{cz}
TensorN mode3(const TensorN& T, const Matrix& M) {
    const std::size_t n = T.shape()[0], m = M.rows();
    TensorN a({m, n, n}), b({m, m, n}), c({m, m, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t x = 0; x < n; ++x) {
            const double f = M(i, x);
            if (f == 0) continue;
            for (std::size_t y = 0; y < n; ++y)
                for (std::size_t z = 0; z < n; ++z) a(i, y, z) += f * T(x, y, z);
        }
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t y = 0; y < n; ++y) {
                const double f = M(j, y);
                if (f == 0) continue;
                for (std::size_t z = 0; z < n; ++z) b(i, j, z) += f * a(i, y, z);
            }
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t k = 0; k < m; ++k) {
                double s = 0;
                for (std::size_t z = 0; z < n; ++z) s += M(k, z) * b(i, j, z);
                c(i, j, k) = s;
            }
    return c;
}

Matrix w_matrix(const TensorN& W) {
    const std::size_t d = W.shape()[0];
    return Matrix(d, d, W.data());
}

TensorN w_tensor(const Matrix& W) {
    TensorN t({W.rows(), W.cols(), 1});
    t.data() = W.data();
    return t;
}

std::vector<std::pair<std::size_t, std::size_t>> allowed_pairs(HAMask mask, std::size_t L) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t j = 0; j < L; ++j)
        for (std::size_t k = 0; k < L; ++k)
            if (ha_mask_allows(mask, {j, k})) out.push_back({j, k});
    return out;
}

double ha3_loss_grad(const HAParams& p, const SequenceBatch& batch, HA3Grad* g) {
    if (batch.size() == 0) throw std::invalid_argument("empty batch");
    const std::size_t d = batch.X[0].cols();
    check_ha3(p, d);
    const TensorN& C = *p.C_dense;
    const Matrix W = w_matrix(*p.W_dense);
    const Matrix Cflat(d, d * d, C.data());  // row mu, column (nu, sigma)
    const std::size_t nc = chunk_count(batch.size(), kChunk);
    std::vector<double> loss(nc, 0.0);
    std::vector<Matrix> dCp(g ? nc : 0), dWp(g ? nc : 0);
    for_each_chunk(batch.size(), kChunk, [&](std::size_t c, std::size_t b, std::size_t e) {
        if (g) {
            dCp[c] = Matrix(d, d * d);
            dWp[c] = Matrix(d, d);
        }
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        std::size_t pairs_L = 0;
        for (std::size_t n = b; n < e; ++n) {
            const Matrix& X = batch.X[n];
            const std::size_t L = X.rows();
            if (X.cols() != d || batch.Y[n].rows() != L || batch.Y[n].cols() != 1)
                throw DimensionError("HA batch shapes are inconsistent");
            if (L != pairs_L) {
                pairs = allowed_pairs(p.mask, L);
                pairs_L = L;
            }
            // value of each key pair, then P = sum_{(j,k)} v_jk x_j x_k^T
            const Matrix XW = matmul(X, W);
            Matrix P(d, d);
            for (auto [j, k] : pairs) {
                double v = 0;
                for (std::size_t a = 0; a < d; ++a) v += XW(j, a) * X(k, a);
                if (v == 0) continue;
                for (std::size_t a = 0; a < d; ++a) {
                    const double f = v * X(j, a);
                    if (f == 0) continue;
                    for (std::size_t s = 0; s < d; ++s) P(a, s) += f * X(k, s);
                }
            }
            const Matrix Pvec(d * d, 1, P.data());
            const Matrix out = matmul(X, matmul(Cflat, Pvec));
            const Matrix D = out - batch.Y[n];
            loss[c] += D.frobenius_sq();
            if (!g) continue;
            const Matrix r = matmul(X.transpose(), D);  // d x 1
            for (std::size_t m = 0; m < d; ++m) {
                if (r(m, 0) == 0) continue;
                for (std::size_t q = 0; q < d * d; ++q) dCp[c](m, q) += r(m, 0) * P.data()[q];
            }
            // K = sum_mu C[mu,:,:] r_mu; dW += sum_{(j,k)} (x_j^T K x_k) x_j x_k^T
            const Matrix K(d, d, matmul(r.transpose(), Cflat).data());
            const Matrix XK = matmul(X, K);
            for (auto [j, k] : pairs) {
                double e2 = 0;
                for (std::size_t a = 0; a < d; ++a) e2 += XK(j, a) * X(k, a);
                if (e2 == 0) continue;
                for (std::size_t a = 0; a < d; ++a) {
                    const double f = e2 * X(j, a);
                    if (f == 0) continue;
                    for (std::size_t s = 0; s < d; ++s) dWp[c](a, s) += f * X(k, s);
                }
            }
        }
    });
    double total = 0;
    for (double l : loss) total += l;
    if (g) {
        const double sc = 2.0 / double(batch.size());
        Matrix dC(d, d * d), dW(d, d);
        for (std::size_t c = 0; c < nc; ++c) {
            dC += dCp[c];
            dW += dWp[c];
        }
        dC *= sc;
        dW *= sc;
        g->dC = TensorN({d, d, d});
        g->dC.data() = dC.data();
        g->dW = w_tensor(dW);
    }
    return total / double(batch.size());
}

std::pair<TensorN, Matrix> ha_symbol_coords(const HAParams& p, const EmbeddingBase& base) {
    if (is_identity(base.B)) return {*p.C_dense, w_matrix(*p.W_dense)};
    return {mode3(*p.C_dense, base.B), matmul(matmul(base.B, w_matrix(*p.W_dense)), base.B.transpose())};
}

std::vector<double> ha_residual_from(const TensorN& Ct, const Matrix& Wt, const TensorN& C0, const Matrix& W0) {
    const std::size_t S = Wt.rows();
    std::vector<double> r(S * S);
    for (std::size_t a = 0; a < S; ++a)
        for (std::size_t b = 0; b < S; ++b) {
            double ct = 0, c0 = 0;
            for (std::size_t m = 0; m < S; ++m) {
                ct += Ct(m, a, b) * Ct(m, a, b);
                c0 += C0(m, a, b) * C0(m, a, b);
            }
            r[a * S + b] = (Wt(a, b) * Wt(a, b) - ct) - (W0(a, b) * W0(a, b) - c0);
        }
    return r;
}

}  // namespace

HA3Grad grad_ha3(const HAParams& p, const SequenceBatch& batch) {
    HA3Grad g;
    ha3_loss_grad(p, batch, &g);
    return g;
}

HA3Moments::HA3Moments(const SequenceBatch& batch, const EmbeddingBase& base, HAMask mask) : base_(base) {
    if (!usable_square_base(base)) throw UnsupportedConfiguration("moment path needs a square orthonormal base");
    if (batch.size() == 0) throw std::invalid_argument("empty batch");
    if (batch.d2 != 1) throw UnsupportedConfiguration("moment path needs d2 = 1");
    S_ = base.vocab_size();
    if (S_ > 24) throw UnsupportedConfiguration("HA moment path is limited to |S| <= 24");
    identity_base_ = is_identity(base.B);
    B_ = double(batch.size());
    const std::size_t S = S_, P = S * S;
    M_.assign(S * P * P, 0.0);
    Z_ = Matrix(S, P);
    std::vector<double> s(S), z(S), gam(P);
    std::vector<std::size_t> present, nz;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::size_t pairs_L = 0;
    for (std::size_t n = 0; n < batch.size(); ++n) {
        const Tuple& t = batch.tuples[n];
        if (t.size() != pairs_L) {
            pairs = allowed_pairs(mask, t.size());
            pairs_L = t.size();
        }
        std::fill(s.begin(), s.end(), 0.0);
        std::fill(z.begin(), z.end(), 0.0);
        std::fill(gam.begin(), gam.end(), 0.0);
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (t[i] >= S) throw DimensionError("token outside the vocabulary");
            s[t[i]] += 1.0;
            z[t[i]] += batch.Y[n](i, 0);
            Y2_ += batch.Y[n](i, 0) * batch.Y[n](i, 0);
        }
        for (auto [j, k] : pairs) gam[t[j] * S + t[k]] += 1.0;
        present.clear();
        nz.clear();
        for (std::size_t m = 0; m < S; ++m)
            if (s[m] != 0) present.push_back(m);
        for (std::size_t q = 0; q < P; ++q)
            if (gam[q] != 0) nz.push_back(q);
        for (auto m : present) {
            for (auto q : nz) Z_(m, q) += z[m] * gam[q];
            for (auto a : nz) {
                double* row = &M_[(m * P + a) * P];
                const double f = s[m] * gam[a];
                for (auto q : nz) row[q] += f * gam[q];
            }
        }
    }
}

double HA3Moments::loss_and_grad(const HAParams& p, HA3Grad* grad) const {
    check_ha3(p, S_);
    auto [C, W] = identity_base_ ? std::pair<TensorN, Matrix>{*p.C_dense, w_matrix(*p.W_dense)}
                                 : ha_symbol_coords(p, base_);
    const std::size_t S = S_, P = S * S;
    const double* w = W.data().data();
    Matrix A(S, P), G(S, P);
    for (std::size_t m = 0; m < S; ++m)
        for (std::size_t q = 0; q < P; ++q) A(m, q) = C.data()[m * P + q] * w[q];
    double lin = 0, quad = 0;
    for (std::size_t m = 0; m < S; ++m) {
        double* gm = G.row_ptr(m);
        for (std::size_t a = 0; a < P; ++a) {
            const double v = A(m, a);
            if (v == 0) continue;
            const double* row = &M_[(m * P + a) * P];
            for (std::size_t q = 0; q < P; ++q) gm[q] += v * row[q];
        }
        for (std::size_t q = 0; q < P; ++q) {
            quad += gm[q] * A(m, q);
            lin += A(m, q) * Z_(m, q);
            gm[q] -= Z_(m, q);
        }
    }
    const double loss = (Y2_ - 2.0 * lin + quad) / B_;
    if (grad) {
        const double sc = 2.0 / B_;
        TensorN dC({S, S, S});
        Matrix dW(S, S);
        for (std::size_t m = 0; m < S; ++m)
            for (std::size_t q = 0; q < P; ++q) {
                dC.data()[m * P + q] = sc * G(m, q) * w[q];
                dW.data()[q] += sc * C.data()[m * P + q] * G(m, q);
            }
        if (identity_base_) {
            grad->dC = std::move(dC);
            grad->dW = w_tensor(dW);
        } else {
            const Matrix Bt = base_.B.transpose();
            grad->dC = mode3(dC, Bt);
            grad->dW = w_tensor(matmul(matmul(Bt, dW), base_.B));
        }
    }
    return loss;
}

HAParams initial_ha3(const EmbeddingBase& base, double b, HAMask mask) {
    const std::size_t d = base.dim();
    HAParams p;
    p.order = 3;
    p.mask = mask;
    p.C_dense = TensorN({d, d, d});
    const Matrix Bt = base.B.transpose();
    p.W_dense = w_tensor(matmul(matmul(Bt, Matrix(base.vocab_size(), base.vocab_size(), b)), base.B));
    return p;
}

std::vector<double> ha3_conservation_residual(const HAParams& pt, const HAParams& p0, const EmbeddingBase& base) {
    check_ha3(pt, base.dim());
    check_ha3(p0, base.dim());
    auto [Ct, Wt] = ha_symbol_coords(pt, base);
    auto [C0, W0] = ha_symbol_coords(p0, base);
    return ha_residual_from(Ct, Wt, C0, W0);
}

HA3TrainResult train_ha3(const SequenceBatch& batch, const EmbeddingBase& base, const TrainConfig& cfg, HAMask mask) {
    cfg.validate();
    HA3TrainResult res{initial_ha3(base, cfg.init_bias, mask), {}};
    check_ha3(res.params, base.dim());

    std::optional<HA3Moments> mom;
    if (usable_square_base(base) && base.vocab_size() <= 24) mom.emplace(batch, base, mask);

    auto& tr = res.trace;
    HAParams& p = res.params;
    auto [C0, W0] = ha_symbol_coords(p, base);
    tr.min_w = *std::min_element(W0.data().begin(), W0.data().end());
    HA3Grad g;
    double loss0 = 0;
    for (std::size_t step = 0;; ++step) {
        const double loss = mom ? mom->loss_and_grad(p, &g) : ha3_loss_grad(p, batch, &g);
        if (step == 0) loss0 = loss;
        if (!std::isfinite(loss) || (step > 0 && loss > 10.0 * loss0)) {
            std::ostringstream os;
            os << "training diverged at step " << step << ": loss " << fmt(loss) << " vs initial " << fmt(loss0)
               << "; reduce the step size below " << fmt(cfg.eta);
            throw DivergenceError(os.str());
        }
        auto [Ct, Wt] = ha_symbol_coords(p, base);
        const double res_now = max_abs(ha_residual_from(Ct, Wt, C0, W0));
        const double minw = *std::min_element(Wt.data().begin(), Wt.data().end());
        tr.max_residual = std::max(tr.max_residual, res_now);
        tr.min_w = std::min(tr.min_w, minw);

        const bool done = loss <= cfg.loss_tol || step >= cfg.max_steps;
        if (step % cfg.log_period == 0 || done) tr.rows.push_back({step, loss, res_now, minw});
        if (done) {
            tr.steps = step;
            tr.converged = loss <= cfg.loss_tol;
            break;
        }
        auto& cd = p.C_dense->data();
        auto& wd = p.W_dense->data();
        for (std::size_t k = 0; k < cd.size(); ++k) cd[k] -= cfg.eta * g.dC.data()[k];
        for (std::size_t k = 0; k < wd.size(); ++k) wd[k] -= cfg.eta * g.dW.data()[k];
    }
    tr.final_loss = mse_loss(p, batch);
    return res;
}

// ---- numerically trained models

Matrix mha_stack(const Matrix& X, const MHAStack& s) {
    if (s.layers.empty()) throw std::invalid_argument("mha stack has no layers");
    Matrix H = X;
    for (const auto& layer : s.layers) H = multihead_linear_sa(H, layer);
    return H;
}

Matrix generic_forward(const Matrix& X, const GenericParams& p) {
    if (auto* h = std::get_if<std::vector<HFAParams>>(&p)) return hfa_multihead(X, *h);
    return mha_stack(X, std::get<MHAStack>(p));
}

namespace {

std::vector<Matrix*> param_refs(GenericParams& p) {
    std::vector<Matrix*> out;
    if (auto* hs = std::get_if<std::vector<HFAParams>>(&p)) {
        for (auto& h : *hs) {
            for (auto& c : h.C) out.push_back(&c);
            for (auto& w : h.Wv) out.push_back(&w);
        }
    } else {
        for (auto& layer : std::get<MHAStack>(p).layers) {
            for (auto& h : layer.heads) {
                out.push_back(&h.C);
                out.push_back(&h.Wv);
            }
            if (!layer.WO.empty()) out.push_back(&layer.WO);
        }
    }
    return out;
}

GenericParams zeros_like(const GenericParams& p) {
    GenericParams z = p;
    for (Matrix* m : param_refs(z)) std::fill(m->data().begin(), m->data().end(), 0.0);
    return z;
}

void check_hfa_trainable(const HFAParams& h) {
    if (h.nonlinearity != Nonlinearity::linear || h.scale_sqrt_dk)
        throw UnsupportedConfiguration("generic training supports unscaled linear HFA only");
    if (h.order() == 0) throw std::invalid_argument("HFA head without factors");
}

// out = sum over heads of (prod_a X C_a X^T) (prod_a X W_a); returns ||out - Y||^2
double hfa_sample(const Matrix& X, const Matrix& Y, const std::vector<HFAParams>& heads, std::vector<HFAParams>* grad,
                  double scale) {
    const std::size_t L = X.rows();
    struct Cache {
        std::vector<Matrix> S, V;
        Matrix Sprod, Vprod;
    };
    std::vector<Cache> cache(heads.size());
    Matrix out(L, Y.cols());
    for (std::size_t h = 0; h < heads.size(); ++h) {
        const auto& hp = heads[h];
        check_hfa_trainable(hp);
        auto& c = cache[h];
        const std::size_t nv = hp.variant == HFAVariant::single_value ? 1 : hp.order();
        for (const auto& C : hp.C) {
            c.S.push_back(matmul(matmul(X, C), X.transpose()));
            c.Sprod = c.Sprod.empty() ? c.S.back() : hadamard(c.Sprod, c.S.back());
        }
        for (std::size_t a = 0; a < nv; ++a) {
            c.V.push_back(matmul(X, hp.Wv[a]));
            c.Vprod = c.Vprod.empty() ? c.V.back() : hadamard(c.Vprod, c.V.back());
        }
        out += matmul(c.Sprod, c.Vprod);
    }
    Matrix D = out - Y;
    const double loss = D.frobenius_sq();
    if (!grad) return loss;
    D *= scale;
    const Matrix Xt = X.transpose();
    for (std::size_t h = 0; h < heads.size(); ++h) {
        const auto& c = cache[h];
        auto& gh = (*grad)[h];
        const Matrix dS = matmul(D, c.Vprod.transpose());
        const Matrix dV = matmul(c.Sprod.transpose(), D);
        for (std::size_t a = 0; a < c.S.size(); ++a) {
            Matrix dSa = dS;
            for (std::size_t b = 0; b < c.S.size(); ++b)
                if (b != a) dSa = hadamard(dSa, c.S[b]);
            gh.C[a] += matmul(matmul(Xt, dSa), X);
        }
        for (std::size_t a = 0; a < c.V.size(); ++a) {
            Matrix dVa = dV;
            for (std::size_t b = 0; b < c.V.size(); ++b)
                if (b != a) dVa = hadamard(dVa, c.V[b]);
            gh.Wv[a] += matmul(Xt, dVa);
        }
    }
    return loss;
}

double mha_sample(const Matrix& X, const Matrix& Y, const MHAStack& s, MHAStack* grad, double scale) {
    struct HeadCache {
        Matrix S, V;
    };
    struct LayerCache {
        Matrix H, Hcat;
        std::vector<HeadCache> heads;
    };
    std::vector<LayerCache> cache(s.layers.size());
    Matrix H = X;
    for (std::size_t l = 0; l < s.layers.size(); ++l) {
        const auto& layer = s.layers[l];
        auto& lc = cache[l];
        lc.H = H;
        const Matrix Ht = H.transpose();
        std::vector<Matrix> outs;
        for (const auto& hp : layer.heads) {
            HeadCache hc{matmul(matmul(H, hp.C), Ht), matmul(H, hp.Wv)};
            outs.push_back(matmul(hc.S, hc.V));
            lc.heads.push_back(std::move(hc));
        }
        if (layer.WO.empty()) {
            H = outs[0];
            for (std::size_t h = 1; h < outs.size(); ++h) H += outs[h];
        } else {
            std::size_t width = 0;
            for (auto& o : outs) width += o.cols();
            lc.Hcat = Matrix(H.rows(), width);
            std::size_t off = 0;
            for (auto& o : outs) {
                for (std::size_t i = 0; i < o.rows(); ++i)
                    std::copy(o.row_ptr(i), o.row_ptr(i) + o.cols(), lc.Hcat.row_ptr(i) + off);
                off += o.cols();
            }
            H = matmul(lc.Hcat, layer.WO);
        }
    }
    Matrix D = H - Y;
    const double loss = D.frobenius_sq();
    if (!grad) return loss;
    D *= scale;
    Matrix dH = D;
    for (std::size_t l = s.layers.size(); l-- > 0;) {
        const auto& layer = s.layers[l];
        auto& gl = grad->layers[l];
        const auto& lc = cache[l];
        std::vector<Matrix> dO;
        if (layer.WO.empty()) {
            dO.assign(layer.heads.size(), dH);
        } else {
            gl.WO += matmul(lc.Hcat.transpose(), dH);
            const Matrix dcat = matmul(dH, layer.WO.transpose());
            std::size_t off = 0;
            for (const auto& hp : layer.heads) {
                Matrix o(dcat.rows(), hp.Wv.cols());
                for (std::size_t i = 0; i < o.rows(); ++i)
                    std::copy(dcat.row_ptr(i) + off, dcat.row_ptr(i) + off + o.cols(), o.row_ptr(i));
                off += o.cols();
                dO.push_back(std::move(o));
            }
        }
        const Matrix& Hin = lc.H;
        const Matrix Ht = Hin.transpose();
        Matrix dIn(Hin.rows(), Hin.cols());
        for (std::size_t h = 0; h < layer.heads.size(); ++h) {
            const auto& hp = layer.heads[h];
            const auto& hc = lc.heads[h];
            const Matrix dV = matmul(hc.S.transpose(), dO[h]);
            const Matrix dS = matmul(dO[h], hc.V.transpose());
            gl.heads[h].C += matmul(matmul(Ht, dS), Hin);
            gl.heads[h].Wv += matmul(Ht, dV);
            if (l == 0) continue;
            dIn += matmul(matmul(dS, Hin), hp.C.transpose());
            dIn += matmul(matmul(dS.transpose(), Hin), hp.C);
            dIn += matmul(dV, hp.Wv.transpose());
        }
        dH = std::move(dIn);
    }
    return loss;
}

double generic_eval(const GenericParams& p, const SequenceBatch& batch, GenericParams* grad) {
    if (batch.size() == 0) throw std::invalid_argument("empty batch");
    const std::size_t nc = chunk_count(batch.size(), kChunk);
    const double scale = 2.0 / double(batch.size());
    std::vector<double> loss(nc, 0.0);
    std::vector<GenericParams> part;
    if (grad) part.assign(nc, zeros_like(p));
    for_each_chunk(batch.size(), kChunk, [&](std::size_t c, std::size_t b, std::size_t e) {
        for (std::size_t n = b; n < e; ++n) {
            if (auto* hs = std::get_if<std::vector<HFAParams>>(&p))
                loss[c] += hfa_sample(batch.X[n], batch.Y[n], *hs,
                                      grad ? &std::get<std::vector<HFAParams>>(part[c]) : nullptr, scale);
            else
                loss[c] += mha_sample(batch.X[n], batch.Y[n], std::get<MHAStack>(p),
                                      grad ? &std::get<MHAStack>(part[c]) : nullptr, scale);
        }
    });
    double total = 0;
    for (double l : loss) total += l;
    if (grad) {
        *grad = zeros_like(p);
        auto dst = param_refs(*grad);
        for (auto& q : part) {
            auto src = param_refs(q);
            for (std::size_t k = 0; k < dst.size(); ++k) *dst[k] += *src[k];
        }
    }
    return total / double(batch.size());
}

}  // namespace

std::size_t parameter_count(const GenericParams& p) {
    GenericParams copy = p;
    std::size_t n = 0;
    if (auto* hs = std::get_if<std::vector<HFAParams>>(&copy)) {
        // single_value heads carry unused value matrices
        for (auto& h : *hs) {
            for (auto& c : h.C) n += c.size();
            const std::size_t nv = h.variant == HFAVariant::single_value ? 1 : h.order();
            for (std::size_t a = 0; a < nv && a < h.Wv.size(); ++a) n += h.Wv[a].size();
        }
        return n;
    }
    for (Matrix* m : param_refs(copy)) n += m->size();
    return n;
}

double generic_loss(const GenericParams& p, const SequenceBatch& batch) { return generic_eval(p, batch, nullptr); }

double generic_loss_and_grad(const GenericParams& p, const SequenceBatch& batch, GenericParams& grad) {
    return generic_eval(p, batch, &grad);
}

double generic_gradient_check(const GenericParams& p, const SequenceBatch& batch, double h) {
    GenericParams g;
    generic_loss_and_grad(p, batch, g);
    GenericParams q = p;
    auto qr = param_refs(q);
    auto gr = param_refs(g);
    double err = 0, scale = 0;
    for (std::size_t k = 0; k < qr.size(); ++k)
        for (std::size_t i = 0; i < qr[k]->size(); ++i) {
            double& x = qr[k]->data()[i];
            const double x0 = x;
            x = x0 + h;
            const double up = generic_loss(q, batch);
            x = x0 - h;
            const double dn = generic_loss(q, batch);
            x = x0;
            const double num = (up - dn) / (2 * h);
            err = std::max(err, std::abs(num - gr[k]->data()[i]));
            scale = std::max(scale, std::abs(num));
        }
    return scale == 0 ? err : err / scale;
}

GenericParams init_hfa(std::size_t d, std::size_t d2, std::size_t heads, std::size_t order, double scale,
                       double value_init, std::uint64_t seed) {
    require(d > 0 && d2 > 0 && heads > 0 && order > 0, "init_hfa: sizes must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<HFAParams> hs(heads);
    for (auto& h : hs) {
        for (std::size_t a = 0; a < order; ++a) {
            Matrix C(d, d);
            for (double& v : C.data()) v = scale * nd(rng);
            h.C.push_back(std::move(C));
        }
        for (std::size_t a = 0; a < order; ++a) {
            Matrix W(d, d2);
            for (double& v : W.data()) v = value_init + scale * nd(rng);
            h.Wv.push_back(std::move(W));
        }
    }
    return hs;
}

GenericParams init_mha_stack(std::size_t d, std::size_t d2, std::size_t layers, std::size_t heads,
                             std::size_t head_dim, double scale, std::uint64_t seed) {
    require(d > 0 && d2 > 0 && layers > 0 && heads > 0 && head_dim > 0, "init_mha_stack: sizes must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    auto fill = [&](Matrix m) {
        for (double& v : m.data()) v = scale * nd(rng);
        return m;
    };
    MHAStack s;
    for (std::size_t l = 0; l < layers; ++l) {
        MultiheadLinearSAParams layer;
        for (std::size_t h = 0; h < heads; ++h) layer.heads.push_back({fill(Matrix(d, d)), fill(Matrix(d, head_dim))});
        layer.WO = fill(Matrix(heads * head_dim, l + 1 == layers ? d2 : d));
        s.layers.push_back(std::move(layer));
    }
    return s;
}

std::string to_string(Optimizer o) { return o == Optimizer::gd ? "gd" : "adam"; }

Optimizer optimizer_from_string(const std::string& s) {
    if (s == "gd") return Optimizer::gd;
    if (s == "adam") return Optimizer::adam;
    throw std::invalid_argument("unknown optimizer '" + s + "'");
}

void GenericConfig::validate() const {
    if (!(lr > 0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be positive");
    if (log_period == 0) throw std::invalid_argument("log period must be positive");
}

void GenericResult::write_csv(std::ostream& os) const {
    os << "step,loss,normalized_loss\n";
    for (const auto& r : rows) os << r.step << ',' << fmt(r.loss) << ',' << fmt(r.normalized) << '\n';
}

GenericResult train_generic(const GenericParams& init, const SequenceBatch& batch, const GenericConfig& cfg) {
    cfg.validate();
    const double power = target_power(batch);
    const double norm = power > 0 ? power : 1.0;
    GenericResult res{init, {}, 0, 0.0, 0.0, parameter_count(init)};
    auto pr = param_refs(res.params);
    std::vector<Matrix> m1, m2;
    for (Matrix* m : pr) {
        m1.emplace_back(m->rows(), m->cols());
        m2.emplace_back(m->rows(), m->cols());
    }
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double p1 = 1, p2 = 1;
    GenericParams g;
    std::size_t step = 0;
    for (; step < cfg.steps; ++step) {
        const double loss = generic_loss_and_grad(res.params, batch, g);
        if (!std::isfinite(loss)) {
            std::ostringstream os;
            os << "training diverged at step " << step << "; reduce the learning rate below " << fmt(cfg.lr);
            throw DivergenceError(os.str());
        }
        if (step % cfg.log_period == 0) res.rows.push_back({step, loss, loss / norm});
        if (loss <= cfg.loss_tol) break;
        const double lr =
            cfg.cosine ? cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * double(step) / double(cfg.steps))) : cfg.lr;
        auto gr = param_refs(g);
        if (cfg.optimizer == Optimizer::gd) {
            for (std::size_t k = 0; k < pr.size(); ++k)
                for (std::size_t i = 0; i < pr[k]->size(); ++i) pr[k]->data()[i] -= lr * gr[k]->data()[i];
            continue;
        }
        p1 *= b1;
        p2 *= b2;
        for (std::size_t k = 0; k < pr.size(); ++k) {
            auto& x = pr[k]->data();
            const auto& gg = gr[k]->data();
            auto& a = m1[k].data();
            auto& v = m2[k].data();
            for (std::size_t i = 0; i < x.size(); ++i) {
                a[i] = b1 * a[i] + (1 - b1) * gg[i];
                v[i] = b2 * v[i] + (1 - b2) * gg[i] * gg[i];
                x[i] -= lr * (a[i] / (1 - p1)) / (std::sqrt(v[i] / (1 - p2)) + eps);
            }
        }
    }
    res.steps = step;
    res.final_loss = generic_loss(res.params, batch);
    res.final_normalized = res.final_loss / norm;
    if (res.rows.empty() || res.rows.back().step != step) res.rows.push_back({step, res.final_loss, res.final_normalized});
    return res;
}

}  // namespace attnlab
