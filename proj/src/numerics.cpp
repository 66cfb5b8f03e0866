#include "attnlab/numerics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numbers>
#include <numeric>
#include <mutex>
#include <sstream>
#include <thread>

namespace attnlab {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols)
        throw DimensionError("matrix data length does not match shape");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw DimensionError("ragged matrix literal");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

Matrix Matrix::row(std::size_t i) const {
    Matrix r(1, cols_);
    std::copy(row_ptr(i), row_ptr(i) + cols_, r.data_.begin());
    return r;
}

Matrix Matrix::col(std::size_t j) const {
    Matrix c(rows_, 1);
    for (std::size_t i = 0; i < rows_; ++i) c(i, 0) = (*this)(i, j);
    return c;
}

Matrix& Matrix::operator+=(const Matrix& o) {
    if (rows_ != o.rows_ || cols_ != o.cols_) throw DimensionError("shape mismatch in +=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
    if (rows_ != o.rows_ || cols_ != o.cols_) throw DimensionError("shape mismatch in -=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

double Matrix::frobenius_sq() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return s;
}

double Matrix::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                             " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    Matrix c(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* ci = c.row_ptr(i);
        const double* ai = a.row_ptr(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = ai[k];
            if (aik == 0.0) continue;
            const double* bk = b.row_ptr(k);
            for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("hadamard: shape mismatch");
    Matrix c = a;
    for (std::size_t k = 0; k < c.size(); ++k) c.data()[k] *= b.data()[k];
    return c;
}

Matrix kronecker(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows() * b.rows(), a.cols() * b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            for (std::size_t p = 0; p < b.rows(); ++p)
                for (std::size_t q = 0; q < b.cols(); ++q)
                    c(i * b.rows() + p, j * b.cols() + q) = a(i, j) * b(p, q);
    return c;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a.data()[k] - b.data()[k]));
    return m;
}

TensorN::TensorN(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
    std::size_t n = 1;
    for (auto s : shape_) n *= s;
    data_.assign(n, fill);
}

std::size_t TensorN::offset(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape_.size()) throw DimensionError("tensor index rank mismatch");
    std::size_t off = 0, k = 0;
    for (auto i : idx) {
        if (i >= shape_[k]) throw std::out_of_range("tensor index out of range");
        off = off * shape_[k++] + i;
    }
    return off;
}

bool TensorN::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

namespace {

// one-sided Jacobi on the columns of a (rows >= cols)
SVD jacobi_tall(Matrix a) {
    const std::size_t m = a.rows(), n = a.cols();
    Matrix v = Matrix::identity(n);
    const double eps = 1e-15;
    for (int sweep = 0; sweep < 80; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0, beta = 0, gamma = 0;
                for (std::size_t i = 0; i < m; ++i) {
                    alpha += a(i, p) * a(i, p);
                    beta += a(i, q) * a(i, q);
                    gamma += a(i, p) * a(i, q);
                }
                if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
                rotated = true;
                double zeta = (beta - alpha) / (2.0 * gamma);
                double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                double c = 1.0 / std::sqrt(1.0 + t * t), s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    double x = a(i, p), y = a(i, q);
                    a(i, p) = c * x - s * y;
                    a(i, q) = s * x + c * y;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    double x = v(i, p), y = v(i, q);
                    v(i, p) = c * x - s * y;
                    v(i, q) = s * x + c * y;
                }
            }
        }
        if (!rotated) break;
    }

    std::vector<double> s(n);
    for (std::size_t j = 0; j < n; ++j) {
        double acc = 0;
        for (std::size_t i = 0; i < m; ++i) acc += a(i, j) * a(i, j);
        s[j] = std::sqrt(acc);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return s[x] > s[y]; });

    SVD out{Matrix(m, n), std::vector<double>(n), Matrix(n, n)};
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t j = order[k];
        out.s[k] = s[j];
        for (std::size_t i = 0; i < m; ++i) out.U(i, k) = s[j] > 0 ? a(i, j) / s[j] : 0.0;
        for (std::size_t i = 0; i < n; ++i) out.V(i, k) = v(i, j);
    }
    return out;
}

}  // namespace

SVD svd(const Matrix& a) {
    if (a.empty()) return {};
    if (a.rows() >= a.cols()) return jacobi_tall(a);
    SVD t = jacobi_tall(a.transpose());
    return {t.V, t.s, t.U};
}

std::vector<double> singular_values(const Matrix& a) {
    if (a.empty()) return {};
    return svd(a).s;
}

double default_rank_tol(const Matrix& a) {
    return 1e-8 * static_cast<double>(std::max(a.rows(), a.cols()));
}

std::size_t column_rank(const Matrix& a, double rel_tol) {
    if (rel_tol <= 0) throw std::invalid_argument("column_rank: rel_tol must be positive");
    auto s = singular_values(a);
    if (s.empty() || s[0] == 0.0) return 0;
    return static_cast<std::size_t>(
        std::count_if(s.begin(), s.end(), [&](double x) { return x > rel_tol * s[0]; }));
}

std::vector<double> dtfs_window(std::size_t N, std::size_t R) {
    if (N % 2 != 0) throw std::invalid_argument("dtfs_window: N must be even");
    if (4 * R >= N) throw std::invalid_argument("dtfs_window: need 2R < N/2");
    const double pi = std::numbers::pi;
    const double h = 2.0 * R + 0.5;
    std::vector<double> F(N);
    F[0] = 2.0 / N * h;
    for (std::size_t k = 1; k < N; ++k) {
        const double w = 2.0 * pi / N * k;
        F[k] = std::sin(w * h) / std::sin(w * 0.5) / N;
    }
    return F;
}

Matrix orthonormalize_columns(const Matrix& a) {
    Matrix q = a;
    for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t j = 0; j < q.cols(); ++j) {
            for (std::size_t k = 0; k < j; ++k) {
                double dot = 0;
                for (std::size_t i = 0; i < q.rows(); ++i) dot += q(i, k) * q(i, j);
                for (std::size_t i = 0; i < q.rows(); ++i) q(i, j) -= dot * q(i, k);
            }
            double nrm = 0;
            for (std::size_t i = 0; i < q.rows(); ++i) nrm += q(i, j) * q(i, j);
            nrm = std::sqrt(nrm);
            if (nrm < 1e-300) throw std::runtime_error("orthonormalize_columns: rank deficient input");
            for (std::size_t i = 0; i < q.rows(); ++i) q(i, j) /= nrm;
        }
    }
    return q;
}

std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_csv(std::ostream& os, const Matrix& m) {
    os << m.rows() << ',' << m.cols() << '\n';
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (j) os << ',';
            os << format_g17(m(i, j));
        }
        os << '\n';
    }
}

Matrix read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("matrix csv: missing header");
    std::size_t rows = 0, cols = 0;
    char comma = 0;
    std::istringstream hs(line);
    if (!(hs >> rows >> comma >> cols) || comma != ',') throw std::runtime_error("matrix csv: bad header '" + line + "'");
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (!std::getline(is, line)) throw std::runtime_error("matrix csv: truncated at row " + std::to_string(i));
        std::istringstream ls(line);
        std::string cell;
        std::size_t j = 0;
        while (std::getline(ls, cell, ',')) {
            if (j >= cols) throw std::runtime_error("matrix csv: too many columns in row " + std::to_string(i));
            m(i, j++) = std::stod(cell);
        }
        if (j != cols) throw std::runtime_error("matrix csv: too few columns in row " + std::to_string(i));
    }
    return m;
}

void save_csv(const std::string& path, const Matrix& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    write_csv(os, m);
}

Matrix load_csv(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path);
    return read_csv(is);
}

}  // namespace attnlab

namespace attnlab {

namespace {
std::atomic<std::size_t> g_threads{1};
}

void set_thread_count(std::size_t n) { g_threads = n == 0 ? 1 : n; }
std::size_t thread_count() { return g_threads; }

std::size_t chunk_count(std::size_t n, std::size_t chunk_size) {
    if (chunk_size == 0) throw std::invalid_argument("chunk size must be positive");
    return (n + chunk_size - 1) / chunk_size;
}

void for_each_chunk(std::size_t n, std::size_t chunk_size,
                    const std::function<void(std::size_t, std::size_t, std::size_t)>& f) {
    const std::size_t nc = chunk_count(n, chunk_size);
    auto run = [&](std::size_t c) { f(c, c * chunk_size, std::min(n, (c + 1) * chunk_size)); };
    const std::size_t nt = std::min(thread_count(), nc);
    if (nt <= 1) {
        for (std::size_t c = 0; c < nc; ++c) run(c);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    auto worker = [&] {
        for (std::size_t c; (c = next++) < nc;) {
            try {
                run(c);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!err) err = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t + 1 < nt; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace attnlab
