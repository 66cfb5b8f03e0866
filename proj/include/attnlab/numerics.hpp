#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace attnlab {

struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix ones(std::size_t rows, std::size_t cols) { return Matrix(rows, cols, 1.0); }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* row_ptr(std::size_t i) { return data_.data() + i * cols_; }
    const double* row_ptr(std::size_t i) const { return data_.data() + i * cols_; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    Matrix transpose() const;
    Matrix row(std::size_t i) const;
    Matrix col(std::size_t j) const;

    Matrix& operator+=(const Matrix& o);
    Matrix& operator-=(const Matrix& o);
    Matrix& operator*=(double s);

    double frobenius_sq() const;
    double max_abs() const;
    bool all_finite() const;

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix kronecker(const Matrix& a, const Matrix& b);

// max |a - b|, throws on shape mismatch
double max_abs_diff(const Matrix& a, const Matrix& b);

class TensorN {
public:
    TensorN() = default;
    explicit TensorN(std::vector<std::size_t> shape, double fill = 0.0);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }

    double& at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
    double at(std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }
    double& operator()(std::size_t i, std::size_t j, std::size_t k) { return data_[(i * shape_[1] + j) * shape_[2] + k]; }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const { return data_[(i * shape_[1] + j) * shape_[2] + k]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool all_finite() const;

private:
    std::size_t offset(std::initializer_list<std::size_t> idx) const;
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// descending
std::vector<double> singular_values(const Matrix& a);

// thin SVD via one-sided Jacobi: a = U diag(s) V^T, U is rows×k, V is cols×k, k = min(rows, cols)
struct SVD {
    Matrix U;
    std::vector<double> s;
    Matrix V;
};
SVD svd(const Matrix& a);

double default_rank_tol(const Matrix& a);
std::size_t column_rank(const Matrix& a, double rel_tol);

// Fourier coefficients of the circular window 1[|n| <= 2R] on Z_N
std::vector<double> dtfs_window(std::size_t N, std::size_t R);

// orthonormal Q from a QR of a (Householder-free modified Gram-Schmidt, twice)
Matrix orthonormalize_columns(const Matrix& a);

void write_csv(std::ostream& os, const Matrix& m);
Matrix read_csv(std::istream& is);
void save_csv(const std::string& path, const Matrix& m);
Matrix load_csv(const std::string& path);

std::string format_g17(double v);

// Worker pool size for batch-parallel loops; 1 by default.
void set_thread_count(std::size_t n);
std::size_t thread_count();

// Calls f(chunk, begin, end) for the fixed chunks [c*chunk_size, (c+1)*chunk_size) of [0, n).
// Chunk boundaries do not depend on the thread count, so callers that keep one
// partial result per chunk and sum them in chunk order get identical bits.
std::size_t chunk_count(std::size_t n, std::size_t chunk_size);
void for_each_chunk(std::size_t n, std::size_t chunk_size,
                    const std::function<void(std::size_t, std::size_t, std::size_t)>& f);

}  // namespace attnlab
