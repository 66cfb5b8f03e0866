#pragma once

#include <cstdint>
#include <iosfwd>
#include <variant>
#include <vector>

#include "attnlab/attention.hpp"
#include "attnlab/domain.hpp"

namespace attnlab {

// Thrown when the loss blows up; the message carries the step and the losses.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    double eta = 0.01;
    std::size_t max_steps = 50000;
    double loss_tol = 1e-8;
    double init_bias = 1.0;
    std::size_t log_period = 100;
    std::uint64_t seed = 0;
    bool keep_snapshots = false;

    void validate() const;
};

struct TraceRow {
    std::size_t step = 0;
    double loss = 0.0;
    double max_residual = 0.0;  // max over alpha of |conservation residual| at this step
    double min_w = 0.0;         // min over alpha of w_alpha in symbol coordinates
};

struct TrainTrace {
    std::vector<TraceRow> rows;
    std::vector<LinearSAParams> snapshots;  // at logged steps, linear SA only
    std::size_t steps = 0;                  // gradient steps taken
    bool converged = false;
    double final_loss = 0.0;
    // extremes over every step, not only the logged ones
    double max_residual = 0.0;
    double min_w = 0.0;

    void write_csv(std::ostream& os) const;
};

// (1/B) sum_n ||f(X_n) - Y_n||^2
double mse_loss(const LinearSAParams& p, const SequenceBatch& batch);
double mse_loss(const HAParams& p, const SequenceBatch& batch);
// (1/B) sum_n ||Y_n||^2, the loss of the zero predictor
double target_power(const SequenceBatch& batch);

struct LinearSAGrad {
    Matrix dC;  // d x d
    Matrix dw;  // d x 1
};

// dL/dC = (2/B) sum X^T D w^T X^T X, dL/dw = (2/B) sum X^T X C^T X^T D, with D = SA(X) - y
LinearSAGrad grad_linear_sa(const LinearSAParams& p, const SequenceBatch& batch);

// Batch statistics in symbol coordinates. With s the count vector and z = E^T y,
// M3[m,k,v] = sum_n s_m s_k s_v and Z[m,v] = sum_n z_m s_v determine loss and
// gradient for every (C, w), at O(|S|^3) per evaluation independent of B and L.
// Needs a square orthonormal base and d2 = 1.
class LinearSAMoments {
public:
    LinearSAMoments(const SequenceBatch& batch, const EmbeddingBase& base);
    double loss_and_grad(const LinearSAParams& p, LinearSAGrad* grad) const;

private:
    EmbeddingBase base_;
    bool identity_base_ = false;
    std::size_t S_ = 0;
    double B_ = 0.0, Y2_ = 0.0;
    std::vector<double> M3_;
    Matrix Z_;
};

// C = 0, w = b B^T 1 so that <x(alpha), w> = b for every symbol
LinearSAParams initial_linear_sa(const EmbeddingBase& base, double b);

// residual_alpha = (w_alpha^2 - ||C[:,alpha]||^2)(t) - (same)(0), in symbol coordinates
std::vector<double> conservation_residual(const LinearSAParams& pt, const LinearSAParams& p0,
                                          const EmbeddingBase& base);

struct LinearTrainResult {
    LinearSAParams params;
    TrainTrace trace;
};

// Full-batch gradient descent from initial_linear_sa (or the given init).
LinearTrainResult train_linear_sa(const SequenceBatch& batch, const EmbeddingBase& base, const TrainConfig& cfg);
LinearTrainResult train_linear_sa(const SequenceBatch& batch, const EmbeddingBase& base, const TrainConfig& cfg,
                                  const LinearSAParams& init);

// Order-3 HyperAttention in dense mode: C is d x d x d, W is d x d x 1.
struct HA3Grad {
    TensorN dC;
    TensorN dW;
};

HA3Grad grad_ha3(const HAParams& p, const SequenceBatch& batch);

// Gamma[n][v,s] counts the allowed key pairs (j,k) with t_j = v, t_k = s. With
// A = C * W (broadcast over the query index) the loss is quadratic in A with
// moments M[m,p,q] = sum_n s_m Gamma_p Gamma_q, p and q running over pairs.
class HA3Moments {
public:
    HA3Moments(const SequenceBatch& batch, const EmbeddingBase& base, HAMask mask);
    double loss_and_grad(const HAParams& p, HA3Grad* grad) const;

private:
    EmbeddingBase base_;
    bool identity_base_ = false;
    std::size_t S_ = 0;
    double B_ = 0.0, Y2_ = 0.0;
    std::vector<double> M_;
    Matrix Z_;  // |S| x |S|^2
};

// C = 0, W = b in symbol coordinates
HAParams initial_ha3(const EmbeddingBase& base, double b, HAMask mask = HAMask::ordered_leq);
// residual over (alpha, beta), row-major: (W_ab^2 - ||C[:,a,b]||^2)(t) - (same)(0)
std::vector<double> ha3_conservation_residual(const HAParams& pt, const HAParams& p0, const EmbeddingBase& base);

struct HA3TrainResult {
    HAParams params;
    TrainTrace trace;
};

HA3TrainResult train_ha3(const SequenceBatch& batch, const EmbeddingBase& base, const TrainConfig& cfg,
                         HAMask mask = HAMask::ordered_leq);

// ---- numerically trained models

struct MHAStack {
    std::vector<MultiheadLinearSAParams> layers;
};

Matrix mha_stack(const Matrix& X, const MHAStack& s);

using GenericParams = std::variant<std::vector<HFAParams>, MHAStack>;

Matrix generic_forward(const Matrix& X, const GenericParams& p);
std::size_t parameter_count(const GenericParams& p);
double generic_loss(const GenericParams& p, const SequenceBatch& batch);
// reverse-mode gradient; grad gets the same structure as p
double generic_loss_and_grad(const GenericParams& p, const SequenceBatch& batch, GenericParams& grad);
// max relative error of the reverse-mode gradient against central differences
double generic_gradient_check(const GenericParams& p, const SequenceBatch& batch, double h = 1e-6);

// heads of order-`order` linear HFA; C ~ scale N(0,1), W = value_init + scale N(0,1)
GenericParams init_hfa(std::size_t d, std::size_t d2, std::size_t heads, std::size_t order, double scale,
                       double value_init, std::uint64_t seed);
// stacked multi-head linear SA with concat + output projection per layer; all entries ~ scale N(0,1)
GenericParams init_mha_stack(std::size_t d, std::size_t d2, std::size_t layers, std::size_t heads,
                             std::size_t head_dim, double scale, std::uint64_t seed);

enum class Optimizer { gd, adam };
std::string to_string(Optimizer o);
Optimizer optimizer_from_string(const std::string& s);

struct GenericConfig {
    Optimizer optimizer = Optimizer::adam;
    double lr = 0.01;
    bool cosine = true;  // lr_t = lr (1 + cos(pi t / steps)) / 2
    std::size_t steps = 10000;
    double loss_tol = 0.0;
    std::size_t log_period = 100;

    void validate() const;
};

struct GenericTraceRow {
    std::size_t step = 0;
    double loss = 0.0;
    double normalized = 0.0;  // loss / target_power
};

struct GenericResult {
    GenericParams params;
    std::vector<GenericTraceRow> rows;
    std::size_t steps = 0;
    double final_loss = 0.0;
    double final_normalized = 0.0;
    std::size_t parameters = 0;

    void write_csv(std::ostream& os) const;
};

GenericResult train_generic(const GenericParams& init, const SequenceBatch& batch, const GenericConfig& cfg);

}  // namespace attnlab
