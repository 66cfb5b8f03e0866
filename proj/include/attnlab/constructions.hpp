#pragma once

#include <map>
#include <vector>

#include "attnlab/attention.hpp"
#include "attnlab/domain.hpp"

namespace attnlab {

struct InteractionSpec {
    Matrix F;  // |S| x |S|, F(mu, nu) = f(mu, nu)
    Matrix W;  // |S| x d2, row mu = w_mu
};

LinearSAParams build_exact(const InteractionSpec& spec, const EmbeddingBase& base);

struct ApproxResult {
    LinearSAParams params;
    EmbeddingBase base;  // |S| x d, orthonormal columns
    double zeta1 = 0.0, zeta2 = 0.0;
    double bound_per_token = 0.0;

    // zeta1 L sigma_{d+1}(F), plus zeta2 L (tail of sigma(W)) when d2 > d
    double predicted_bound(std::size_t L) const { return bound_per_token * double(L); }
};

ApproxResult build_approx(const InteractionSpec& spec, std::size_t d);

// circular distance on Z_N
std::size_t circ_dist(std::size_t a, std::size_t b, std::size_t N);

LinearSAParams build_collision_onehot(std::size_t N, std::size_t R);
LinearSAParams build_collision_sinusoidal(std::size_t N, std::size_t R);

// C in the normalized sinusoidal base with p_i^T C p_j = f[(n_i - n_j) mod N]
Matrix build_general_window_C(const std::vector<double>& f);

// table(dx, dy) indexed by (n_i^x - n_j^x) mod N, (n_i^y - n_j^y) mod N; base is
// the Kronecker product of two normalized sinusoidal bases, value constant per token
LinearSAParams build_2d_kronecker(const Matrix& table, std::size_t N, double value = -1.0);
EmbeddingBase build_sinusoidal_2d(std::size_t N);

using ActivationDict = std::map<std::size_t, std::vector<std::size_t>>;
LinearSAParams build_genotype(const ActivationDict& dict, std::size_t L, std::size_t vocab_size);

// token t = [m[t] (d2), one-hot position over L+1 slots]; the query slot L has m = 0
LinearSAParams build_timeseries(const std::map<std::size_t, double>& delays, const Matrix& A, std::size_t L);

struct Offset {
    int dr = 0, dc = 0;
};
// token = [b, one-hot position on an H x W grid]
LinearSAParams build_vision(const std::vector<Offset>& offsets, std::size_t H, std::size_t W);

// concatenated one-hot feature blocks
struct FeatureLayout {
    std::vector<std::size_t> sizes;

    std::size_t dim() const;
    std::size_t offset(std::size_t feature) const;
    std::vector<double> embed(const std::vector<std::size_t>& symbols) const;
};

struct FactorSpec {
    std::size_t query_feature = 0, key_feature = 0, value_feature = 0;
    Matrix F;  // |query feature| x |key feature|
    Matrix W;  // |value feature| x d2
};

HFAParams build_hfa_factorized(const std::vector<FactorSpec>& factors, const FeatureLayout& layout);

// CP form with R = |S|^2, sharing off, linear, mask ordered_leq
HAParams build_ha_ternary(const TensorN& f3, const Matrix& w2, std::size_t vocab_size);
// same interaction as explicit dense tensors
HAParams build_ha_ternary_dense(const TensorN& f3, const Matrix& w2, std::size_t vocab_size);

}  // namespace attnlab
