#pragma once

#include <optional>
#include <string>
#include <vector>

#include "attnlab/numerics.hpp"

namespace attnlab {

struct UnsupportedConfiguration : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LinearSAParams {
    Matrix C;   // d x d
    Matrix Wv;  // d x d2
};

struct MultiheadLinearSAParams {
    std::vector<LinearSAParams> heads;
    Matrix WO;  // empty: head outputs are summed; otherwise concat(heads) * WO
};

enum class Nonlinearity { linear, softmax };
enum class HFAVariant { value_product, single_value };
enum class HAMask { none, ordered_leq, ordered_geq, strict_leq, strict_geq };

std::string to_string(Nonlinearity n);
std::string to_string(HFAVariant v);
std::string to_string(HAMask m);
Nonlinearity nonlinearity_from_string(const std::string& s);
HFAVariant hfa_variant_from_string(const std::string& s);
HAMask ha_mask_from_string(const std::string& s);

struct HFAParams {
    std::vector<Matrix> C;   // A matrices, d x d
    std::vector<Matrix> Wv;  // A matrices (single_value: only Wv[0] is used), d x d2
    HFAVariant variant = HFAVariant::value_product;
    Nonlinearity nonlinearity = Nonlinearity::linear;
    bool scale_sqrt_dk = false;

    std::size_t order() const { return C.size(); }
};

struct HAParams {
    std::size_t order = 3;
    std::size_t rank = 0;
    Matrix WQ;                  // d x R
    std::vector<Matrix> keys;   // 1 (sharing) or n-1 matrices, d x R
    std::vector<Matrix> values; // 1 (sharing) or n-1 matrices, d x R
    Matrix Vout;                // d2 x R
    bool sharing = false;
    Nonlinearity nonlinearity = Nonlinearity::linear;
    HAMask mask = HAMask::ordered_leq;
    bool scale_sqrt_dk = false;

    // dense mode: C has shape d^n, W has shape d^(n-1) x d2; bypasses the CP factors
    std::optional<TensorN> C_dense;
    std::optional<TensorN> W_dense;

    std::size_t out_dim() const;
    void validate(std::size_t d) const;
};

Matrix linear_sa(const Matrix& X, const LinearSAParams& p);
Matrix multihead_linear_sa(const Matrix& X, const MultiheadLinearSAParams& p);

// one layer of the stacked model used in the separation experiment
Matrix hfa(const Matrix& X, const HFAParams& p);
// heads summed, as in the multi-head linear HFA sum form
Matrix hfa_multihead(const Matrix& X, const std::vector<HFAParams>& heads);

Matrix softmax_rows(const Matrix& s);
Matrix softmax_sa(const Matrix& X, const LinearSAParams& p);

bool ha_mask_allows(HAMask m, const std::vector<std::size_t>& js);
Matrix ha_naive(const Matrix& X, const HAParams& p);
Matrix ha_fast_linear(const Matrix& X, const HAParams& p);

}  // namespace attnlab
