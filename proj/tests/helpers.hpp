#pragma once

#include <random>

#include "attnlab/numerics.hpp"

namespace testutil {

inline attnlab::Matrix randn(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    attnlab::Matrix m(r, c);
    for (double& v : m.data()) v = nd(rng);
    return m;
}

inline attnlab::Matrix random_orthogonal(std::size_t n, std::mt19937_64& rng) {
    return attnlab::orthonormalize_columns(randn(n, n, rng));
}

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1e-300, std::abs(a), std::abs(b)});
}

}  // namespace testutil
