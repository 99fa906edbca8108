#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "tucknet/rng.hpp"
#include "tucknet/tensor.hpp"

namespace testsup {

inline tucknet::DenseTensor random_tensor(tucknet::Dims dims, std::uint64_t seed) {
    tucknet::Rng rng(seed);
    tucknet::DenseTensor t(std::move(dims));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return t;
}

inline tucknet::Matrix random_matrix(std::int64_t rows, std::int64_t cols, std::uint64_t seed) {
    tucknet::Rng rng(seed);
    tucknet::Matrix m(rows, cols);
    for (std::int64_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
    return m;
}

inline double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

/// max |a-b| scaled by the largest magnitude present (0 if both are zero).
inline double rel_diff(std::span<const double> a, std::span<const double> b) {
    const double scale = std::max(max_abs(a), max_abs(b));
    const double diff = max_abs_diff(a, b);
    return scale == 0.0 ? diff : diff / scale;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// mats[D-1] kron mats[D-2] kron ... kron mats[0]: the matrix that acts on
/// mode-1-fastest vectorizations the same way the per-mode products act on
/// the tensor.
inline tucknet::Matrix kron_chain_reversed(std::span<const tucknet::Matrix> mats) {
    tucknet::Matrix acc = mats.back();
    for (int d = static_cast<int>(mats.size()) - 2; d >= 0; --d)
        acc = tucknet::kron(acc, mats[d]);
    return acc;
}

/// y = M * v via explicit loops (oracle-grade, no shared code with Matrix).
inline std::vector<double> matvec(const tucknet::Matrix& m, std::span<const double> v) {
    std::vector<double> y(static_cast<std::size_t>(m.rows()), 0.0);
    for (std::int64_t r = 0; r < m.rows(); ++r)
        for (std::int64_t c = 0; c < m.cols(); ++c) y[r] += m(r, c) * v[c];
    return y;
}

}  // namespace testsup
