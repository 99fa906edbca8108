#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "tucknet/tensor.hpp"

namespace tucknet {

/// Raised for malformed or unreadable series/model files.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A time series of equally shaped dense tensors.
struct TensorSeries {
    Dims dims;
    std::vector<DenseTensor> steps;
};

/// Binary tensor-series file format "TTSR", all integers and reals
/// little-endian regardless of host:
///   magic "TTSR" (4 bytes) | version u16 (= 1) | order D u16 (>= 1)
///   | dims: D x u32 (each >= 1) | step count T u64
///   | payload: T * prod(dims) IEEE-754 binary64 values, step-major,
///     last index fastest within a step.
/// Writing goes to `path` + ".tmp" first and renames into place, so a
/// reader never observes a partial file. Reading validates the header and
/// the exact payload length before allocating storage. Round-trips are
/// bitwise exact (negative zero, subnormals, infinities, and NaN payloads
/// included).
void write_series(const TensorSeries& series, const std::filesystem::path& path);
TensorSeries read_series(const std::filesystem::path& path);

/// Human-readable export with header row "t,i1,...,iD,value"; one row per
/// element, t and indices 1-based, values printed with 17 significant
/// digits. For inspection only — the binary format is the exact one.
void write_series_csv(const TensorSeries& series, const std::filesystem::path& path);

/// Linear vector-autoregressive generator in the flattened space:
/// x_t = A x_{t-1} + noise_scale * eps_t with eps iid standard normal,
/// reshaped to `dims` each step. A is drawn with standard-normal entries
/// plus a persistence-inducing diagonal, then rescaled so its spectral
/// radius equals `spectral_radius`, keeping the process stationary and
/// positively autocorrelated; `transition` and `initial_state`, when
/// non-empty, are used verbatim instead of being drawn (row-major n x n
/// and length n, n = prod(dims)), which lets tests inject exact dynamics.
struct SyntheticSpec {
    Dims dims{25, 25, 4};
    std::int64_t length = 543;
    std::uint64_t seed = 0;
    double noise_scale = 0.1;
    double spectral_radius = 0.95;
    std::vector<double> transition;
    std::vector<double> initial_state;
};

/// Deterministic given the spec: draw order is A (row-major), then x_0,
/// then per step the noise vector in ascending element order (skipped
/// entirely when noise_scale is zero). steps[0] is the initial state.
TensorSeries generate_synthetic(const SyntheticSpec& spec);

/// Lag-1 supervision: inputs[k] pairs with targets[k] = the series value
/// one step before inputs[k]. The first step has no predecessor and is
/// dropped, so a length-L series yields L-1 pairs.
struct LaggedPairs {
    std::vector<DenseTensor> inputs;
    std::vector<DenseTensor> targets;
};

/// Throws ShapeError when the series has fewer than two steps.
LaggedPairs make_lagged_targets(const TensorSeries& series);

/// Per-position z-scoring over the time axis: position i maps to
/// (x[i] - mean[i]) / stddev[i]. Positions with (numerically) no
/// variation store stddev 1.0, so constant features pass through merely
/// centered and the inverse transform stays exact.
struct ElementScaler {
    std::vector<double> mean;
    std::vector<double> stddev;

    static ElementScaler fit(std::span<const DenseTensor> steps);
    DenseTensor transform(const DenseTensor& x) const;
    DenseTensor inverse(const DenseTensor& y) const;
};

}  // namespace tucknet
