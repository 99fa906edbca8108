#include "tucknet/data_io.hpp"

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <utility>

#include "byteio.hpp"
#include "tucknet/rng.hpp"

namespace tucknet {
namespace {

using byteio::append_f64;
using byteio::append_u16;
using byteio::append_u32;
using byteio::append_u64;
using byteio::load_f64;
using byteio::load_u16;
using byteio::load_u32;
using byteio::load_u64;
using byteio::mul_overflows;
using byteio::write_file_atomically;

constexpr char kMagic[4] = {'T', 'T', 'S', 'R'};
constexpr std::uint16_t kVersion = 1;

void check_series_shape(const TensorSeries& series) {
    if (series.dims.empty()) throw ShapeError("series: order must be at least 1");
    for (std::int64_t d : series.dims) {
        if (d < 1) throw ShapeError("series: every dim must be at least 1");
        if (d > static_cast<std::int64_t>(std::numeric_limits<std::uint32_t>::max()))
            throw ShapeError("series: dim exceeds the format's 32-bit limit");
    }
    for (const DenseTensor& t : series.steps)
        if (t.dims() != series.dims) throw ShapeError("series: step dims differ from series dims");
}

}  // namespace

void write_series(const TensorSeries& series, const std::filesystem::path& path) {
    check_series_shape(series);
    const std::int64_t vol = checked_volume(series.dims);

    std::string bytes;
    bytes.reserve(16 + 4 * series.dims.size() + 8 * series.steps.size() * vol);
    bytes.append(kMagic, 4);
    append_u16(bytes, kVersion);
    append_u16(bytes, static_cast<std::uint16_t>(series.dims.size()));
    for (std::int64_t d : series.dims) append_u32(bytes, static_cast<std::uint32_t>(d));
    append_u64(bytes, static_cast<std::uint64_t>(series.steps.size()));
    for (const DenseTensor& t : series.steps)
        for (std::int64_t i = 0; i < t.size(); ++i) append_f64(bytes, t[i]);

    write_file_atomically(path, bytes);
}

TensorSeries read_series(const std::filesystem::path& path) {
    std::error_code ec;
    const std::uint64_t file_bytes = std::filesystem::file_size(path, ec);
    if (ec) throw FormatError("cannot stat " + path.string() + ": " + ec.message());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());

    const auto read_exact = [&in, &path](unsigned char* dst, std::size_t n) {
        in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n)
            throw FormatError("truncated file: " + path.string());
    };

    unsigned char head[8];
    read_exact(head, 8);
    if (std::memcmp(head, kMagic, 4) != 0) throw FormatError("bad magic: " + path.string());
    if (load_u16(head + 4) != kVersion)
        throw FormatError("unsupported format version in " + path.string());
    const std::uint16_t order = load_u16(head + 6);
    if (order == 0) throw FormatError("order must be at least 1: " + path.string());

    std::vector<unsigned char> buf(4 * static_cast<std::size_t>(order) + 8);
    read_exact(buf.data(), buf.size());
    TensorSeries series;
    std::uint64_t vol = 1;
    for (int d = 0; d < order; ++d) {
        const std::uint32_t n = load_u32(buf.data() + 4 * d);
        if (n == 0) throw FormatError("zero dim: " + path.string());
        if (mul_overflows(vol, n, vol)) throw FormatError("dim overflow: " + path.string());
        series.dims.push_back(static_cast<std::int64_t>(n));
    }
    const std::uint64_t steps = load_u64(buf.data() + 4 * order);

    std::uint64_t payload = 0;
    if (mul_overflows(steps, vol, payload) || mul_overflows(payload, 8, payload) ||
        vol > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
        throw FormatError("size overflow: " + path.string());
    const std::uint64_t header = 8 + 4 * static_cast<std::uint64_t>(order) + 8;
    if (file_bytes != header + payload)
        throw FormatError("payload length mismatch: " + path.string());

    series.steps.reserve(steps);
    std::vector<unsigned char> step_buf(static_cast<std::size_t>(vol) * 8);
    for (std::uint64_t t = 0; t < steps; ++t) {
        read_exact(step_buf.data(), step_buf.size());
        DenseTensor tensor(series.dims);
        for (std::int64_t i = 0; i < tensor.size(); ++i)
            tensor[i] = load_f64(step_buf.data() + 8 * i);
        series.steps.push_back(std::move(tensor));
    }
    return series;
}

void write_series_csv(const TensorSeries& series, const std::filesystem::path& path) {
    check_series_shape(series);
    const std::size_t order = series.dims.size();

    std::string out = "t";
    for (std::size_t d = 1; d <= order; ++d) out += ",i" + std::to_string(d);
    out += ",value\n";

    char num[40];
    std::vector<std::int64_t> idx(order, 1);
    for (std::size_t t = 0; t < series.steps.size(); ++t) {
        std::fill(idx.begin(), idx.end(), 1);
        const DenseTensor& tensor = series.steps[t];
        for (std::int64_t flat = 0; flat < tensor.size(); ++flat) {
            out += std::to_string(t + 1);
            for (std::int64_t i : idx) {
                out += ',';
                out += std::to_string(i);
            }
            std::snprintf(num, sizeof num, "%.17g", tensor[flat]);
            out += ',';
            out += num;
            out += '\n';
            for (std::size_t d = order; d-- > 0;) {  // last index fastest
                if (++idx[d] <= series.dims[d]) break;
                idx[d] = 1;
            }
        }
    }
    write_file_atomically(path, out);
}

TensorSeries generate_synthetic(const SyntheticSpec& spec) {
    if (spec.dims.empty()) throw ShapeError("synthetic: order must be at least 1");
    for (std::int64_t d : spec.dims)
        if (d < 1) throw ShapeError("synthetic: every dim must be at least 1");
    if (spec.length < 0) throw ShapeError("synthetic: negative length");
    if (spec.noise_scale < 0.0) throw ShapeError("synthetic: negative noise scale");
    const std::int64_t n = checked_volume(spec.dims);
    if (!spec.transition.empty() &&
        spec.transition.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(n))
        throw ShapeError("synthetic: transition must be n*n for n = volume(dims)");
    if (!spec.initial_state.empty() && spec.initial_state.size() != static_cast<std::size_t>(n))
        throw ShapeError("synthetic: initial state must have length n = volume(dims)");
    if (spec.transition.empty() &&
        (spec.spectral_radius <= 0.0 || spec.spectral_radius >= 1.0))
        throw ShapeError("synthetic: spectral radius must lie in (0, 1)");

    Rng rng(spec.seed);
    Eigen::MatrixXd a(n, n);
    if (spec.transition.empty()) {
        // Standard-normal entries plus a 2*sqrt(n) diagonal: the diagonal
        // rivals the Gaussian part's ~sqrt(n) spectral radius, so after
        // rescaling the process keeps a persistent (positively
        // autocorrelated) component instead of behaving like a random
        // rotation.
        const double persistence = 2.0 * std::sqrt(static_cast<double>(n));
        for (std::int64_t r = 0; r < n; ++r)
            for (std::int64_t c = 0; c < n; ++c)
                a(r, c) = rng.normal() + (r == c ? persistence : 0.0);
        const double rho = a.eigenvalues().cwiseAbs().maxCoeff();
        if (rho > 0.0) a *= spec.spectral_radius / rho;
    } else {
        for (std::int64_t r = 0; r < n; ++r)
            for (std::int64_t c = 0; c < n; ++c)
                a(r, c) = spec.transition[static_cast<std::size_t>(r * n + c)];
    }

    Eigen::VectorXd x(n);
    if (spec.initial_state.empty())
        for (std::int64_t i = 0; i < n; ++i) x[i] = rng.normal();
    else
        for (std::int64_t i = 0; i < n; ++i) x[i] = spec.initial_state[static_cast<std::size_t>(i)];

    TensorSeries series;
    series.dims = spec.dims;
    series.steps.reserve(static_cast<std::size_t>(spec.length));
    const auto emit = [&series, &spec, n](const Eigen::VectorXd& v) {
        DenseTensor t(spec.dims);
        for (std::int64_t i = 0; i < n; ++i) t[i] = v[i];
        series.steps.push_back(std::move(t));
    };

    if (spec.length > 0) emit(x);
    Eigen::VectorXd next(n);
    for (std::int64_t t = 1; t < spec.length; ++t) {
        next.noalias() = a * x;
        if (spec.noise_scale > 0.0)
            for (std::int64_t i = 0; i < n; ++i) next[i] += spec.noise_scale * rng.normal();
        x = next;
        emit(x);
    }
    return series;
}

LaggedPairs make_lagged_targets(const TensorSeries& series) {
    if (series.steps.size() < 2)
        throw ShapeError("lagged targets need at least two steps");
    LaggedPairs pairs;
    pairs.inputs.assign(series.steps.begin() + 1, series.steps.end());
    pairs.targets.assign(series.steps.begin(), series.steps.end() - 1);
    return pairs;
}

ElementScaler ElementScaler::fit(std::span<const DenseTensor> steps) {
    if (steps.empty()) throw ShapeError("scaler: no steps to fit");
    const std::int64_t n = steps.front().size();
    for (const DenseTensor& t : steps)
        if (!t.same_dims(steps.front())) throw ShapeError("scaler: step dims differ");

    ElementScaler s;
    s.mean.assign(static_cast<std::size_t>(n), 0.0);
    s.stddev.assign(static_cast<std::size_t>(n), 0.0);
    const double inv_t = 1.0 / static_cast<double>(steps.size());
    for (const DenseTensor& t : steps)
        for (std::int64_t i = 0; i < n; ++i) s.mean[static_cast<std::size_t>(i)] += t[i];
    for (std::int64_t i = 0; i < n; ++i) s.mean[static_cast<std::size_t>(i)] *= inv_t;
    for (const DenseTensor& t : steps)
        for (std::int64_t i = 0; i < n; ++i) {
            const double d = t[i] - s.mean[static_cast<std::size_t>(i)];
            s.stddev[static_cast<std::size_t>(i)] += d * d;
        }
    for (double& v : s.stddev) {
        v = std::sqrt(v * inv_t);
        if (v < 1e-12) v = 1.0;
    }
    return s;
}

DenseTensor ElementScaler::transform(const DenseTensor& x) const {
    if (static_cast<std::size_t>(x.size()) != mean.size())
        throw ShapeError("scaler: size mismatch");
    DenseTensor out(x.dims());
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        out[i] = (x[i] - mean[k]) / stddev[k];
    }
    return out;
}

DenseTensor ElementScaler::inverse(const DenseTensor& y) const {
    if (static_cast<std::size_t>(y.size()) != mean.size())
        throw ShapeError("scaler: size mismatch");
    DenseTensor out(y.dims());
    for (std::int64_t i = 0; i < y.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        out[i] = y[i] * stddev[k] + mean[k];
    }
    return out;
}

}  // namespace tucknet
