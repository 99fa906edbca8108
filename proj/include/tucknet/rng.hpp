#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace tucknet {

/// Deterministic random stream with portable output.
///
/// The raw engine is std::mt19937_64, whose bit stream is pinned by the
/// standard. The mappings from raw 64-bit draws to doubles are spelled out
/// here instead of delegating to std::uniform_real_distribution and
/// std::normal_distribution, whose algorithms are implementation-defined.
/// Identical seeds therefore produce identical value streams everywhere,
/// which the reproducibility guarantees of this library depend on.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1), using the top 53 bits of one draw.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller; the second value of each pair is
    /// cached so consecutive calls consume draws in a fixed pattern.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        while (u1 == 0.0) u1 = uniform01();  // log(0) guard
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * kPi * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    static constexpr double kPi = 3.141592653589793238462643383279502884;

    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace tucknet
