#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "dms/grid.hpp"

namespace dms {

/// Counter-based generator: the k-th draw of stream s under key `seed` is a
/// pure function of (seed, s, k), so draws are reproducible on every
/// platform and independent of evaluation order.
class CounterRng {
public:
    constexpr CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
        : key_(mix(seed ^ mix(stream + 0x632BE59BD9B4E019ull))) {}

    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        // splitmix64 finalizer
        z += 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    constexpr std::uint64_t bits(std::uint64_t counter) const noexcept {
        return mix(key_ ^ mix(counter));
    }

    /// Uniform in the open interval (0, 1).
    constexpr double uniform(std::uint64_t counter) const noexcept {
        return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal draw (Box-Muller on counters 2k and 2k+1).
    double normal(std::uint64_t k) const noexcept {
        const double u1 = uniform(2 * k);
        const double u2 = uniform(2 * k + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t key_;
};

/// Image of i.i.d. standard-normal values from stream `stream` of `seed`.
inline Image gaussian_image(std::size_t height, std::size_t width, std::uint64_t seed,
                            std::uint64_t stream) {
    Image out(height, width);
    const CounterRng rng(seed, stream);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = rng.normal(i);
    return out;
}

} // namespace dms
