#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "dms/grid.hpp"
#include "dms/random.hpp"

namespace dms {

struct NoiseModel {
    double sigma = 0.0;
    std::uint64_t seed = 0;
};

// Noise streams are disjoint from the Monte-Carlo probe streams.
inline constexpr std::uint64_t kNoiseStream = 0xA0000000ull;

/// z = clean + sigma * zeta with zeta ~ N(0, I).
inline Image add_noise(const Image& clean, const NoiseModel& model) {
    if (!(model.sigma >= 0.0)) throw ConfigError("noise sigma must be nonnegative");
    Image out = clean;
    if (model.sigma == 0.0) return out;
    const CounterRng rng(model.seed, kNoiseStream);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += model.sigma * rng.normal(i);
    return out;
}

struct SigmaEstimate {
    double sigma = 0.0;
    bool cropped = false; // an odd trailing row/column was dropped
};

/// Noise level from the median absolute finest-scale Haar detail
/// coefficients (horizontal, vertical and diagonal pooled), divided by 0.6745.
inline SigmaEstimate estimate_sigma_mad(const Image& z) {
    const std::size_t h = z.height() - z.height() % 2;
    const std::size_t w = z.width() - z.width() % 2;
    if (h < 2 || w < 2) throw InvalidDimension("MAD estimate needs at least a 2x2 image");
    SigmaEstimate est;
    est.cropped = (h != z.height()) || (w != z.width());

    std::vector<double> coeffs;
    coeffs.reserve(3 * (h / 2) * (w / 2));
    for (std::size_t r = 0; r < h; r += 2) {
        for (std::size_t c = 0; c < w; c += 2) {
            const double a = z.at(r, c);
            const double b = z.at(r, c + 1);
            const double d = z.at(r + 1, c);
            const double e = z.at(r + 1, c + 1);
            coeffs.push_back(std::abs(0.5 * ((a + b) - (d + e))));
            coeffs.push_back(std::abs(0.5 * ((a - b) + (d - e))));
            coeffs.push_back(std::abs(0.5 * ((a - b) - (d - e))));
        }
    }
    const std::size_t n = coeffs.size();
    const auto mid = coeffs.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(coeffs.begin(), mid, coeffs.end());
    double median = *mid;
    if (n % 2 == 0) {
        median = 0.5 * (median + *std::max_element(coeffs.begin(), mid));
    }
    est.sigma = median / 0.6745;
    return est;
}

/// ||u - uref||^2
inline double quadratic_error(const Image& u, const Image& uref) {
    if (!u.same_shape(uref)) throw ShapeError("quadratic_error: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double d = u[i] - uref[i];
        acc += d * d;
    }
    return acc;
}

/// 20 log10(||uref|| / ||u - uref||); +inf when u == uref.
inline double psnr(const Image& u, const Image& uref) {
    const double err = quadratic_error(u, uref);
    if (err == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(squared_norm(uref.values()) / err);
}

} // namespace dms
