#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dms/error.hpp"

namespace dms {

/// Real-valued pixel grid stored row-major.
class Image {
public:
    Image() = default;

    Image(std::size_t height, std::size_t width, double fill = 0.0)
        : height_(height), width_(width), values_(height * width, fill) {}

    Image(std::size_t height, std::size_t width, std::vector<double> values)
        : height_(height), width_(width), values_(std::move(values)) {
        if (values_.size() != height_ * width_) {
            throw ShapeError("image value count does not match height x width");
        }
    }

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return values_.size(); }

    double& operator[](std::size_t i) noexcept { return values_[i]; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }
    double& at(std::size_t row, std::size_t col) noexcept { return values_[row * width_ + col]; }
    double at(std::size_t row, std::size_t col) const noexcept { return values_[row * width_ + col]; }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    double* data() noexcept { return values_.data(); }
    const double* data() const noexcept { return values_.data(); }

    bool same_shape(const Image& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }

    bool all_finite() const noexcept {
        for (double v : values_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> values_;
};

/// Number of 4-neighbour edges of a height x width grid.
constexpr std::size_t edge_count(std::size_t height, std::size_t width) noexcept {
    if (height == 0 || width == 0) return 0;
    return (height - 1) * width + height * (width - 1);
}

/// Values living on the edges between 4-neighbour pixels. Vertical edges
/// (pixel (r,c) to (r+1,c)) come first, then horizontal edges ((r,c) to
/// (r,c+1)), each block row-major.
class EdgeField {
public:
    EdgeField() = default;

    EdgeField(std::size_t height, std::size_t width, double fill = 0.0)
        : height_(height), width_(width), values_(edge_count(height, width), fill) {}

    EdgeField(std::size_t height, std::size_t width, std::vector<double> values)
        : height_(height), width_(width), values_(std::move(values)) {
        if (values_.size() != edge_count(height_, width_)) {
            throw ShapeError("edge value count does not match the edge lattice");
        }
    }

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return values_.size(); }
    std::size_t vertical_count() const noexcept { return height_ == 0 ? 0 : (height_ - 1) * width_; }

    double& operator[](std::size_t i) noexcept { return values_[i]; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    double* data() noexcept { return values_.data(); }
    const double* data() const noexcept { return values_.data(); }

    bool same_grid(const Image& img) const noexcept {
        return height_ == img.height() && width_ == img.width();
    }
    bool same_grid(const EdgeField& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }

    bool all_finite() const noexcept {
        for (double v : values_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    friend bool operator==(const EdgeField&, const EdgeField&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> values_;
};

/// Regularization weights of the functional: smoothness weight beta and
/// contour-length weight lambda.
struct HyperParams {
    double beta = 1.0;
    double lambda = 1.0;

    HyperParams() = default;
    HyperParams(double b, double l) : beta(b), lambda(l) {
        if (!(beta > 0.0) || !(lambda > 0.0) || !std::isfinite(beta) || !std::isfinite(lambda)) {
            throw ConfigError("hyperparameters must be positive and finite");
        }
    }

    friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

template <class T>
inline double dot(std::span<const T> a, std::span<const T> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline double dot(const Image& a, const Image& b) { return dot(a.values(), b.values()); }
inline double dot(const EdgeField& a, const EdgeField& b) { return dot(a.values(), b.values()); }

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

/// Forward-difference operator on the Neumann 4-neighbour lattice:
/// (D u)_i = u[q_i] - u[p_i].
class DifferenceOperator {
public:
    struct Row {
        std::uint32_t p;
        std::uint32_t q;
    };

    DifferenceOperator(std::size_t height, std::size_t width) : height_(height), width_(width) {
        if (height < 2 || width < 2) {
            throw InvalidDimension("difference operator needs height >= 2 and width >= 2, got " +
                                   std::to_string(height) + "x" + std::to_string(width));
        }
        rows_.reserve(dms::edge_count(height, width));
        for (std::size_t r = 0; r + 1 < height; ++r) {
            for (std::size_t c = 0; c < width; ++c) {
                rows_.push_back({static_cast<std::uint32_t>(r * width + c),
                                 static_cast<std::uint32_t>((r + 1) * width + c)});
            }
        }
        for (std::size_t r = 0; r < height; ++r) {
            for (std::size_t c = 0; c + 1 < width; ++c) {
                rows_.push_back({static_cast<std::uint32_t>(r * width + c),
                                 static_cast<std::uint32_t>(r * width + c + 1)});
            }
        }
        op_norm_sq_ = 1.01 * estimate_norm_sq();
    }

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t pixel_count() const noexcept { return height_ * width_; }
    std::size_t edge_count() const noexcept { return rows_.size(); }
    std::size_t vertical_count() const noexcept { return (height_ - 1) * width_; }
    std::span<const Row> rows() const noexcept { return rows_; }

    /// Upper bound on ||D||^2 (power iteration, inflated by 1%).
    double op_norm_sq() const noexcept { return op_norm_sq_; }

    void apply(std::span<const double> u, std::span<double> out) const noexcept {
        const std::size_t h = height_;
        const std::size_t w = width_;
        double* o = out.data();
        const double* x = u.data();
        for (std::size_t i = 0; i < (h - 1) * w; ++i) o[i] = x[i + w] - x[i];
        o += (h - 1) * w;
        for (std::size_t r = 0; r < h; ++r) {
            const double* xr = x + r * w;
            for (std::size_t c = 0; c + 1 < w; ++c) o[c] = xr[c + 1] - xr[c];
            o += w - 1;
        }
    }

    void apply_adjoint(std::span<const double> v, std::span<double> out) const noexcept {
        const std::size_t h = height_;
        const std::size_t w = width_;
        double* o = out.data();
        const double* vv = v.data();
        const std::size_t nv = (h - 1) * w;
        // vertical block: edge i couples pixel i (-1) and pixel i + w (+1)
        for (std::size_t i = 0; i < w; ++i) o[i] = -vv[i];
        for (std::size_t i = w; i < nv; ++i) o[i] = vv[i - w] - vv[i];
        for (std::size_t i = nv; i < h * w; ++i) o[i] = vv[i - w];
        const double* hv = vv + nv;
        for (std::size_t r = 0; r < h; ++r) {
            double* orow = o + r * w;
            const double* hr = hv + r * (w - 1);
            orow[0] -= hr[0];
            for (std::size_t c = 1; c + 1 < w; ++c) orow[c] += hr[c - 1] - hr[c];
            orow[w - 1] += hr[w - 2];
        }
    }

    EdgeField apply(const Image& u) const {
        check(u);
        EdgeField out(height_, width_);
        apply(u.values(), out.values());
        return out;
    }

    Image apply_adjoint(const EdgeField& v) const {
        if (v.height() != height_ || v.width() != width_) {
            throw ShapeError("edge field does not match the operator lattice");
        }
        Image out(height_, width_);
        apply_adjoint(v.values(), out.values());
        return out;
    }

    void check(const Image& u) const {
        if (u.height() != height_ || u.width() != width_) {
            throw ShapeError("image " + std::to_string(u.height()) + "x" + std::to_string(u.width()) +
                             " does not match operator " + std::to_string(height_) + "x" +
                             std::to_string(width_));
        }
    }

    void check(const EdgeField& e) const {
        if (e.height() != height_ || e.width() != width_) {
            throw ShapeError("edge field does not match the operator lattice");
        }
    }

private:
    // Rayleigh quotient of D^T D after power iteration from a perturbed
    // checkerboard, which is close to the top eigenvector.
    double estimate_norm_sq() const {
        const std::size_t n = pixel_count();
        std::vector<double> x(n);
        std::vector<double> edges(edge_count());
        std::vector<double> y(n);
        std::uint64_t state = 0x9E3779B97F4A7C15ull;
        for (std::size_t r = 0; r < height_; ++r) {
            for (std::size_t c = 0; c < width_; ++c) {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                const double jitter = static_cast<double>(state >> 11) * 0x1.0p-53 - 0.5;
                x[r * width_ + c] = (((r + c) % 2 == 0) ? 1.0 : -1.0) + 0.1 * jitter;
            }
        }
        double rayleigh = 0.0;
        for (int it = 0; it < 50; ++it) {
            const double nx = std::sqrt(squared_norm(x));
            for (double& v : x) v /= nx;
            apply(x, edges);
            const double next = squared_norm(edges);
            apply_adjoint(edges, y);
            x.swap(y);
            if (it > 0 && std::abs(next - rayleigh) <= 1e-10 * next) {
                rayleigh = next;
                break;
            }
            rayleigh = next;
        }
        return rayleigh;
    }

    std::size_t height_;
    std::size_t width_;
    std::vector<Row> rows_;
    double op_norm_sq_ = 0.0;
};

} // namespace dms
