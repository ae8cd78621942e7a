#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "dms/error.hpp"
#include "dms/grid.hpp"

namespace dms {

enum class Geometry { Diamond, Ellipse };

inline std::string to_string(Geometry g) { return g == Geometry::Diamond ? "diamond" : "ellipse"; }

inline Geometry parse_geometry(const std::string& name) {
    if (name == "diamond" || name == "losange") return Geometry::Diamond;
    if (name == "ellipse") return Geometry::Ellipse;
    throw ConfigError("unknown geometry '" + name + "' (expected diamond or ellipse)");
}

/// Geometry and intensity constants, in coordinates normalized to [0,1]^2.
/// Each region carries its own linear ramp of amplitude `ramp`.
struct PhantomParams {
    double diamond_radius = 0.3;  // L1 radius of the centred losange
    double ellipse_a = 0.18;      // horizontal semi-axis of the inner ellipse
    double ellipse_b = 0.09;      // vertical semi-axis
    double background = 0.2;      // ramps left to right
    double foreground = 0.7;      // ramps top to bottom
    double inner = 0.2;           // ellipse, ramps right to left
    double ramp = 0.1;
};

struct Phantom {
    Geometry geometry = Geometry::Diamond;
    PhantomParams params;
    Image clean;
    EdgeField contours;             // 1 on edges joining different regions
    std::vector<int> region_labels; // per pixel: 0 background, 1 losange, 2 ellipse
};

inline Phantom make_phantom(Geometry geometry, std::size_t height, std::size_t width,
                            const PhantomParams& params = {}) {
    if (height < 16 || width < 16) {
        throw InvalidDimension("phantoms need at least 16x16 pixels");
    }
    Phantom ph;
    ph.geometry = geometry;
    ph.params = params;
    ph.clean = Image(height, width);
    ph.region_labels.assign(height * width, 0);

    std::size_t counts[3] = {0, 0, 0};
    for (std::size_t r = 0; r < height; ++r) {
        const double y = (static_cast<double>(r) + 0.5) / static_cast<double>(height);
        for (std::size_t c = 0; c < width; ++c) {
            const double x = (static_cast<double>(c) + 0.5) / static_cast<double>(width);
            const double dx = x - 0.5;
            const double dy = y - 0.5;
            int label = 0;
            if (std::abs(dx) + std::abs(dy) <= params.diamond_radius) label = 1;
            if (geometry == Geometry::Ellipse && params.ellipse_a > 0.0 && params.ellipse_b > 0.0) {
                const double q = (dx * dx) / (params.ellipse_a * params.ellipse_a) +
                                 (dy * dy) / (params.ellipse_b * params.ellipse_b);
                if (q <= 1.0) label = 2;
            }
            double value = 0.0;
            switch (label) {
            case 0: value = params.background + params.ramp * x; break;
            case 1: value = params.foreground + params.ramp * y; break;
            default: value = params.inner + params.ramp * (1.0 - x); break;
            }
            ph.clean.at(r, c) = value;
            ph.region_labels[r * width + c] = label;
            ++counts[label];
        }
    }
    if (counts[0] == 0 || counts[1] == 0 || (geometry == Geometry::Ellipse && counts[2] == 0)) {
        throw DegenerateGeometry("phantom parameters produce an empty region");
    }
    for (std::size_t j = 0; j < ph.clean.size(); ++j) {
        if (ph.clean[j] < 0.0 || ph.clean[j] > 1.0) {
            throw DegenerateGeometry("phantom intensities leave [0, 1]");
        }
    }

    ph.contours = EdgeField(height, width);
    const DifferenceOperator op(height, width);
    const auto rows = op.rows();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        ph.contours[i] = ph.region_labels[rows[i].p] != ph.region_labels[rows[i].q] ? 1.0 : 0.0;
    }
    return ph;
}

} // namespace dms
