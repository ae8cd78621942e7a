#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <optional>
#include <vector>

#include "dms/error.hpp"
#include "dms/grid.hpp"
#include "dms/jacobian.hpp"
#include "dms/parallel.hpp"
#include "dms/random.hpp"
#include "dms/solver.hpp"

namespace dms {

struct SteinConfig {
    double sigma = 0.05;
    double alpha = 0.3;            // finite-difference step exponent
    std::size_t replicates = 5;    // Monte-Carlo probes R
    std::uint64_t seed = 0;
    // The shifted solve runs exactly as many iterations as the solve at z.
    // Off: both solves stop on their own, which makes the estimate jump with
    // theta whenever one stopping index changes.
    bool replay_run_length = true;

    /// Run length handed to the shifted solve of a finite-difference pair.
    std::optional<std::size_t> shifted_run_length(std::size_t base_iterations) const {
        if (replay_run_length) return base_iterations;
        return std::nullopt;
    }

    void validate() const {
        if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("stein sigma must be > 0");
        if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("stein alpha must lie in (0, 1)");
        if (replicates == 0) throw ConfigError("stein replicates must be >= 1");
    }
};

/// Finite-difference step 2 sigma / n^alpha.
inline double fd_step(double sigma, std::size_t n, double alpha) {
    if (!(sigma > 0.0) || n == 0) throw ConfigError("fd_step needs sigma > 0 and n > 0");
    return 2.0 * sigma / std::pow(static_cast<double>(n), alpha);
}

inline constexpr std::uint64_t kProbeStream = 0xB0000000ull;

/// Frozen set of standard-normal probe images.
struct MonteCarloSet {
    std::vector<Image> deltas;
    std::uint64_t seed = 0;

    std::size_t size() const noexcept { return deltas.size(); }

    static MonteCarloSet draw(std::size_t height, std::size_t width, std::size_t count,
                              std::uint64_t seed) {
        MonteCarloSet set;
        set.seed = seed;
        set.deltas.reserve(count);
        for (std::size_t r = 0; r < count; ++r) {
            set.deltas.push_back(gaussian_image(height, width, seed, kProbeStream + r));
        }
        return set;
    }
};

/// Output of an estimator run. `iterations` is the length of the run.
struct Estimate {
    Image u;
    std::size_t iterations = 0;
};

/// An estimate together with its derivatives in beta and lambda.
struct Differentiated {
    Image u;
    JacobianPair<Image> du;
    std::size_t iterations = 0;
};

struct ReplicateRisk {
    double sure = 0.0;
    std::array<double, 2> sugar{0.0, 0.0};
};

struct RiskEval {
    double sure = 0.0;
    std::array<double, 2> sugar{0.0, 0.0}; // d/dbeta, d/dlambda
    std::vector<ReplicateRisk> per_replicate;
};

namespace detail {

inline void check_probe(const Image& z, const Image& delta) {
    if (!z.same_shape(delta)) throw ShapeError("probe image does not match the data");
}

inline Image perturbed(const Image& z, const Image& delta, double eps) {
    Image out = z;
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += eps * delta[j];
    return out;
}

} // namespace detail

/// ||u - z||^2 + (2 sigma^2 / eps) <u_eps - u, delta> - sigma^2 N
inline double sure_combine(const Image& z, const Image& u, const Image& u_eps, const Image& delta,
                           double sigma, double eps) {
    double fit = 0.0;
    double div = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
        const double r = u[j] - z[j];
        fit += r * r;
        div += (u_eps[j] - u[j]) * delta[j];
    }
    const double s2 = sigma * sigma;
    return fit + 2.0 * s2 / eps * div - s2 * static_cast<double>(z.size());
}

/// Per component: 2 <du, u - z> + (2 sigma^2 / eps) <du_eps - du, delta>
inline std::array<double, 2> sugar_combine(const Image& z, const Differentiated& base,
                                           const Differentiated& shifted, const Image& delta,
                                           double sigma, double eps) {
    const double s2 = sigma * sigma;
    auto one = [&](const Image& d0, const Image& d1) {
        double fit = 0.0;
        double div = 0.0;
        for (std::size_t j = 0; j < z.size(); ++j) {
            fit += d0[j] * (base.u[j] - z[j]);
            div += (d1[j] - d0[j]) * delta[j];
        }
        return 2.0 * fit + 2.0 * s2 / eps * div;
    };
    return {one(base.du.d_beta, shifted.du.d_beta), one(base.du.d_lambda, shifted.du.d_lambda)};
}

// Estimator callables are invoked as solve(x, run_length). With run_length
// empty the estimator uses its own stopping rule; otherwise it runs exactly
// that many iterations. By default the shifted solve of each
// finite-difference pair replays the iteration count of the solve at z, so
// both sides of the difference come from the same map.

/// FDMC SURE: two cold solves, at z and at z + eps delta.
template <class Solve>
double sure_fdmc(const Image& z, const SteinConfig& cfg, const Image& delta, Solve&& solve) {
    cfg.validate();
    detail::check_probe(z, delta);
    const double eps = fd_step(cfg.sigma, z.size(), cfg.alpha);
    const Estimate base = solve(z, std::optional<std::size_t>{});
    const Estimate shifted = solve(detail::perturbed(z, delta, eps), cfg.shifted_run_length(base.iterations));
    return sure_combine(z, base.u, shifted.u, delta, cfg.sigma, eps);
}

/// SL-PAM at fixed hyperparameters as a Stein estimator.
inline auto dms_estimator(const HyperParams& theta, const SolverConfig& solver, const DifferenceOperator& op) {
    return [theta, solver, &op](const Image& x, std::optional<std::size_t> run_length) {
        SolverConfig cfg = solver;
        if (run_length) cfg.fixed_iter = *run_length;
        SolveResult r = slpam_solve(x, theta, cfg, op);
        return Estimate{std::move(r.u), r.iterations};
    };
}

/// Differentiated SL-PAM at fixed hyperparameters as a Stein estimator.
inline auto dms_diff_estimator(const HyperParams& theta, const SolverConfig& solver,
                               const DifferenceOperator& op) {
    return [theta, solver, &op](const Image& x, std::optional<std::size_t> run_length) {
        SolverConfig cfg = solver;
        if (run_length) cfg.fixed_iter = *run_length;
        DiffSolveResult r = diff_slpam_solve(x, theta, cfg, op);
        return Differentiated{std::move(r.primal.u), std::move(r.du), r.primal.iterations};
    };
}

inline double sure_fdmc(const Image& z, const HyperParams& theta, const SteinConfig& cfg,
                        const Image& delta, const SolverConfig& solver, const DifferenceOperator& op) {
    return sure_fdmc(z, cfg, delta, dms_estimator(theta, solver, op));
}

/// FDMC SUGAR: two differentiated solves, at z and at z + eps delta.
template <class DiffSolve>
std::array<double, 2> sugar_fdmc(const Image& z, const SteinConfig& cfg, const Image& delta,
                                 DiffSolve&& solve) {
    cfg.validate();
    detail::check_probe(z, delta);
    const double eps = fd_step(cfg.sigma, z.size(), cfg.alpha);
    const Differentiated base = solve(z, std::optional<std::size_t>{});
    const Differentiated shifted = solve(detail::perturbed(z, delta, eps), cfg.shifted_run_length(base.iterations));
    return sugar_combine(z, base, shifted, delta, cfg.sigma, eps);
}

inline std::array<double, 2> sugar_fdmc(const Image& z, const HyperParams& theta, const SteinConfig& cfg,
                                        const Image& delta, const SolverConfig& solver,
                                        const DifferenceOperator& op) {
    return sugar_fdmc(z, cfg, delta, dms_diff_estimator(theta, solver, op));
}

/// Monte-Carlo averaged SURE and SUGAR. The solve at z is shared by all
/// replicates; each replicate adds one solve at z + eps delta_r. Replicates
/// run on up to `jobs` threads and are reduced in replicate order.
template <class DiffSolve>
RiskEval averaged_risk(const Image& z, const SteinConfig& cfg, const MonteCarloSet& deltas,
                       DiffSolve&& solve, std::size_t jobs = 1) {
    cfg.validate();
    if (deltas.size() == 0) throw ConfigError("empty Monte-Carlo set");
    for (const Image& d : deltas.deltas) detail::check_probe(z, d);
    const double eps = fd_step(cfg.sigma, z.size(), cfg.alpha);
    const Differentiated base = solve(z, std::optional<std::size_t>{});

    RiskEval out;
    out.per_replicate.resize(deltas.size());
    parallel_for(deltas.size(), jobs, [&](std::size_t r) {
        try {
            const Image& delta = deltas.deltas[r];
            const Differentiated shifted =
                solve(detail::perturbed(z, delta, eps), cfg.shifted_run_length(base.iterations));
            out.per_replicate[r].sure = sure_combine(z, base.u, shifted.u, delta, cfg.sigma, eps);
            out.per_replicate[r].sugar = sugar_combine(z, base, shifted, delta, cfg.sigma, eps);
        } catch (const std::exception& ex) {
            throw ReplicateError(r, ex.what());
        }
    });
    const double inv = 1.0 / static_cast<double>(deltas.size());
    for (const ReplicateRisk& rr : out.per_replicate) {
        out.sure += rr.sure;
        out.sugar[0] += rr.sugar[0];
        out.sugar[1] += rr.sugar[1];
    }
    out.sure *= inv;
    out.sugar[0] *= inv;
    out.sugar[1] *= inv;
    return out;
}

inline RiskEval averaged_risk(const Image& z, const HyperParams& theta, const SteinConfig& cfg,
                              const MonteCarloSet& deltas, const SolverConfig& solver,
                              const DifferenceOperator& op, std::size_t jobs = 1) {
    return averaged_risk(z, cfg, deltas, dms_diff_estimator(theta, solver, op), jobs);
}

/// Averaged SURE without derivatives (primal solves only).
template <class Solve>
double averaged_sure(const Image& z, const SteinConfig& cfg, const MonteCarloSet& deltas, Solve&& solve,
                     std::size_t jobs = 1) {
    cfg.validate();
    if (deltas.size() == 0) throw ConfigError("empty Monte-Carlo set");
    for (const Image& d : deltas.deltas) detail::check_probe(z, d);
    const double eps = fd_step(cfg.sigma, z.size(), cfg.alpha);
    const Estimate base = solve(z, std::optional<std::size_t>{});
    std::vector<double> values(deltas.size());
    parallel_for(deltas.size(), jobs, [&](std::size_t r) {
        try {
            const Image& delta = deltas.deltas[r];
            const Estimate shifted = solve(detail::perturbed(z, delta, eps), cfg.shifted_run_length(base.iterations));
            values[r] = sure_combine(z, base.u, shifted.u, delta, cfg.sigma, eps);
        } catch (const std::exception& ex) {
            throw ReplicateError(r, ex.what());
        }
    });
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

inline double averaged_sure(const Image& z, const HyperParams& theta, const SteinConfig& cfg,
                            const MonteCarloSet& deltas, const SolverConfig& solver,
                            const DifferenceOperator& op, std::size_t jobs = 1) {
    return averaged_sure(z, cfg, deltas, dms_estimator(theta, solver, op), jobs);
}

} // namespace dms
