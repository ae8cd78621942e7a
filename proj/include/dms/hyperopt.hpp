#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "dms/error.hpp"
#include "dms/grid.hpp"
#include "dms/noise.hpp"
#include "dms/parallel.hpp"
#include "dms/solver.hpp"
#include "dms/stein.hpp"

namespace dms {

/// Weak Wolfe search: steps that fail sufficient decrease shrink the
/// bracket, steps that pass it but still descend too steeply extend it.
struct LineSearchConfig {
    double shrink = 0.5;               // backtracking factor
    double sufficient_decrease = 1e-4; // Armijo constant
    std::size_t max_trials = 30;
};

struct OptimConfig {
    std::size_t t_max = 20;
    double grad_tol = 1e-8;
    double kappa = 0.9;
    std::size_t memory = 10;
    double beta_min = 1e-12;
    double lambda_min = 1e-12;
    LineSearchConfig line_search;

    void validate() const {
        if (t_max == 0) throw ConfigError("optim t_max must be positive");
        if (!(grad_tol > 0.0)) throw ConfigError("optim grad_tol must be positive");
        if (!(kappa > 0.0 && kappa < 1.0)) throw ConfigError("optim kappa must lie in (0, 1)");
        if (memory == 0) throw ConfigError("optim memory must be positive");
        if (!(beta_min > 0.0) || !(lambda_min > 0.0)) throw ConfigError("optim bounds must be positive");
        if (!(line_search.shrink > 0.0 && line_search.shrink < 1.0)) {
            throw ConfigError("line-search shrink must lie in (0, 1)");
        }
        if (!(line_search.sufficient_decrease > 0.0 && line_search.sufficient_decrease < 1.0)) {
            throw ConfigError("line-search sufficient decrease must lie in (0, 1)");
        }
        if (line_search.max_trials == 0) throw ConfigError("line-search max_trials must be positive");
    }
};

enum class Termination { GradTol, TMax, LineSearchFail };

inline std::string to_string(Termination t) {
    switch (t) {
    case Termination::GradTol: return "grad_tol";
    case Termination::TMax: return "t_max";
    default: return "line_search_fail";
    }
}

/// Value and gradient (d/dbeta, d/dlambda) of the risk at one point.
struct RiskPoint {
    double value = 0.0;
    std::array<double, 2> grad{0.0, 0.0};
};

struct OptimIterate {
    HyperParams theta;
    double sure = 0.0;
    std::array<double, 2> sugar{0.0, 0.0};
};

struct OptimTrace {
    std::vector<OptimIterate> iterates; // accepted iterates, starting point first
    Termination termination = Termination::TMax;
    std::size_t evaluations = 0;
};

struct OptimResult {
    HyperParams theta;
    OptimTrace trace;
};

/// beta0 = N sigma ||Dz||^2 / 4, lambda0 = beta0 ||Dz||^2 / (2N)
inline HyperParams init_hyperparams(const Image& z, double sigma, const DifferenceOperator& op) {
    op.check(z);
    if (!(sigma > 0.0)) throw ConfigError("init_hyperparams needs sigma > 0");
    const EdgeField dz = op.apply(z);
    const double energy = squared_norm(dz.values());
    if (!(energy > 0.0)) throw DegenerateInput("constant image: no gradient energy to scale from");
    const double n = static_cast<double>(z.size());
    const double beta = n * sigma * energy / 4.0;
    return HyperParams(beta, beta * energy / (2.0 * n));
}

/// Diagonal of the starting inverse Hessian, |kappa theta_j / g_j|. A zero
/// gradient component falls back to 1 on that axis.
inline std::array<double, 2> init_inverse_hessian(const HyperParams& theta0, const std::array<double, 2>& grad0,
                                                  double kappa) {
    const double th[2] = {theta0.beta, theta0.lambda};
    std::array<double, 2> out{};
    for (int j = 0; j < 2; ++j) {
        out[j] = grad0[j] == 0.0 ? 1.0 : std::abs(kappa * th[j] / grad0[j]);
    }
    return out;
}

/// Projected limited-memory BFGS on (log beta, log lambda) with Armijo
/// backtracking. `risk(theta)` returns a RiskPoint in the original
/// coordinates. Only decreasing steps are accepted; a failed line search
/// ends the run at the best point found.
template <class Risk>
OptimResult minimize_hyperparams(Risk&& risk, const HyperParams& theta0, const OptimConfig& cfg) {
    cfg.validate();
    using Vec = std::array<double, 2>;
    const Vec lower{std::log(cfg.beta_min), std::log(cfg.lambda_min)};
    auto to_theta = [](const Vec& x) { return HyperParams(std::exp(x[0]), std::exp(x[1])); };
    auto project = [&](Vec x) {
        for (int j = 0; j < 2; ++j) x[j] = std::max(x[j], lower[j]);
        return x;
    };
    auto log_grad = [](const HyperParams& th, const Vec& g) { return Vec{th.beta * g[0], th.lambda * g[1]}; };
    auto dotv = [](const Vec& a, const Vec& b) { return a[0] * b[0] + a[1] * b[1]; };

    OptimResult out;
    OptimTrace& trace = out.trace;

    Vec x = project({std::log(theta0.beta), std::log(theta0.lambda)});
    HyperParams theta = theta0.beta >= cfg.beta_min && theta0.lambda >= cfg.lambda_min ? theta0 : to_theta(x);
    RiskPoint cur = risk(theta);
    ++trace.evaluations;
    trace.iterates.push_back({theta, cur.value, cur.grad});
    out.theta = theta;

    // Initial inverse Hessian in the original coordinates, mapped to log
    // coordinates: H_log = diag(1/theta) H diag(1/theta).
    const Vec h0_orig = init_inverse_hessian(theta, cur.grad, cfg.kappa);
    const Vec h0{h0_orig[0] / (theta.beta * theta.beta), h0_orig[1] / (theta.lambda * theta.lambda)};

    std::deque<std::pair<Vec, Vec>> memory; // (s, y) in log coordinates
    Vec g = log_grad(theta, cur.grad);

    for (std::size_t t = 0;; ++t) {
        if (std::hypot(cur.grad[0], cur.grad[1]) <= cfg.grad_tol) {
            trace.termination = Termination::GradTol;
            break;
        }
        if (t >= cfg.t_max) {
            trace.termination = Termination::TMax;
            break;
        }

        // Two-loop recursion for p = -H g.
        auto direction = [&] {
            Vec q = g;
            std::vector<double> alphas(memory.size());
            for (std::size_t i = memory.size(); i-- > 0;) {
                const auto& [s, y] = memory[i];
                alphas[i] = dotv(s, q) / dotv(y, s);
                q[0] -= alphas[i] * y[0];
                q[1] -= alphas[i] * y[1];
            }
            // Rescale the initial diagonal by the curvature of the newest pair,
            // keeping the anisotropy of the starting guess.
            double scale = 1.0;
            if (!memory.empty()) {
                const auto& [s, y] = memory.back();
                scale = dotv(s, y) / dotv(y, y) / std::sqrt(h0[0] * h0[1]);
            }
            Vec r{scale * h0[0] * q[0], scale * h0[1] * q[1]};
            for (std::size_t i = 0; i < memory.size(); ++i) {
                const auto& [s, y] = memory[i];
                const double b = dotv(y, r) / dotv(y, s);
                r[0] += s[0] * (alphas[i] - b);
                r[1] += s[1] * (alphas[i] - b);
            }
            return Vec{-r[0], -r[1]};
        };
        Vec p = direction();
        if (!(dotv(p, g) < 0.0)) {
            memory.clear();
            p = {-h0[0] * g[0], -h0[1] * g[1]};
        }

        const LineSearchConfig& ls = cfg.line_search;
        double step = 1.0;
        bool accepted = false;
        Vec x_new{};
        RiskPoint next;
        for (std::size_t trial = 0; trial < ls.max_trials; ++trial, step *= ls.shrink) {
            x_new = project({x[0] + step * p[0], x[1] + step * p[1]});
            const Vec move{x_new[0] - x[0], x_new[1] - x[1]};
            if (move[0] == 0.0 && move[1] == 0.0) break;
            ++trace.evaluations;
            try {
                next = risk(to_theta(x_new));
            } catch (const NumericalError&) {
                continue;
            } catch (const ReplicateError&) {
                continue;
            }
            if (std::isfinite(next.value) && next.value <= cur.value + ls.sufficient_decrease * dotv(g, move)) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            trace.termination = Termination::LineSearchFail;
            break;
        }

        const HyperParams theta_new = to_theta(x_new);
        const Vec g_new = log_grad(theta_new, next.grad);
        const Vec s{x_new[0] - x[0], x_new[1] - x[1]};
        const Vec y{g_new[0] - g[0], g_new[1] - g[1]};
        if (dotv(s, y) > 1e-12 * std::sqrt(dotv(s, s) * dotv(y, y))) {
            memory.emplace_back(s, y);
            if (memory.size() > cfg.memory) memory.pop_front();
        }
        x = x_new;
        g = g_new;
        cur = next;
        theta = theta_new;
        out.theta = theta;
        trace.iterates.push_back({theta, cur.value, cur.grad});
    }
    return out;
}

/// Averaged SUGAR descent: probes are drawn once from cfg.seed and kept for
/// the whole run; the start point comes from init_hyperparams.
inline OptimResult sugar_descent(const Image& z, const SteinConfig& cfg, const OptimConfig& opt,
                                 const SolverConfig& solver, std::size_t jobs = 1) {
    cfg.validate();
    solver.validate();
    const DifferenceOperator op(z.height(), z.width());
    const MonteCarloSet deltas = MonteCarloSet::draw(z.height(), z.width(), cfg.replicates, cfg.seed);
    const HyperParams theta0 = init_hyperparams(z, cfg.sigma, op);
    auto risk = [&](const HyperParams& theta) {
        const RiskEval r = averaged_risk(z, theta, cfg, deltas, solver, op, jobs);
        return RiskPoint{r.sure, r.sugar};
    };
    return minimize_hyperparams(risk, theta0, opt);
}

/// Log-spaced rectangular grid of hyperparameters; beta is the outer index.
struct LogGrid {
    double beta_min = 1e-2;
    double beta_max = 1e3;
    double lambda_min = 1e-4;
    double lambda_max = 1e1;
    std::size_t beta_count = 40;
    std::size_t lambda_count = 40;

    void validate() const {
        if (!(beta_min > 0.0 && beta_max >= beta_min)) throw ConfigError("grid beta range invalid");
        if (!(lambda_min > 0.0 && lambda_max >= lambda_min)) throw ConfigError("grid lambda range invalid");
        if (beta_count == 0 || lambda_count == 0) throw ConfigError("grid must be nonempty");
    }

    static double node(double lo, double hi, std::size_t i, std::size_t count) {
        if (count == 1 || i == 0) return lo;
        if (i + 1 == count) return hi;
        const double f = static_cast<double>(i) / static_cast<double>(count - 1);
        return std::exp(std::log(lo) + f * (std::log(hi) - std::log(lo)));
    }

    std::size_t size() const noexcept { return beta_count * lambda_count; }

    HyperParams at(std::size_t index) const {
        const std::size_t bi = index / lambda_count;
        const std::size_t li = index % lambda_count;
        return HyperParams(node(beta_min, beta_max, bi, beta_count),
                           node(lambda_min, lambda_max, li, lambda_count));
    }
};

struct RiskMap {
    LogGrid grid;
    std::vector<double> values; // row-major, beta outer
    HyperParams argmin;
    double min_value = std::numeric_limits<double>::infinity();
};

/// Evaluates `objective(theta)` on every node (concurrently) and returns the
/// full map with its argmin. Ties keep the first node in row-major order.
template <class Objective>
RiskMap grid_search(const LogGrid& grid, Objective&& objective, std::size_t jobs = 1) {
    grid.validate();
    RiskMap map;
    map.grid = grid;
    map.values.assign(grid.size(), 0.0);
    parallel_for(grid.size(), jobs, [&](std::size_t i) { map.values[i] = objective(grid.at(i)); });
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        if (map.values[i] < map.min_value) {
            map.min_value = map.values[i];
            map.argmin = grid.at(i);
        }
    }
    return map;
}

enum class RiskObjective { AveragedSure, TrueQuadraticError };

/// Grid search of the D-MS solver under one of the two risk objectives.
/// `reference` is the clean image, required for TrueQuadraticError.
inline RiskMap grid_search(const Image& z, const LogGrid& grid, RiskObjective objective,
                           const Image* reference, const SteinConfig& cfg, const SolverConfig& solver,
                           std::size_t jobs = 1) {
    solver.validate();
    const DifferenceOperator op(z.height(), z.width());
    if (objective == RiskObjective::TrueQuadraticError) {
        if (reference == nullptr) throw ConfigError("true quadratic error needs a reference image");
        op.check(*reference);
        return grid_search(
            grid,
            [&](const HyperParams& th) { return quadratic_error(slpam_solve(z, th, solver, op).u, *reference); },
            jobs);
    }
    cfg.validate();
    const MonteCarloSet deltas = MonteCarloSet::draw(z.height(), z.width(), cfg.replicates, cfg.seed);
    return grid_search(
        grid, [&](const HyperParams& th) { return averaged_sure(z, th, cfg, deltas, solver, op); }, jobs);
}

inline void write_risk_csv(std::ostream& os, const RiskMap& map) {
    os << "beta,lambda,value\n";
    os.precision(17);
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        const HyperParams th = map.grid.at(i);
        os << th.beta << ',' << th.lambda << ',' << map.values[i] << '\n';
    }
}

inline void write_trace_csv(std::ostream& os, const OptimTrace& trace) {
    os << "iteration,beta,lambda,sure,sugar_beta,sugar_lambda\n";
    os.precision(17);
    for (std::size_t i = 0; i < trace.iterates.size(); ++i) {
        const OptimIterate& it = trace.iterates[i];
        os << i << ',' << it.theta.beta << ',' << it.theta.lambda << ',' << it.sure << ',' << it.sugar[0]
           << ',' << it.sugar[1] << '\n';
    }
}

} // namespace dms
