#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "dms/error.hpp"
#include "dms/grid.hpp"

namespace dms {

/// Parameters of the SL-PAM descent. Defaults follow the reference setup:
/// c_k = gamma * beta * ||D||^2 and d_k = eta * beta * ||D||^2.
struct SolverConfig {
    double gamma = 1.01;
    double eta = 1.01e-3;
    double xi = 1e-4;             // stop when |Psi(k+1) - Psi(k)| <= xi
    std::size_t max_iter = 2000;
    std::optional<std::size_t> fixed_iter; // run exactly this many iterations

    void validate() const {
        if (!(gamma > 1.0)) throw ConfigError("solver gamma must be > 1");
        if (!(eta > 0.0)) throw ConfigError("solver eta must be > 0");
        if (!(xi > 0.0)) throw ConfigError("solver xi must be > 0");
        if (max_iter == 0) throw ConfigError("solver max_iter must be positive");
        if (fixed_iter && *fixed_iter == 0) throw ConfigError("solver fixed_iter must be positive");
    }
};

struct SolveResult {
    Image u;
    EdgeField e;
    double initial_objective = 0.0;      // Psi(u0, e0)
    std::vector<double> objective_trace; // Psi after each iteration
    std::size_t iterations = 0;
};

/// Scalars shared by the primal and differentiated iterations.
struct SlpamConstants {
    double beta;
    double lambda;
    double norm_sq;  // upper bound on ||D||^2
    double c;        // gamma * beta * ||D||^2
    double d;        // eta * beta * ||D||^2
    double d_bar;    // eta * ||D||^2, so d = beta * d_bar
    double tau;      // lambda / beta
    double dc_dbeta; // gamma * ||D||^2

    static SlpamConstants make(const HyperParams& theta, const SolverConfig& cfg,
                               const DifferenceOperator& op) noexcept {
        const double nsq = op.op_norm_sq();
        return {theta.beta,
                theta.lambda,
                nsq,
                cfg.gamma * theta.beta * nsq,
                cfg.eta * theta.beta * nsq,
                cfg.eta * nsq,
                theta.lambda / theta.beta,
                cfg.gamma * nsq};
    }

    /// Soft-threshold level of edge i given a = D_i u^{k+1}.
    double threshold(double a) const noexcept { return lambda / (2.0 * beta * a * a + d); }

    /// Relaxed contour value before thresholding.
    double relaxed_edge(double a, double e) const noexcept {
        const double ba2 = beta * a * a;
        return (ba2 + 0.5 * d * e) / (ba2 + 0.5 * d);
    }
};

/// sign(x) * max(|x| - phi, 0)
inline double soft_threshold(double x, double phi) noexcept {
    if (x > phi) return x - phi;
    if (x < -phi) return x + phi;
    return 0.0;
}

/// Psi(u, e) = 1/2 ||u - z||^2 + beta sum (1 - e_i)^2 (D_i u)^2 + lambda sum |e_i|
inline double objective(const Image& z, const Image& u, const EdgeField& e, const HyperParams& theta,
                        const DifferenceOperator& op) {
    op.check(z);
    op.check(u);
    op.check(e);
    double data = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        const double r = u[j] - z[j];
        data += r * r;
    }
    const EdgeField du = op.apply(u);
    double coupling = 0.0;
    double length = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) {
        const double w = 1.0 - e[i];
        coupling += w * w * du[i] * du[i];
        length += std::abs(e[i]);
    }
    return 0.5 * data + theta.beta * coupling + theta.lambda * length;
}

/// Closed-form prox of (1/c) * 1/2||. - z||^2 at utilde.
inline Image prox_data(const Image& utilde, const Image& z, double c) {
    if (!utilde.same_shape(z)) throw ShapeError("prox_data: shape mismatch");
    if (!(c > 0.0)) throw ConfigError("prox_data: c must be positive");
    Image out(z.height(), z.width());
    for (std::size_t j = 0; j < z.size(); ++j) out[j] = (c * utilde[j] + z[j]) / (c + 1.0);
    return out;
}

/// Gradient in u of beta * sum (1 - e_i)^2 (D_i u)^2, i.e. 2 beta D^T((1-e)^2 . Du).
inline Image grad_u_g(const Image& u, const EdgeField& e, double beta, const DifferenceOperator& op) {
    op.check(u);
    op.check(e);
    EdgeField t = op.apply(u);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double w = 1.0 - e[i];
        t[i] *= 2.0 * beta * w * w;
    }
    return op.apply_adjoint(t);
}

/// Read-only view of one SL-PAM iteration handed to observers.
struct SlpamStep {
    std::size_t iteration; // 1-based index of the iterate being produced
    const SlpamConstants& k;
    const Image& z;
    const Image& u_prev;       // u^k
    const EdgeField& e_prev;   // e^k
    const EdgeField& du_prev;  // D u^k
    const Image& u_tilde;      // gradient step
    const Image& u_next;       // u^{k+1}
    const EdgeField& du_next;  // D u^{k+1}
    const EdgeField& e_tilde;  // relaxed contours
    const EdgeField& e_next;   // e^{k+1}
};

struct NoObserver {
    void operator()(const SlpamStep&) const noexcept {}
};

/// Alternating minimization of Psi starting at u0 = z, e0 = 1. The observer
/// is invoked after each primal update, before the iterates advance.
template <class Observer>
SolveResult slpam_solve(const Image& z, const HyperParams& theta, const SolverConfig& cfg,
                        const DifferenceOperator& op, Observer&& observer) {
    cfg.validate();
    op.check(z);
    const SlpamConstants k = SlpamConstants::make(theta, cfg, op);
    const std::size_t n = z.size();
    const std::size_t m = op.edge_count();
    const double step = 2.0 * k.beta / k.c;

    Image u = z;
    EdgeField e(z.height(), z.width(), 1.0);
    Image u_tilde(z.height(), z.width());
    Image u_next(z.height(), z.width());
    Image grad(z.height(), z.width());
    EdgeField du(z.height(), z.width());
    EdgeField du_next(z.height(), z.width());
    EdgeField weighted(z.height(), z.width());
    EdgeField e_tilde(z.height(), z.width());
    EdgeField e_next(z.height(), z.width());

    op.apply(u.values(), du.values());

    SolveResult result;
    // Psi(z, 1) reduces to the contour-length term.
    result.initial_objective = k.lambda * static_cast<double>(m);
    double psi = result.initial_objective;

    const std::size_t limit = cfg.fixed_iter.value_or(cfg.max_iter);
    result.objective_trace.reserve(limit);

    for (std::size_t it = 1; it <= limit; ++it) {
        for (std::size_t i = 0; i < m; ++i) {
            const double w = 1.0 - e[i];
            weighted[i] = w * w * du[i];
        }
        op.apply_adjoint(weighted.values(), grad.values());
        for (std::size_t j = 0; j < n; ++j) {
            u_tilde[j] = u[j] - step * grad[j];
            u_next[j] = (k.c * u_tilde[j] + z[j]) / (k.c + 1.0);
        }
        op.apply(u_next.values(), du_next.values());

        double data = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double r = u_next[j] - z[j];
            data += r * r;
        }
        double coupling = 0.0;
        double length = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double a = du_next[i];
            e_tilde[i] = k.relaxed_edge(a, e[i]);
            e_next[i] = soft_threshold(e_tilde[i], k.threshold(a));
            const double w = 1.0 - e_next[i];
            coupling += w * w * a * a;
            length += std::abs(e_next[i]);
        }
        const double psi_next = 0.5 * data + k.beta * coupling + k.lambda * length;
        if (!std::isfinite(psi_next)) throw DivergenceError(it);

        observer(SlpamStep{it, k, z, u, e, du, u_tilde, u_next, du_next, e_tilde, e_next});

        std::swap(u, u_next);
        std::swap(e, e_next);
        std::swap(du, du_next);
        result.objective_trace.push_back(psi_next);
        result.iterations = it;

        const double change = std::abs(psi_next - psi);
        psi = psi_next;
        if (!cfg.fixed_iter && change <= cfg.xi) break;
    }

    result.u = std::move(u);
    result.e = std::move(e);
    return result;
}

inline SolveResult slpam_solve(const Image& z, const HyperParams& theta, const SolverConfig& cfg,
                               const DifferenceOperator& op) {
    return slpam_solve(z, theta, cfg, op, NoObserver{});
}

} // namespace dms
