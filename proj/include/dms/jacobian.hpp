#pragma once

#include <cmath>
#include <cstddef>

#include "dms/error.hpp"
#include "dms/grid.hpp"
#include "dms/solver.hpp"

namespace dms {

/// Derivatives of one primal variable with respect to beta and lambda.
template <class Field>
struct JacobianPair {
    Field d_beta;
    Field d_lambda;

    bool all_finite() const noexcept { return d_beta.all_finite() && d_lambda.all_finite(); }
};

template <class Field>
JacobianPair<Field> zero_jacobian(std::size_t height, std::size_t width) {
    return {Field(height, width), Field(height, width)};
}

struct DiffSolveResult {
    SolveResult primal;
    JacobianPair<Image> du;
    JacobianPair<EdgeField> de;
};

/// d(u_tilde^k): the gradient-step map u - (2 beta / c) D^T((1-e)^2 . Du)
/// differentiated in u and e. 2 beta / c = 2 / (gamma ||D||^2) carries no
/// hyperparameter dependence.
inline JacobianPair<Image> diff_utilde_step(const DifferenceOperator& op, const EdgeField& du_prev,
                                            const EdgeField& e_prev, const JacobianPair<Image>& d_u,
                                            const JacobianPair<EdgeField>& d_e, const SlpamConstants& k) {
    const double step = 2.0 * k.beta / k.c;
    const std::size_t m = op.edge_count();
    EdgeField dd(op.height(), op.width());
    EdgeField t(op.height(), op.width());
    auto one = [&](const Image& du_theta, const EdgeField& de_theta) {
        op.check(du_theta);
        op.apply(du_theta.values(), dd.values());
        for (std::size_t i = 0; i < m; ++i) {
            const double w = 1.0 - e_prev[i];
            t[i] = w * w * dd[i] - 2.0 * w * de_theta[i] * du_prev[i];
        }
        Image out = op.apply_adjoint(t);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = du_theta[j] - step * out[j];
        return out;
    };
    return {one(d_u.d_beta, d_e.d_beta), one(d_u.d_lambda, d_e.d_lambda)};
}

/// d(u^{k+1}) for u^{k+1} = (c u_tilde + z) / (c + 1), with dc/dbeta = gamma ||D||^2
/// and dc/dlambda = 0.
inline JacobianPair<Image> diff_u_step(const Image& u_tilde, const Image& z,
                                       const JacobianPair<Image>& d_utilde, const SlpamConstants& k) {
    if (!u_tilde.same_shape(z) || !d_utilde.d_beta.same_shape(z) || !d_utilde.d_lambda.same_shape(z)) {
        throw ShapeError("diff_u_step: shape mismatch");
    }
    const double ratio = k.c / (k.c + 1.0);
    const double denom = (k.c + 1.0) * (k.c + 1.0);
    JacobianPair<Image> out{Image(z.height(), z.width()), Image(z.height(), z.width())};
    for (std::size_t j = 0; j < z.size(); ++j) {
        out.d_beta[j] = ratio * d_utilde.d_beta[j] + (u_tilde[j] - z[j]) / denom * k.dc_dbeta;
        out.d_lambda[j] = ratio * d_utilde.d_lambda[j];
    }
    return out;
}

/// d(e_tilde^k) per edge, with a = D u^{k+1} and da = D d(u^{k+1}).
inline JacobianPair<EdgeField> diff_etilde_step(const EdgeField& a, const JacobianPair<EdgeField>& da,
                                                const EdgeField& e_prev,
                                                const JacobianPair<EdgeField>& d_e,
                                                const SlpamConstants& k) {
    if (!a.same_grid(e_prev) || !a.same_grid(da.d_beta) || !a.same_grid(d_e.d_beta)) {
        throw ShapeError("diff_etilde_step: shape mismatch");
    }
    const double half = 0.5 * k.d_bar;
    JacobianPair<EdgeField> out{EdgeField(a.height(), a.width()), EdgeField(a.height(), a.width())};
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double a2 = a[i] * a[i];
        const double den = a2 + half;
        const double coupling = 2.0 * a[i] * half * (1.0 - e_prev[i]) / (den * den);
        out.d_beta[i] = coupling * da.d_beta[i] + half * d_e.d_beta[i] / den;
        out.d_lambda[i] = coupling * da.d_lambda[i] + half * d_e.d_lambda[i] / den;
    }
    return out;
}

/// d(e^{k+1}) through the soft threshold e = prox_{phi |.|}(e_tilde), with
/// phi = tau / (2 a^2 + d_bar) and tau = lambda / beta. Zero outside the
/// active set |e_tilde| > phi.
inline JacobianPair<EdgeField> diff_e_step(const EdgeField& e_tilde, const EdgeField& a,
                                           const JacobianPair<EdgeField>& da,
                                           const JacobianPair<EdgeField>& d_etilde,
                                           const SlpamConstants& k) {
    if (!a.same_grid(e_tilde) || !a.same_grid(da.d_beta) || !a.same_grid(d_etilde.d_beta)) {
        throw ShapeError("diff_e_step: shape mismatch");
    }
    const double dtau_dbeta = -k.lambda / (k.beta * k.beta);
    const double dtau_dlambda = 1.0 / k.beta;
    JacobianPair<EdgeField> out{EdgeField(a.height(), a.width()), EdgeField(a.height(), a.width())};
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double et = e_tilde[i];
        if (!(std::abs(et) > k.threshold(a[i]))) continue;
        const double sgn = et > 0.0 ? 1.0 : -1.0;
        const double den = 2.0 * a[i] * a[i] + k.d_bar;
        const double dphi_dtau = 1.0 / den;
        const double dphi_du = -4.0 * k.tau * a[i] / (den * den);
        out.d_beta[i] = d_etilde.d_beta[i] - sgn * (dphi_du * da.d_beta[i] + dphi_dtau * dtau_dbeta);
        out.d_lambda[i] =
            d_etilde.d_lambda[i] - sgn * (dphi_du * da.d_lambda[i] + dphi_dtau * dtau_dlambda);
    }
    return out;
}

/// Runs SL-PAM while forward-propagating d/dbeta and d/dlambda of every
/// iterate. The primal path is the one of slpam_solve.
inline DiffSolveResult diff_slpam_solve(const Image& z, const HyperParams& theta, const SolverConfig& cfg,
                                        const DifferenceOperator& op) {
    op.check(z);
    const std::size_t h = z.height();
    const std::size_t w = z.width();
    auto d_u = zero_jacobian<Image>(h, w);
    auto d_e = zero_jacobian<EdgeField>(h, w);
    JacobianPair<EdgeField> da{EdgeField(h, w), EdgeField(h, w)};

    auto propagate = [&](const SlpamStep& s) {
        auto d_ut = diff_utilde_step(op, s.du_prev, s.e_prev, d_u, d_e, s.k);
        auto d_un = diff_u_step(s.u_tilde, s.z, d_ut, s.k);
        op.apply(d_un.d_beta.values(), da.d_beta.values());
        op.apply(d_un.d_lambda.values(), da.d_lambda.values());
        auto d_et = diff_etilde_step(s.du_next, da, s.e_prev, d_e, s.k);
        auto d_en = diff_e_step(s.e_tilde, s.du_next, da, d_et, s.k);
        if (!d_un.all_finite() || !d_en.all_finite()) throw JacobianOverflow(s.iteration);
        d_u = std::move(d_un);
        d_e = std::move(d_en);
    };

    DiffSolveResult out;
    out.primal = slpam_solve(z, theta, cfg, op, propagate);
    out.du = std::move(d_u);
    out.de = std::move(d_e);
    return out;
}

} // namespace dms
