#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace dms;

namespace {

SlpamConstants constants(double beta, double lambda, double nsq = 8.0, double gamma = 1.01, double eta = 1.01e-3) {
    return {beta, lambda, nsq, gamma * beta * nsq, eta * beta * nsq, eta * nsq, lambda / beta, gamma * nsq};
}

Image diamond_noisy(std::size_t n, double sigma, std::uint64_t seed) {
    return add_noise(make_phantom(Geometry::Diamond, n, n).clean, {sigma, seed});
}

// e_tilde as a function of the hyperparameters, with u and e chains frozen
// to first order: a(theta) = a + t da, e(theta) = e + t de.
double etilde_of(double beta, double lambda, double a, double e) {
    const SlpamConstants k = constants(beta, lambda);
    return k.relaxed_edge(a, e);
}

} // namespace

TEST(JacobianSteps, FirstIterationIsZero) {
    const DifferenceOperator op(6, 6);
    const Image u = oracle::uniform_image(6, 6, 1);
    const auto d = diff_utilde_step(op, op.apply(u), EdgeField(6, 6, 1.0), zero_jacobian<Image>(6, 6),
                                    zero_jacobian<EdgeField>(6, 6), constants(2.0, 0.1));
    for (double v : d.d_beta.values()) EXPECT_EQ(v, 0.0);
    for (double v : d.d_lambda.values()) EXPECT_EQ(v, 0.0);
}

TEST(JacobianSteps, UtildePassesThroughWithoutCoupling) {
    const DifferenceOperator op(5, 7);
    const JacobianPair<Image> du{oracle::uniform_image(5, 7, 2), oracle::uniform_image(5, 7, 3)};
    const auto d = diff_utilde_step(op, op.apply(oracle::uniform_image(5, 7, 4)), EdgeField(5, 7, 1.0), du,
                                    zero_jacobian<EdgeField>(5, 7), constants(2.0, 0.1));
    EXPECT_EQ(d.d_beta, du.d_beta);
    EXPECT_EQ(d.d_lambda, du.d_lambda);
}

TEST(JacobianSteps, UtildeMatchesLinearization) {
    // The gradient step is linear in u and quadratic in e; check against a
    // central difference along the tangent direction (du, de).
    const DifferenceOperator op(5, 5);
    const SlpamConstants k = constants(3.0, 0.2, op.op_norm_sq());
    const Image u = oracle::uniform_image(5, 5, 5);
    const EdgeField e = oracle::uniform_edges(5, 5, 6, 0.0, 1.0);
    const JacobianPair<Image> du{oracle::uniform_image(5, 5, 7), oracle::uniform_image(5, 5, 8)};
    const JacobianPair<EdgeField> de{oracle::uniform_edges(5, 5, 9), oracle::uniform_edges(5, 5, 10)};
    const auto got = diff_utilde_step(op, op.apply(u), e, du, de, k);
    auto step_map = [&](const Image& x, const EdgeField& f) {
        const Image g = grad_u_g(x, f, k.beta, op);
        Image out = x;
        for (std::size_t j = 0; j < x.size(); ++j) out[j] -= g[j] / k.c;
        return out;
    };
    const double h = 1e-6;
    for (int comp = 0; comp < 2; ++comp) {
        const Image& dx = comp == 0 ? du.d_beta : du.d_lambda;
        const EdgeField& df = comp == 0 ? de.d_beta : de.d_lambda;
        Image up = u, um = u;
        EdgeField ep = e, em = e;
        for (std::size_t j = 0; j < u.size(); ++j) {
            up[j] += h * dx[j];
            um[j] -= h * dx[j];
        }
        for (std::size_t i = 0; i < e.size(); ++i) {
            ep[i] += h * df[i];
            em[i] -= h * df[i];
        }
        const Image a = step_map(up, ep);
        const Image b = step_map(um, em);
        Image fd(5, 5);
        for (std::size_t j = 0; j < fd.size(); ++j) fd[j] = (a[j] - b[j]) / (2 * h);
        EXPECT_LE(oracle::rel_error((comp == 0 ? got.d_beta : got.d_lambda).values(), fd.values()), 1e-6);
    }
}

TEST(JacobianSteps, UStepLambdaIsScaling) {
    const SlpamConstants k = constants(2.0, 0.3);
    const Image z = oracle::uniform_image(3, 4, 1);
    const Image ut = oracle::uniform_image(3, 4, 2);
    const JacobianPair<Image> dut{oracle::uniform_image(3, 4, 3), oracle::uniform_image(3, 4, 4)};
    const auto d = diff_u_step(ut, z, dut, k);
    for (std::size_t j = 0; j < z.size(); ++j) {
        EXPECT_DOUBLE_EQ(d.d_lambda[j], k.c / (k.c + 1.0) * dut.d_lambda[j]);
    }
    const auto zero = diff_u_step(z, z, zero_jacobian<Image>(3, 4), k);
    for (double v : zero.d_beta.values()) EXPECT_EQ(v, 0.0);
}

TEST(JacobianSteps, UStepScalarDerivative) {
    // u(beta) = (c(beta) ut + z) / (c(beta) + 1), c = gamma beta L.
    const double gamma = 1.01, nsq = 7.9, ut = 0.8, zz = 0.3, beta = 0.7;
    const SlpamConstants k = constants(beta, 0.1, nsq, gamma);
    const Image dut(1, 1, 0.0);
    const auto d = diff_u_step(Image(1, 1, ut), Image(1, 1, zz), {dut, dut}, k);
    // closed form: gamma L (ut - z) / (gamma beta L + 1)^2
    const double c = gamma * beta * nsq;
    const double analytic = gamma * nsq * (ut - zz) / ((c + 1.0) * (c + 1.0));
    EXPECT_NEAR(d.d_beta[0], analytic, 1e-10 * std::abs(analytic));
    auto f = [&](long double b) {
        const long double cc = gamma * b * nsq;
        return (cc * ut + zz) / (cc + 1.0L);
    };
    const long double h = 1e-6L;
    const double fd = static_cast<double>((f(beta + h) - f(beta - h)) / (2 * h));
    EXPECT_NEAR(d.d_beta[0], fd, 1e-8 * std::abs(fd));
}

TEST(JacobianSteps, EtildeVanishingCases) {
    const SlpamConstants k = constants(2.0, 0.3);
    EdgeField a(3, 3);
    const JacobianPair<EdgeField> da{oracle::uniform_edges(3, 3, 1), oracle::uniform_edges(3, 3, 2)};
    const JacobianPair<EdgeField> de{oracle::uniform_edges(3, 3, 3), oracle::uniform_edges(3, 3, 4)};
    const auto d = diff_etilde_step(a, da, oracle::uniform_edges(3, 3, 5), de, k);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_DOUBLE_EQ(d.d_beta[i], de.d_beta[i]);
        EXPECT_DOUBLE_EQ(d.d_lambda[i], de.d_lambda[i]);
    }
    const auto d1 = diff_etilde_step(oracle::uniform_edges(3, 3, 6), da, EdgeField(3, 3, 1.0),
                                     zero_jacobian<EdgeField>(3, 3), k);
    for (double v : d1.d_beta.values()) EXPECT_EQ(v, 0.0);
}

TEST(JacobianSteps, EtildeMatchesFiniteDifference) {
    const CounterRng rng(21, 0);
    for (std::uint64_t t = 0; t < 50; ++t) {
        const double beta = 0.5 + 2 * rng.uniform(10 * t), lambda = 0.05 + rng.uniform(10 * t + 1);
        const double a = rng.uniform(10 * t + 2) - 0.5, e = rng.uniform(10 * t + 3);
        const double da = rng.uniform(10 * t + 4) - 0.5, de = rng.uniform(10 * t + 5) - 0.5;
        const SlpamConstants k = constants(beta, lambda);
        EdgeField fa(2, 2, a), fe(2, 2, e), fda(2, 2, da), fde(2, 2, de);
        const auto got = diff_etilde_step(fa, {fda, fda}, fe, {fde, fde}, k);
        // Along beta: a and e move with their tangents; d_bar is beta-free.
        const double h = 1e-6;
        const double fd = (etilde_of(beta + h, lambda, a + h * da, e + h * de) -
                           etilde_of(beta - h, lambda, a - h * da, e - h * de)) /
                          (2 * h);
        EXPECT_NEAR(got.d_beta[0], fd, 1e-5 * (std::abs(fd) + 1e-8));
    }
}

TEST(JacobianSteps, DeadZoneGivesZero) {
    const SlpamConstants k = constants(1.0, 10.0);
    const EdgeField a(3, 3, 0.01);
    const EdgeField et(3, 3, 0.5);
    const JacobianPair<EdgeField> nz{oracle::uniform_edges(3, 3, 1), oracle::uniform_edges(3, 3, 2)};
    const auto d = diff_e_step(et, a, nz, nz, k);
    for (double v : d.d_beta.values()) EXPECT_EQ(v, 0.0);
    for (double v : d.d_lambda.values()) EXPECT_EQ(v, 0.0);
}

TEST(JacobianSteps, ThresholdTermOnly) {
    const SlpamConstants k = constants(2.0, 0.01);
    const EdgeField a(2, 2, 0.3);
    const EdgeField et(2, 2, -0.9);
    const auto d = diff_e_step(et, a, zero_jacobian<EdgeField>(2, 2), zero_jacobian<EdgeField>(2, 2), k);
    const double den = 2 * 0.3 * 0.3 + k.d_bar;
    EXPECT_DOUBLE_EQ(d.d_lambda[0], -(1.0 / k.beta) * (-1.0) / den);
    EXPECT_DOUBLE_EQ(d.d_beta[0], -(-k.lambda / (k.beta * k.beta)) * (-1.0) / den);
}

TEST(JacobianSteps, SoftThresholdCompositeMatchesFiniteDifference) {
    const CounterRng rng(22, 0);
    int checked = 0;
    for (std::uint64_t t = 0; t < 200 && checked < 50; ++t) {
        const double beta = 0.5 + 2 * rng.uniform(10 * t), lambda = 0.001 + 0.05 * rng.uniform(10 * t + 1);
        const double a = rng.uniform(10 * t + 2) - 0.5, et = 2 * rng.uniform(10 * t + 3) - 1;
        const double da = rng.uniform(10 * t + 4) - 0.5, det = rng.uniform(10 * t + 5) - 0.5;
        auto composite = [&](double b, double l, double s) {
            const SlpamConstants k = constants(b, l);
            return soft_threshold(et + s * det, k.threshold(a + s * da));
        };
        auto active = [&](double b, double l, double s) {
            const SlpamConstants k = constants(b, l);
            return std::abs(et + s * det) > k.threshold(a + s * da);
        };
        const double h = 1e-7;
        if (!active(beta, lambda, 0) || !active(beta + h, lambda, h) || !active(beta - h, lambda, -h) ||
            !active(beta, lambda + h, h) || !active(beta, lambda - h, -h)) {
            continue;
        }
        ++checked;
        EdgeField fa(2, 2, a), fet(2, 2, et), fda(2, 2, da), fdet(2, 2, det);
        const auto got = diff_e_step(fet, fa, {fda, fda}, {fdet, fdet}, constants(beta, lambda));
        const double fd_b = (composite(beta + h, lambda, h) - composite(beta - h, lambda, -h)) / (2 * h);
        const double fd_l = (composite(beta, lambda + h, h) - composite(beta, lambda - h, -h)) / (2 * h);
        EXPECT_NEAR(got.d_beta[0], fd_b, 1e-4 * (std::abs(fd_b) + 1e-6));
        EXPECT_NEAR(got.d_lambda[0], fd_l, 1e-4 * (std::abs(fd_l) + 1e-6));
    }
    EXPECT_GE(checked, 20);
}

TEST(DiffSolve, PrimalPathIdentical) {
    const DifferenceOperator op(20, 20);
    const Image z = diamond_noisy(20, 0.05, 4);
    for (const HyperParams th : {HyperParams(1.0, 0.01), HyperParams(20.0, 0.3)}) {
        const SolveResult plain = slpam_solve(z, th, SolverConfig{}, op);
        const DiffSolveResult diff = diff_slpam_solve(z, th, SolverConfig{}, op);
        EXPECT_EQ(plain.iterations, diff.primal.iterations);
        EXPECT_LE(oracle::rel_error(diff.primal.u.values(), plain.u.values()), 1e-14);
        EXPECT_EQ(plain.u, diff.primal.u);
        EXPECT_EQ(plain.e, diff.primal.e);
        EXPECT_EQ(plain.objective_trace, diff.primal.objective_trace);
    }
}

TEST(DiffSolve, ConstantInputHasZeroJacobians) {
    const DifferenceOperator op(10, 10);
    const DiffSolveResult r = diff_slpam_solve(Image(10, 10, 0.5), HyperParams(2.0, 0.5), SolverConfig{}, op);
    for (double v : r.du.d_beta.values()) EXPECT_EQ(v, 0.0);
    for (double v : r.du.d_lambda.values()) EXPECT_EQ(v, 0.0);
    for (double v : r.de.d_beta.values()) EXPECT_EQ(v, 0.0);
    for (double v : r.de.d_lambda.values()) EXPECT_EQ(v, 0.0);
}

TEST(DiffSolve, LargeLambdaSmoothRegime) {
    const DifferenceOperator op(16, 16);
    const Image z = diamond_noisy(16, 0.05, 5);
    SolverConfig cfg;
    cfg.fixed_iter = 50;
    const HyperParams th(1.0, 1e3);
    const DiffSolveResult r = diff_slpam_solve(z, th, cfg, op);
    for (double v : r.de.d_lambda.values()) EXPECT_EQ(v, 0.0);
    for (int comp = 0; comp < 2; ++comp) {
        const double h = 1e-4 * (comp == 0 ? th.beta : th.lambda);
        const Image fd = oracle::fd_solution(z, th, cfg, op, comp, h);
        const Image& got = comp == 0 ? r.du.d_beta : r.du.d_lambda;
        if (comp == 1) {
            for (double v : got.values()) EXPECT_EQ(v, 0.0);
            for (double v : fd.values()) EXPECT_EQ(v, 0.0);
        } else {
            EXPECT_LE(oracle::rel_error(got.values(), fd.values()), 1e-4);
        }
    }
}

TEST(DiffSolve, MatchesFiniteDifferencesOnDiamond) {
    const DifferenceOperator op(32, 32);
    const Image z = diamond_noisy(32, 0.05, 6);
    SolverConfig cfg;
    cfg.fixed_iter = 100;
    const HyperParams th(5.0, 0.05);
    const DiffSolveResult r = diff_slpam_solve(z, th, cfg, op);
    for (int comp = 0; comp < 2; ++comp) {
        const double h = 1e-4 * (comp == 0 ? th.beta : th.lambda);
        const Image fd = oracle::fd_solution(z, th, cfg, op, comp, h);
        EXPECT_LE(oracle::rel_error((comp == 0 ? r.du.d_beta : r.du.d_lambda).values(), fd.values()), 1e-2);
    }
}

TEST(DiffSolve, FiniteDifferenceConsistencyAcrossInstances) {
    const DifferenceOperator op(32, 32);
    SolverConfig cfg;
    cfg.fixed_iter = 100;
    const CounterRng rng(31, 0);
    int stable = 0;
    int passed = 0;
    for (std::uint64_t t = 0; t < 20; ++t) {
        const Image z = diamond_noisy(32, 0.05, 100 + t);
        const HyperParams th(std::pow(10.0, -0.5 + 1.5 * rng.uniform(2 * t)),
                             std::pow(10.0, -2.5 + 1.5 * rng.uniform(2 * t + 1)));
        bool all_stable = true;
        for (int comp = 0; comp < 2; ++comp) {
            const double h = 1e-4 * (comp == 0 ? th.beta : th.lambda);
            all_stable = all_stable && oracle::stable_active_set(z, th, cfg, op, comp, h);
        }
        if (!all_stable) continue;
        ++stable;
        const DiffSolveResult r = diff_slpam_solve(z, th, cfg, op);
        bool ok = true;
        for (int comp = 0; comp < 2; ++comp) {
            const double h = 1e-4 * (comp == 0 ? th.beta : th.lambda);
            const Image fd = oracle::fd_solution(z, th, cfg, op, comp, h);
            ok = ok && oracle::fd_matches((comp == 0 ? r.du.d_beta : r.du.d_lambda).values(), fd.values(), 1e-3,
                                          std::sqrt(squared_norm(r.primal.u.values())), h);
        }
        passed += ok ? 1 : 0;
    }
    ASSERT_GT(stable, 0);
    EXPECT_GE(passed, static_cast<int>(std::ceil(0.95 * stable))) << passed << " of " << stable;
}

TEST(DiffSolve, JointScalingKeepsThresholds) {
    const DifferenceOperator op(12, 12);
    const SolverConfig cfg;
    const SlpamConstants k1 = SlpamConstants::make(HyperParams(1.5, 0.2), cfg, op);
    const SlpamConstants k2 = SlpamConstants::make(HyperParams(3.0, 0.4), cfg, op);
    EXPECT_DOUBLE_EQ(k1.tau, k2.tau);
    EXPECT_EQ(k1.d_bar, k2.d_bar);
    const EdgeField a = oracle::uniform_edges(12, 12, 3);
    for (double v : a.values()) EXPECT_DOUBLE_EQ(k1.threshold(v), k2.threshold(v));
}
