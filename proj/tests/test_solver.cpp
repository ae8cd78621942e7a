#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace dms;

namespace {

Image noisy_diamond(std::size_t n, double sigma, std::uint64_t seed, double ramp = 0.1) {
    PhantomParams params;
    params.ramp = ramp;
    return add_noise(make_phantom(Geometry::Diamond, n, n, params).clean, {sigma, seed});
}

} // namespace

TEST(Objective, QuadraticTermOnly) {
    const DifferenceOperator op(5, 6);
    const Image z = oracle::uniform_image(5, 6, 1);
    const HyperParams th(2.5, 0.7);
    const double expected = 2.5 * squared_norm(op.apply(z).values());
    EXPECT_NEAR(objective(z, z, EdgeField(5, 6), th, op), expected, 1e-12 * expected);
}

TEST(Objective, ConstantImageNoContours) {
    const DifferenceOperator op(4, 4);
    const Image z(4, 4, 0.3);
    EXPECT_EQ(objective(z, z, EdgeField(4, 4), HyperParams(3.0, 2.0), op), 0.0);
}

TEST(Objective, MatchesTermByTermSum) {
    const DifferenceOperator op(4, 4);
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Image z = oracle::uniform_image(4, 4, s);
        const Image u = oracle::uniform_image(4, 4, s + 50);
        const EdgeField e = oracle::uniform_edges(4, 4, s);
        const double ref = oracle::objective(z, u, e, 1.7, 0.4);
        EXPECT_NEAR(objective(z, u, e, HyperParams(1.7, 0.4), op), ref, 1e-12 * (1.0 + std::abs(ref)));
    }
}

TEST(Objective, ShapeMismatch) {
    const DifferenceOperator op(4, 4);
    EXPECT_THROW(objective(Image(4, 4), Image(4, 5), EdgeField(4, 4), HyperParams(), op), ShapeError);
}

TEST(ProxData, FixedPointAndLimit) {
    const Image z = oracle::uniform_image(3, 3, 4);
    const Image same = prox_data(z, z, 2.0);
    for (std::size_t j = 0; j < z.size(); ++j) EXPECT_NEAR(same[j], z[j], 1e-15);
    const Image ut = oracle::uniform_image(3, 3, 5);
    const Image far = prox_data(ut, z, 1e8);
    for (std::size_t j = 0; j < ut.size(); ++j) EXPECT_NEAR(far[j], ut[j], 3e-8);
}

TEST(ProxData, ScalarCase) {
    const Image out = prox_data(Image(1, 1, 2.0), Image(1, 1, 0.0), 3.0);
    EXPECT_DOUBLE_EQ(out[0], 1.5);
    const double ref = oracle::golden_min(
        [](oracle::Real x) { return 0.5L * x * x / 3.0L + 0.5L * (x - 2.0L) * (x - 2.0L); }, -10.0L, 10.0L);
    EXPECT_NEAR(out[0], ref, 1e-8);
}

TEST(ProxData, MatchesNumericalMinimization) {
    const CounterRng rng(11, 0);
    for (std::uint64_t k = 0; k < 200; ++k) {
        const double ut = 4.0 * rng.uniform(3 * k) - 2.0;
        const double zz = 4.0 * rng.uniform(3 * k + 1) - 2.0;
        const double c = std::exp(6.0 * rng.uniform(3 * k + 2) - 3.0);
        const double got = prox_data(Image(1, 1, ut), Image(1, 1, zz), c)[0];
        const double ref = oracle::golden_min(
            [&](oracle::Real x) { return 0.5L * (x - zz) * (x - zz) / c + 0.5L * (x - ut) * (x - ut); }, -3.0L,
            3.0L);
        EXPECT_NEAR(got, ref, 1e-8);
    }
}

TEST(SoftThreshold, Definition) {
    EXPECT_DOUBLE_EQ(soft_threshold(0.7, 0.2), 0.5);
    EXPECT_EQ(soft_threshold(-0.1, 0.2), 0.0);
    EXPECT_DOUBLE_EQ(soft_threshold(-0.7, 0.2), -0.5);
}

TEST(SoftThreshold, MatchesNumericalProx) {
    const CounterRng rng(12, 0);
    for (std::uint64_t k = 0; k < 200; ++k) {
        const double x = 6.0 * rng.uniform(2 * k) - 3.0;
        const double phi = 2.0 * rng.uniform(2 * k + 1);
        const double ref = oracle::scan_then_golden(
            [&](oracle::Real t) { return 0.5L * (t - x) * (t - x) + phi * std::abs(t); }, -4.0L, 4.0L);
        EXPECT_NEAR(soft_threshold(x, phi), ref, 1e-8);
    }
}

TEST(GradUG, VanishingCases) {
    const DifferenceOperator op(5, 5);
    const Image u = oracle::uniform_image(5, 5, 2);
    const Image no_coupling = grad_u_g(u, EdgeField(5, 5, 1.0), 3.0, op);
    for (double v : no_coupling.values()) EXPECT_EQ(v, 0.0);
    const Image flat = grad_u_g(Image(5, 5, 2.0), oracle::uniform_edges(5, 5, 1), 3.0, op);
    for (double v : flat.values()) EXPECT_EQ(v, 0.0);
}

TEST(GradUG, MatchesFiniteDifference) {
    const DifferenceOperator op(5, 5);
    const Image u = oracle::uniform_image(5, 5, 8);
    const EdgeField e = oracle::uniform_edges(5, 5, 9);
    const double beta = 1.3;
    auto g = [&](const Image& x) { return oracle::objective(x, x, e, beta, 0.0); };
    const Image grad = grad_u_g(u, e, beta, op);
    Image fd(5, 5);
    for (std::size_t j = 0; j < u.size(); ++j) {
        Image up = u;
        Image um = u;
        up[j] += 1e-6;
        um[j] -= 1e-6;
        fd[j] = (g(up) - g(um)) / 2e-6;
    }
    EXPECT_LE(oracle::rel_error(grad.values(), fd.values()), 1e-5);
}

TEST(Slpam, ConstantInputIsStationary) {
    const DifferenceOperator op(8, 8);
    const Image z(8, 8, 0.4);
    const SolveResult r = slpam_solve(z, HyperParams(1.0, 0.1), SolverConfig{}, op);
    EXPECT_LE(r.objective_trace.size(), 2u);
    for (std::size_t j = 0; j < z.size(); ++j) EXPECT_NEAR(r.u[j], z[j], 1e-15);
    for (double v : r.e.values()) EXPECT_EQ(v, 0.0);
}

TEST(Slpam, CleanInputReproduced) {
    const Phantom ph = make_phantom(Geometry::Diamond, 64, 64);
    const DifferenceOperator op(64, 64);
    const SolveResult r = slpam_solve(ph.clean, HyperParams(1.0, 1e-3), SolverConfig{}, op);
    EXPECT_GE(psnr(r.u, ph.clean), 60.0);
}

TEST(Slpam, DenoisesDiamondAtDeskScale) {
    const Phantom ph = make_phantom(Geometry::Diamond, 64, 64);
    const Image z = add_noise(ph.clean, {0.05, 1});
    const DifferenceOperator op(64, 64);
    const SolveResult r = slpam_solve(z, HyperParams(10.0, 0.1), SolverConfig{}, op);
    EXPECT_GE(psnr(r.u, ph.clean), 30.0);
}

TEST(Slpam, ObjectiveMonotoneAndStepsOptimal) {
    const DifferenceOperator op(24, 24);
    const CounterRng rng(5, 0);
    for (std::uint64_t k = 0; k < 6; ++k) {
        const Image z = noisy_diamond(24, 0.1, k);
        const HyperParams th(std::pow(10.0, -2.0 + 5.0 * rng.uniform(2 * k)),
                             std::pow(10.0, -4.0 + 5.0 * rng.uniform(2 * k + 1)));
        SolverConfig cfg;
        cfg.max_iter = 300;
        double worst_u = 0.0;
        double worst_e = 0.0;
        const SolveResult r = slpam_solve(z, th, cfg, op, [&](const SlpamStep& s) {
            double res = 0.0;
            for (std::size_t j = 0; j < s.z.size(); ++j) {
                const double t = (s.u_next[j] - s.u_tilde[j]) * s.k.c + (s.u_next[j] - s.z[j]);
                res += t * t;
            }
            worst_u = std::max(worst_u, std::sqrt(res));
            for (std::size_t i = 0; i < s.e_next.size(); ++i) {
                const double a = s.du_next[i];
                const double e = s.e_next[i];
                const double smooth = -2.0 * s.k.beta * a * a * (1.0 - e) + s.k.d * (e - s.e_prev[i]);
                const double scale = 1.0 + std::abs(smooth) + s.k.lambda;
                if (e != 0.0) {
                    worst_e = std::max(worst_e, std::abs(smooth + s.k.lambda * (e > 0 ? 1.0 : -1.0)) / scale);
                } else {
                    worst_e = std::max(worst_e, std::max(0.0, std::abs(smooth) - s.k.lambda) / scale);
                }
            }
        });
        double prev = r.initial_objective;
        for (double psi : r.objective_trace) {
            EXPECT_LE(psi, prev + 1e-10) << "beta " << th.beta << " lambda " << th.lambda;
            prev = psi;
        }
        EXPECT_LE(worst_u, 1e-9 * static_cast<double>(z.size()));
        EXPECT_LE(worst_e, 1e-9);
    }
}

TEST(Slpam, FixedIterationCount) {
    const DifferenceOperator op(16, 16);
    SolverConfig cfg;
    cfg.fixed_iter = 37;
    const SolveResult r = slpam_solve(noisy_diamond(16, 0.05, 3), HyperParams(1.0, 0.01), cfg, op);
    EXPECT_EQ(r.iterations, 37u);
    EXPECT_EQ(r.objective_trace.size(), 37u);
}

TEST(Slpam, FixedPointOnFlatPhantom) {
    const std::size_t n = 32;
    const DifferenceOperator op(n, n);
    const Image z = noisy_diamond(n, 0.05, 2, 0.0);
    const HyperParams th(10.0, 0.1);
    const SolveResult first = slpam_solve(z, th, SolverConfig{}, op);
    const SolveResult second = slpam_solve(first.u, th, SolverConfig{}, op);
    double worst = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) worst = std::max(worst, std::abs(second.u[j] - first.u[j]));
    EXPECT_LE(worst, 1e-2);
}

TEST(Slpam, NonFiniteInputDiverges) {
    const DifferenceOperator op(4, 4);
    Image z(4, 4, 0.1);
    z[5] = std::nan("");
    try {
        slpam_solve(z, HyperParams(), SolverConfig{}, op);
        FAIL() << "expected divergence";
    } catch (const DivergenceError& ex) {
        EXPECT_EQ(ex.iteration(), 1u);
    }
}

TEST(Slpam, ConfigValidation) {
    SolverConfig cfg;
    cfg.gamma = 1.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = SolverConfig{};
    cfg.xi = 0.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = SolverConfig{};
    cfg.fixed_iter = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}
