#include "mechanotaxis/fv_solver.hpp"
#include "mechanotaxis/stability.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

using namespace mechanotaxis;

namespace {

MacroConfig fig2a_config() {
    MacroConfig c;
    c.law = VelocityLaw::rational(2.0, 2.0);
    c.mobility = {1.0, 1.0};
    c.signal = SignalParams{0.01};
    return c;
}

MacroConfig frozen_config(const Field& S, const VelocityLaw& law, double alpha) {
    MacroConfig c;
    c.law = law;
    c.mobility = {alpha, 1.0};
    c.signal = FrozenSignal{S};
    return c;
}

Field random_positive(const Grid& g, std::uint64_t seed, double spread) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, spread);
    Field f(g);
    for (auto& v : f.values()) v = std::exp(n(rng));
    return f;
}

double ulp_distance(double a, double b) { return std::abs(a - b) / (std::numeric_limits<double>::epsilon() * std::abs(a)); }

}  // namespace

TEST(EdgePotential, UniformStateHasNoPotential) {
    const Grid g(1.0, 8);
    const auto phi = edge_potential(Field(g, 2.0), Field(g, 0.7), VelocityLaw::rational(2, 2), 1.0);
    for (double p : phi) EXPECT_EQ(p, 0.0);
}

TEST(EdgePotential, AlternatingFourCellHandValue) {
    const Grid g(1.0, 4);
    const Field rho(g, std::vector<double>{1, 2, 1, 2});
    const auto phi = edge_potential(rho, Field(g, 1.0), VelocityLaw::rational(2, 2), 0.0);
    const double mag = (1.0 / g.dx()) * (1.0 / 9.0) * std::log(2.0);
    // interface j sits between cells j-1 and j
    EXPECT_NEAR(phi[0], -mag, 1e-14);
    EXPECT_NEAR(phi[1], mag, 1e-14);
    EXPECT_NEAR(phi[2], -mag, 1e-14);
    EXPECT_NEAR(phi[3], mag, 1e-14);
}

TEST(EdgePotential, VanishesOnWellBalancedStates) {
    const Grid g(1.0, 40);
    const auto law = VelocityLaw::rational(2, 2);
    const Field S = Field::sample(g, [](double x) { return 1.0 + 0.6 * std::sin(2 * std::numbers::pi * x); });
    Field rho(g);
    for (std::size_t i = 0; i < g.size(); ++i) rho[i] = 0.8 / mobility_weight(law, 1.0, S[i]);
    for (double p : edge_potential(rho, S, law, 1.0)) EXPECT_LT(std::abs(p), 1e-12);
}

TEST(EdgePotential, RejectsNonPositiveDensity) {
    const Grid g(1.0, 4);
    EXPECT_THROW(edge_potential(Field(g, std::vector<double>{1, 0, 1, 1}), Field(g, 1.0), VelocityLaw::rational(2, 2), 1.0),
                 PositivityLoss);
}

TEST(Step, MassMovesDownTheGradientOfRhoW) {
    // the continuum flux D rho v^2 d/dx ln(rho w) drains cells where rho w is high
    const Grid g(1.0, 4);
    const Field rho(g, std::vector<double>{1, 2, 1, 2});
    auto c = frozen_config(Field(g, 1.0), VelocityLaw::rational(2, 2), 0.0);
    c.dt = 1e-3;
    const Field next = step(rho, Field(g, 1.0), c);
    EXPECT_GT(next[0], 1.0);
    EXPECT_LT(next[1], 2.0);
    EXPECT_GT(next[2], 1.0);
    EXPECT_LT(next[3], 2.0);
    EXPECT_NEAR(integrate(next), integrate(rho), 1e-15);
}

TEST(Step, UniformStateIsBitwiseFixed) {
    const Grid g(1.0, 32);
    auto c = frozen_config(Field(g, 1.3), VelocityLaw::sigmoid(0.02, 0.01), 0.0);
    c.dt = 1e-4;
    const Field rho(g, 0.9);
    EXPECT_EQ(step(rho, Field(g, 1.3), c), rho);
}

TEST(Step, WellBalancedStateIsFixedToRoundOff) {
    const Grid g(1.0, 50);
    const auto law = VelocityLaw::rational(2, 2);
    const Field S = Field::sample(g, [](double x) { return 1.0 + 0.8 * std::cos(2 * std::numbers::pi * x); });
    Field rho(g);
    for (std::size_t i = 0; i < g.size(); ++i) rho[i] = 0.5 / mobility_weight(law, 1.0, S[i]);
    auto c = frozen_config(S, law, 1.0);
    c.dt = 0.2 * g.dx() * g.dx();
    const Field next = step(rho, S, c);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_LE(ulp_distance(rho[i], next[i]), 4.0) << i;
}

TEST(Step, MassIsConservedOverManySteps) {
    auto c = fig2a_config();
    c.t_end = 1e5 * c.time_step();
    const Trajectory tr = run(c);
    EXPECT_EQ(tr.steps, 100000u);
    const double m0 = tr.diagnostics.front().mass, m1 = tr.diagnostics.back().mass;
    EXPECT_LE(std::abs(m1 - m0) / m0, 1e-12);
}

TEST(Step, PositivityHoldsUnderTheBoundForRandomData) {
    const Grid g(1.0, 64);
    const auto law = VelocityLaw::rational(2, 2);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const Field rho = random_positive(g, seed, 1.5);
        const Field S = random_positive(g, seed + 100, 0.5);
        const auto phi = edge_potential(rho, S, law, 1.0);
        double worst = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i)
            worst = std::max(worst, std::max(phi[i], 0.0) + std::max(-phi[(i + 1) % g.size()], 0.0));
        auto c = frozen_config(S, law, 1.0);
        c.sub_cycling = false;
        c.dt = 0.95 * g.dx() / worst;
        const Field next = step(rho, S, c);
        EXPECT_GT(next.min(), 0.0) << "seed " << seed;
        EXPECT_NEAR(integrate(next), integrate(rho), 1e-12 * integrate(rho));

        c.dt = 1.5 * g.dx() / worst;
        EXPECT_THROW(step(rho, S, c), PositivityLoss) << "seed " << seed;
    }
}

TEST(Step, SubCyclingKeepsLargeStepsPositive) {
    const Grid g(1.0, 64);
    const auto law = VelocityLaw::rational(2, 2);
    const Field rho = random_positive(g, 3, 2.0);
    const Field S = random_positive(g, 4, 0.5);
    auto c = frozen_config(S, law, 1.0);
    c.dt = 0.05;
    c.t_end = 0.5;
    const Trajectory tr = run(c, rho);
    EXPECT_GT(tr.substeps, 0u);
    EXPECT_GT(tr.final().rho.min(), 0.0);

    c.sub_cycling = false;
    try {
        run(c, rho);
        FAIL() << "expected PositivityLoss";
    } catch (const PositivityLoss& e) {
        EXPECT_LT(e.cell(), g.size());
    }
}

TEST(Run, FrozenUniformSignalRelaxesToUniformDensity) {
    const Grid g(1.0, 100);
    auto c = frozen_config(Field(g, 1.0), VelocityLaw::rational(2, 2), 1.0);
    c.t_end = 5.0;
    c.initial.amplitude = 0.1;
    const Trajectory tr = run(c);
    const double mean = mass(tr.final().rho) / g.length();
    EXPECT_NEAR(mean, 1.0, 1e-12);
    EXPECT_LE(max_abs_difference(tr.final().rho, Field(g, mean)), 1e-8);
}

TEST(Run, TranslationEquivarianceWithUniformSignal) {
    const Grid g(1.0, 60);
    auto c = frozen_config(Field(g, 1.0), VelocityLaw::sigmoid(0.02, 0.01), 0.5);
    c.t_end = 0.05;
    const Field rho0 = random_positive(g, 11, 0.3);
    const Field a = shift(run(c, rho0).final().rho, 7);
    const Field b = run(c, shift(rho0, 7)).final().rho;
    EXPECT_LE(max_abs_difference(a, b), 1e-12);
}

TEST(Run, SnapshotsArePositiveAndOrdered) {
    auto c = fig2a_config();
    c.t_end = 0.2;
    c.snapshot_every = 1000;
    c.diagnostic_every = 500;
    const Trajectory tr = run(c);
    ASSERT_GE(tr.snapshots.size(), 3u);
    for (std::size_t k = 0; k < tr.snapshots.size(); ++k) {
        EXPECT_GT(tr.snapshots[k].rho.min(), 0.0);
        if (k) {
            EXPECT_GT(tr.snapshots[k].t, tr.snapshots[k - 1].t);
        }
    }
    for (const auto& d : tr.diagnostics) EXPECT_TRUE(std::isnan(d.l2w_deviation));
    EXPECT_NEAR(tr.final().t, 0.2, 1e-12);
}

TEST(Run, FrozenFreeEnergyIsNonIncreasingEachStep) {
    const Grid g(1.0, 80);
    const auto law = VelocityLaw::rational(2, 2);
    const Field S = Field::sample(g, [](double x) { return 1.0 + 0.5 * std::cos(2 * std::numbers::pi * x); });
    auto c = frozen_config(S, law, 1.0);
    c.t_end = 3000 * c.time_step();
    c.diagnostic_every = 1;
    const Trajectory tr = run(c, random_positive(g, 5, 0.4));
    for (std::size_t k = 1; k < tr.diagnostics.size(); ++k) {
        const double e0 = tr.diagnostics[k - 1].free_energy, e1 = tr.diagnostics[k].free_energy;
        EXPECT_LE(e1, e0 + 1e-12 * std::abs(e0)) << "step " << k;
    }
}

TEST(Run, SteadyToleranceStopsEarly) {
    const Grid g(1.0, 50);
    auto c = frozen_config(Field(g, 1.0), VelocityLaw::rational(2, 2), 1.0);
    c.t_end = 100.0;
    c.steady_tol = 1e-6;
    const Trajectory tr = run(c);
    EXPECT_LT(tr.steady_residual, 1e-6);
    EXPECT_LT(tr.final().t, 100.0);
}

TEST(Run, ConvolutionKernelSignalConservesMass) {
    const Grid g(1.0, 50);
    std::vector<double> k(50);
    for (std::size_t i = 0; i < 50; ++i) {
        const double d = std::min<double>(i, 50 - i) * g.dx();
        k[i] = std::exp(-d / 0.1);
    }
    MacroConfig c = fig2a_config();
    c.signal = ConvolutionKernel::normalized(g, k);
    c.t_end = 0.1;
    const Trajectory tr = run(c);
    EXPECT_NEAR(tr.diagnostics.back().mass, tr.diagnostics.front().mass, 1e-12);
}

TEST(Run, ConfigValidation) {
    MacroConfig c = fig2a_config();
    c.cells = 64;
    c.signal = FrozenSignal{Field(Grid(1.0, 32), 1.0)};
    EXPECT_THROW(run(c), ConfigError);
    c = fig2a_config();
    c.mobility.alpha = -1.0;
    EXPECT_THROW(run(c), DomainError);
}

TEST(Run, DefaultGrid) {
    MacroConfig c = fig2a_config();
    EXPECT_EQ(c.grid().size(), 100u);
    EXPECT_DOUBLE_EQ(c.time_step(), 0.01 * 0.01 / 5.0);
    c.signal = SignalParams{0.000625};
    EXPECT_EQ(c.grid().size(), 400u);
}

TEST(Growth, ModeAmplitude) {
    const Grid g(1.0, 64);
    const Field rho = Field::sample(g, [](double x) { return 1.0 + 0.01 * std::cos(2 * std::numbers::pi * 3 * x + 0.4); });
    EXPECT_NEAR(mode_amplitude(rho, 3), 0.01, 1e-14);
    EXPECT_NEAR(mode_amplitude(rho, 2), 0.0, 1e-14);
}

TEST(Growth, FrozenSignalRateIsWeightedDiffusion) {
    const Grid g(1.0, 100);
    auto c = frozen_config(Field(g, 1.0), VelocityLaw::rational(2, 2), 1.0);
    c.t_end = 0.2;
    for (int n : {1, 3}) {
        const double k = 2 * std::numbers::pi * n;
        const double kd2 = discrete_laplacian_symbol(k, g.dx());
        const double expected = -(1.0 / 9.0) * kd2;
        const auto probe = growth_rate_probe(c, n);
        EXPECT_NEAR(probe.rate, expected, 0.05 * std::abs(expected)) << "n=" << n;
    }
}

TEST(Growth, CoupledRatesFollowTheDispersionRelation) {
    auto c = fig2a_config();
    const auto law = VelocityLaw::rational(2, 2);
    c.t_end = 2.0;
    const auto grow = growth_rate_probe(c, 1);
    const double s1 = sigma(2 * std::numbers::pi, law, 1.0, 1.0, 0.01);
    EXPECT_GT(grow.rate, 0.0);
    EXPECT_NEAR(grow.rate, s1, 0.1 * std::abs(s1));

    c.t_end = 0.3;
    const auto decay = growth_rate_probe(c, 2);
    const double s2 = sigma(4 * std::numbers::pi, law, 1.0, 1.0, 0.01);
    EXPECT_LT(decay.rate, 0.0);
    EXPECT_NEAR(decay.rate, s2, 0.1 * std::abs(s2));
}

TEST(Growth, ProbeErrors) {
    auto c = fig2a_config();
    EXPECT_THROW(growth_rate_probe(c, 1, 1e-3), DomainError);
    c.t_end = 5 * c.time_step();
    EXPECT_THROW(growth_rate_probe(c, 1), FitWindowTooShort);
}
