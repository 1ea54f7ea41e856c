#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>

#include "reflekt/stepper.hpp"

using namespace reflekt;

namespace {

NoisePath noise_for(std::size_t m, std::size_t steps, double horizon, std::uint64_t index = 0,
                    std::uint64_t seed = 17) {
    NoiseSpec s;
    s.m = m;
    s.steps = steps;
    s.horizon = horizon;
    s.master_seed = seed;
    return sample_path(s, index);
}

StepperConfig config(double dt, double n, Scheme scheme = Scheme::penalized) {
    StepperConfig c;
    c.dt = dt;
    c.penalty_n = n;
    c.scheme = scheme;
    return c;
}

Field sine_initial(const GridSpec& grid, const ConvexDomain& d, double amp) {
    return sample_initial(grid, d, make_sine_initial(grid, {amp, 0.0}));
}

double max_node_distance(const Field& u, const ConvexDomain& d) {
    double m = 0.0;
    for (std::size_t node = 0; node < u.nodes(); ++node) m = std::max(m, std::sqrt(distance_sq(d, u.at(node))));
    return m;
}

}  // namespace

TEST(Step, ZeroCoefficientsStayZero) {
    const auto grid = GridSpec::line(0.0, 1.0, 16);
    const auto ball = ConvexDomain::ball({0.0, 0.0}, 1.0);
    const auto zero = make_zero_set(2, 1, 1);
    const auto noise = noise_for(1, 32, 1.0);
    for (double n : {0.0, 4.0, 1e4}) {
        const auto sim = simulate(Field(16, 2), zero, noise, config(noise.dt(), n), ball, grid);
        for (const auto& f : sim.trajectory.saved) EXPECT_EQ(f, Field(16, 2));
        EXPECT_TRUE(sim.measure.empty());
        for (const auto& r : sim.trajectory.records) {
            EXPECT_EQ(r.norm_sq, 0.0);
            EXPECT_EQ(r.phi, 0.0);
        }
    }
}

TEST(Step, InteriorConstantSchemesAgreeExactly) {
    const auto grid = GridSpec({Axis{0.0, 1.0, 6}, Axis{0.0, 1.0, 5}});
    const auto ball = ConvexDomain::ball({0.0, 0.0}, 1.0);
    const auto zero = make_zero_set(2, 2, 1);
    const Field xi = sample_initial(grid, ball, make_constant_initial({0.6, -0.3}));
    const auto noise = noise_for(1, 40, 1.0);
    const auto a = simulate(xi, zero, noise, config(noise.dt(), 50.0), ball, grid);
    const auto b = simulate(xi, zero, noise, config(noise.dt(), 0.0, Scheme::projected), ball, grid);
    ASSERT_EQ(a.trajectory.saved.size(), b.trajectory.saved.size());
    for (std::size_t i = 0; i < a.trajectory.saved.size(); ++i) EXPECT_EQ(a.trajectory.saved[i], b.trajectory.saved[i]);
    EXPECT_TRUE(a.measure.empty());
    EXPECT_TRUE(b.measure.empty());
    // decays toward zero with the Dirichlet boundary
    EXPECT_LT(a.trajectory.records.back().norm_sq, a.trajectory.records.front().norm_sq);
}

TEST(Step, HeatMatchesDenseEigendecomposition) {
    const std::size_t m = 64, steps = 100;
    const double dt = 1.0 / 256.0;
    const auto grid = GridSpec::line(0.0, 1.0, m);
    const auto ball = ConvexDomain::ball({0.0, 0.0}, 1.0);
    const Field xi = sine_initial(grid, ball, 0.5);
    const auto sim = simulate(xi, make_zero_set(2, 1, 1), noise_for(1, steps, steps * dt), config(dt, 64.0), ball, grid);

    const double h = grid.spacing(0);
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        a(i, i) += dt / (h * h);
        if (i > 0) a(i, i - 1) = -0.5 * dt / (h * h);
        if (i + 1 < m) a(i, i + 1) = -0.5 * dt / (h * h);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    Eigen::VectorXd u0(m);
    for (std::size_t i = 0; i < m; ++i) u0(i) = xi(i, 0);
    const Eigen::VectorXd damp = es.eigenvalues().array().pow(-static_cast<double>(steps));
    const Eigen::VectorXd ref = es.eigenvectors() * damp.asDiagonal() * es.eigenvectors().transpose() * u0;

    const Field& final = sim.trajectory.saved.back();
    double err = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        err = std::max(err, std::abs(final(i, 0) - ref(i)));
        EXPECT_EQ(final(i, 1), 0.0);
    }
    EXPECT_LE(err, 1e-8 * ref.cwiseAbs().maxCoeff());
    EXPECT_TRUE(sim.measure.empty());
    for (const auto& r : sim.trajectory.records) {
        EXPECT_EQ(r.phi, 0.0);
        EXPECT_EQ(r.penalty_l1, 0.0);
    }
}

TEST(Step, PenaltyZeroIsTheUnreflectedScheme) {
    const auto grid = GridSpec::line(0.0, 1.0, 20);
    const auto ball = ConvexDomain::ball({0.0, 0.0}, 1.0);
    BoundedSmoothParams strong;
    strong.drive = {60.0, 0.0};
    const auto coeffs = make_bounded_smooth_set(2, 1, 1, strong);
    const Field u = sine_initial(grid, ball, 0.9);
    const std::vector<double> dw{0.07};
    const double dt = 0.05;
    const Field stepped = step(u, 0.0, dw, config(dt, 0.0), ball, coeffs, grid);

    // independent assembly of r, then the implicit solve, no reflection
    const GradField z = gradient(grid, u);
    Field r = u;
    GradField g(u.nodes(), 2, 1);
    std::vector<double> f(2), hv(2);
    for (std::size_t node = 0; node < u.nodes(); ++node) {
        const auto x = grid.coordinates(node);
        coeffs.f(0.0, x, u.at(node), z.at(node), f);
        coeffs.g(0.0, x, u.at(node), z.at(node), g.at(node));
        coeffs.h(0.0, x, u.at(node), z.at(node), hv);
        for (std::size_t i = 0; i < 2; ++i) r(node, i) += dt * f[i];
        for (std::size_t i = 0; i < 2; ++i) r(node, i) += 0.0 + hv[i] * dw[0];
    }
    r.axpy(dt, divergence(grid, g));
    const Field w = solve_helmholtz(grid, 0.5 * dt, r);
    EXPECT_EQ(stepped, w);
    EXPECT_GT(max_node_distance(w, ball), 0.0);
}

TEST(Step, PenalizedApproachesProjectedWithResolventBound) {
    const auto grid = GridSpec::line(0.0, 1.0, 24);
    const auto ball = ConvexDomain::ball({0.0, 0.0}, 1.0);
    const auto coeffs = make_drift_out_set(2, 1, 1, {40.0, 0.0});
    const Field u = sine_initial(grid, ball, 0.95);
    const std::vector<double> dw{0.0};
    const double dt = 0.02;
    const Field w = step(u, 0.0, dw, config(dt, 0.0), ball, coeffs, grid);
    const Field proj = step(u, 0.0, dw, config(dt, 0.0, Scheme::projected), ball, coeffs, grid);
    for (double n : {1.0, 10.0, 1e3, 1e6}) {
        const Field pen = step(u, 0.0, dw, config(dt, n), ball, coeffs, grid);
        for (std::size_t node = 0; node < u.nodes(); ++node) {
            const double gap = std::sqrt(vec::dist_sq(pen.at(node), proj.at(node)));
            const double dist = std::sqrt(distance_sq(ball, w.at(node)));
            EXPECT_LE(gap, dist / (1.0 + n * dt) * (1.0 + 1e-12) + 1e-15);
            EXPECT_LE(distance_sq(ball, pen.at(node)), distance_sq(ball, w.at(node)) * (1.0 + 1e-12) + 1e-300);
        }
    }
    EXPECT_EQ(max_node_distance(proj, ball), 0.0);
}

TEST(Simulate, DriftOutDistanceShrinksAsPenaltyDoubles) {
    const auto grid = GridSpec::line(0.0, 4.0, 64);
    const auto ball = ConvexDomain::ball({0.0, 0.0}, 1.0);
    const auto coeffs = builtin_sets(2, 1, 1).at("drift_out");
    const auto noise = noise_for(1, 256, 1.0);
    const Field xi(64, 2);
    double prev = INFINITY;
    for (double n : {64.0, 128.0, 256.0}) {
        const auto sim = simulate(xi, coeffs, noise, config(noise.dt(), n), ball, grid);
        const double d = max_node_distance(sim.trajectory.saved.back(), ball);
        EXPECT_GT(d, 0.0);
        EXPECT_LT(d, prev);
        prev = d;
        EXPECT_FALSE(sim.measure.empty());
    }
}

TEST(Simulate, SaveStrideAndLengths) {
    const auto grid = GridSpec::line(0.0, 1.0, 8);
    const auto ball = ConvexDomain::ball({0.0, 0.0}, 1.0);
    const auto noise = noise_for(1, 20, 1.0);
    auto cfg = config(noise.dt(), 4.0);
    cfg.save_stride = 20;
    const auto sim = simulate(sine_initial(grid, ball, 0.5), make_zero_set(2, 1, 1), noise, cfg, ball, grid);
    EXPECT_EQ(sim.trajectory.saved.size(), 2u);
    EXPECT_EQ(sim.trajectory.saved_steps, (std::vector<std::size_t>{0, 20}));
    EXPECT_EQ(sim.trajectory.records.size(), 21u);
    EXPECT_EQ(sim.trajectory.increments.size(), 20u);
    EXPECT_THROW((void)sim.trajectory.states(), ValidationError);
    cfg.save_stride = 7;
    const auto sim7 = simulate(sine_initial(grid, ball, 0.5), make_zero_set(2, 1, 1), noise, cfg, ball, grid);
    EXPECT_EQ(sim7.trajectory.saved_steps, (std::vector<std::size_t>{0, 7, 14, 20}));
}

TEST(Simulate, ReproducibleBitForBit) {
    const auto grid = GridSpec({Axis{0.0, 2.0, 7}, Axis{0.0, 1.0, 6}});
    const auto box = ConvexDomain::box({-1.0, -1.0}, {1.0, 1.0});
    const auto coeffs = make_bounded_smooth_set(2, 2, 2);
    const auto noise = noise_for(2, 30, 0.5, 3);
    const Field xi = sample_initial(grid, box, make_sine_initial(grid, {0.4, -0.2}));
    const auto a = simulate(xi, coeffs, noise, config(noise.dt(), 16.0), box, grid);
    const auto b = simulate(xi, coeffs, noise, config(noise.dt(), 16.0), box, grid);
    EXPECT_EQ(a.trajectory.saved, b.trajectory.saved);
    EXPECT_EQ(a.measure.total_variation(), b.measure.total_variation());
}

TEST(Simulate, ValidatesInputs) {
    const auto grid = GridSpec::line(0.0, 1.0, 8);
    const auto ball = ConvexDomain::ball({0.0, 0.0}, 1.0);
    const auto noise = noise_for(1, 10, 1.0);
    const auto zero = make_zero_set(2, 1, 1);
    EXPECT_THROW(simulate(Field(8, 2, 2.0), zero, noise, config(noise.dt(), 1.0), ball, grid), ValidationError);
    EXPECT_THROW(simulate(Field(8, 2), zero, noise, config(0.5, 1.0), ball, grid), ValidationError);
    EXPECT_THROW(simulate(Field(7, 2), zero, noise, config(noise.dt(), 1.0), ball, grid), ShapeError);
    EXPECT_THROW(simulate(Field(8, 2), make_zero_set(2, 1, 2), noise, config(noise.dt(), 1.0), ball, grid),
                 ShapeError);
    EXPECT_THROW(config(-1.0, 0.0).validate(), ValidationError);
    EXPECT_THROW(config(0.1, -1.0).validate(), ValidationError);
}

TEST(Simulate, BlowUpReportsStep) {
    const auto grid = GridSpec::line(0.0, 1.0, 8);
    const auto ball = ConvexDomain::ball({0.0}, 1e30);
    LinearParams p;
    p.f_matrix = {1e4};
    const auto coeffs = make_linear_set(1, 1, 1, p);
    const auto noise = noise_for(1, 50, 1.0);
    try {
        (void)simulate(Field(8, 1, 1.0), coeffs, noise, config(noise.dt(), 0.0), ball, grid);
        FAIL() << "expected BlowUpError";
    } catch (const BlowUpError& e) {
        EXPECT_GT(e.step(), 1u);
        EXPECT_LT(e.step(), 50u);
    }
}

TEST(EnergyLedger, ZeroSetResidualIsExactlyZero) {
    const auto grid = GridSpec::line(0.0, 1.0, 16);
    const auto ball = ConvexDomain::ball({0.0, 0.0}, 1.0);
    const auto zero = make_zero_set(2, 1, 1);
    const auto noise = noise_for(1, 64, 1.0);
    const auto sim = simulate(Field(16, 2), zero, noise, config(noise.dt(), 64.0), ball, grid);
    for (double r : energy_ledger(sim.trajectory, zero, noise, sim.measure)) EXPECT_EQ(r, 0.0);
}

TEST(EnergyLedger, HeatResidualShrinksWithDt) {
    const auto grid = GridSpec::line(0.0, 1.0, 64);
    const auto ball = ConvexDomain::ball({0.0, 0.0}, 1.0);
    const auto zero = make_zero_set(2, 1, 1);
    const Field xi = sine_initial(grid, ball, 0.5);
    double prev = INFINITY;
    for (std::size_t steps : {64u, 128u, 256u, 512u}) {
        const auto noise = noise_for(1, steps, 1.0);
        const auto sim = simulate(xi, zero, noise, config(noise.dt(), 64.0), ball, grid);
        const double r = std::abs(energy_ledger(sim.trajectory, zero, noise, sim.measure).back());
        EXPECT_GT(r, 0.0);
        EXPECT_GE(prev / r, 1.5) << steps;
        prev = r;
    }
}

TEST(EnergyLedger, StochasticMeanResidualShrinksUnderBridgeRefinement) {
    const auto grid = GridSpec::line(0.0, 1.0, 32);
    const auto ball = ConvexDomain::ball({0.0, 0.0}, 1.0);
    const auto coeffs = make_bounded_smooth_set(2, 1, 1);
    const Field xi = sine_initial(grid, ball, 0.5);
    std::vector<double> mean(3, 0.0);
    const std::size_t paths = 100;
    for (std::size_t p = 0; p < paths; ++p) {
        NoisePath noise = noise_for(1, 64, 1.0, p);
        for (std::size_t level = 0; level < 3; ++level) {
            if (level > 0) noise = refine(noise);
            const auto sim = simulate(xi, coeffs, noise, config(noise.dt(), 16.0), ball, grid);
            mean[level] += std::abs(energy_ledger(sim.trajectory, coeffs, noise, sim.measure).back()) / paths;
        }
    }
    EXPECT_GT(mean[0], mean[1]);
    EXPECT_GT(mean[1], mean[2]);
}

TEST(EnergyLedger, RejectsMismatchedInputs) {
    const auto grid = GridSpec::line(0.0, 1.0, 8);
    const auto ball = ConvexDomain::ball({0.0, 0.0}, 1.0);
    const auto zero = make_zero_set(2, 1, 1);
    const auto noise = noise_for(1, 10, 1.0);
    const auto sim = simulate(Field(8, 2), zero, noise, config(noise.dt(), 1.0), ball, grid);
    EXPECT_THROW(energy_ledger(sim.trajectory, zero, noise_for(1, 12, 1.0), sim.measure), ShapeError);
    EXPECT_THROW(energy_ledger(sim.trajectory, zero, noise, ReflectionMeasure(2, 9, 8)), ShapeError);
}
