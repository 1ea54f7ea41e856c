#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "reflekt/stepper.hpp"

using namespace reflekt;

namespace {

struct DriftRun {
    GridSpec grid = GridSpec::line(0.0, 4.0, 32);
    ConvexDomain ball = ConvexDomain::ball({0.0, 0.0}, 1.0);
    Simulation sim;
};

DriftRun drift_run(double n, std::size_t steps = 128) {
    DriftRun r;
    NoiseSpec s;
    s.steps = steps;
    s.master_seed = 5;
    const auto noise = sample_path(s, 0);
    StepperConfig cfg;
    cfg.dt = noise.dt();
    cfg.penalty_n = n;
    r.sim = simulate(Field(32, 2), builtin_sets(2, 1, 1).at("drift_out"), noise, cfg, r.ball, r.grid);
    return r;
}

// Nodewise projection of a smooth random field: a few low-frequency sinusoids
// in (t, x) per component with random amplitudes.
std::vector<Field> random_test_trajectory(const DriftRun& r, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    const std::size_t states = r.sim.trajectory.steps + 1;
    std::vector<double> amp(2 * 3 * 3);
    for (auto& a : amp) a = 0.8 * g(rng);
    std::vector<Field> phi;
    for (std::size_t k = 0; k < states; ++k) {
        const double t = static_cast<double>(k) / (states - 1);
        Field f(r.grid.node_count(), 2);
        for (std::size_t node = 0; node < f.nodes(); ++node) {
            const double x = r.grid.coordinates(node)[0] / 4.0;
            for (std::size_t i = 0; i < 2; ++i) {
                double v = 0.0;
                for (int a = 0; a < 3; ++a)
                    for (int b = 0; b < 3; ++b) v += amp[(i * 3 + a) * 3 + b] * std::cos(M_PI * a * t) * std::sin(M_PI * (b + 1) * x);
                f(node, i) = v;
            }
            r.ball.project(f.at(node), f.at(node));
        }
        phi.push_back(std::move(f));
    }
    return phi;
}

}  // namespace

TEST(Measure, EmptyAndSingleCell) {
    ReflectionMeasure m(2, 10, 4);
    EXPECT_EQ(total_variation(m), 0.0);
    const double dt = 0.1, vol = 0.25;
    const std::vector<double> v{3.0, 4.0};
    // n (u - pi(u)) = v / (dt vol)  ->  cell value -v
    std::vector<double> cell{-dt * vol * v[0] / (dt * vol), -dt * vol * v[1] / (dt * vol)};
    m.add(3, 1, cell);
    EXPECT_DOUBLE_EQ(total_variation(m), 5.0);
    m.add(4, 2, std::vector<double>{0.0, 0.0});
    EXPECT_EQ(m.active_cells(), 1u);
    EXPECT_THROW(m.add(2, 0, cell), ValidationError);
    EXPECT_THROW(m.add(4, 9, cell), ShapeError);
}

TEST(Measure, PairBasics) {
    const auto r = drift_run(16.0);
    const auto& u = r.sim.trajectory.states();
    std::vector<Field> zero(u.size(), Field(32, 2));
    EXPECT_EQ(pair(r.sim.measure, zero), 0.0);
    // pairing with the generating state equals the recorded increments
    double nu_u = 0.0;
    for (const auto& inc : r.sim.trajectory.increments) nu_u += inc.nu_pair;
    EXPECT_NEAR(pair(r.sim.measure, u), nu_u, 1e-12 * (1.0 + std::abs(nu_u)));
    // linearity
    std::mt19937_64 rng(1);
    const auto p1 = random_test_trajectory(r, rng), p2 = random_test_trajectory(r, rng);
    std::vector<Field> comb;
    for (std::size_t k = 0; k < u.size(); ++k) comb.push_back(2.5 * p1[k] + (-0.7) * p2[k]);
    const double lhs = pair(r.sim.measure, comb);
    const double rhs = 2.5 * pair(r.sim.measure, p1) - 0.7 * pair(r.sim.measure, p2);
    EXPECT_NEAR(lhs, rhs, 1e-12 * (1.0 + std::abs(lhs)));
    EXPECT_THROW(pair(r.sim.measure, std::vector<Field>(3, Field(32, 2))), ShapeError);
}

TEST(Measure, ZeroSetPairsToZero) {
    const auto grid = GridSpec::line(0.0, 1.0, 8);
    const auto ball = ConvexDomain::ball({0.0, 0.0}, 1.0);
    NoiseSpec s;
    s.steps = 16;
    StepperConfig cfg;
    cfg.dt = s.dt();
    cfg.penalty_n = 8.0;
    const auto sim = simulate(Field(8, 2), make_zero_set(2, 1, 1), sample_path(s, 0), cfg, ball, grid);
    EXPECT_EQ(pair(sim.measure, sim.trajectory.states()), 0.0);
    EXPECT_EQ(support_profile(sim.measure, sim.trajectory.states(), ball, 0.05), 1.0);
}

TEST(Measure, DriftOutVariationPositiveAndBounded) {
    std::vector<double> tv;
    for (double n : {4.0, 16.0, 64.0, 256.0}) tv.push_back(total_variation(drift_run(n).sim.measure));
    for (double v : tv) EXPECT_GT(v, 0.0);
    EXPECT_LE(*std::max_element(tv.begin(), tv.end()) / *std::min_element(tv.begin(), tv.end()), 3.0);
}

TEST(Measure, SignIdentityAndVariationAchievability) {
    const auto r = drift_run(64.0);
    const auto& m = r.sim.measure;
    const auto& u = r.sim.trajectory.states();
    std::vector<double> p(2);
    // unit vectors against nu recover the total variation
    std::vector<Field> unit(u.size(), Field(32, 2));
    for (std::size_t i = 0; i < m.active_cells(); ++i) {
        const auto& c = m.cell(i);
        const auto v = m.value(i);
        const auto y = u[c.step + 1].at(c.node);
        r.ball.project(y, p);
        const double d0 = y[0] - p[0], d1 = y[1] - p[1];
        // antiparallel to u - pi(u)
        EXPECT_LE(v[0] * d0 + v[1] * d1, 0.0);
        EXPECT_NEAR(std::abs(v[0] * d1 - v[1] * d0), 0.0, 1e-12 * (std::hypot(v[0], v[1]) * std::hypot(d0, d1)) + 1e-300);
        const double nv = vec::norm(v);
        unit[c.step + 1](c.node, 0) = v[0] / nv;
        unit[c.step + 1](c.node, 1) = v[1] / nv;
    }
    EXPECT_NEAR(pair(m, unit), m.total_variation(), 1e-12 * m.total_variation());
}

TEST(Minimality, RandomTestTrajectoriesNonPositive) {
    const auto r = drift_run(64.0);
    const auto& u = r.sim.trajectory.states();
    std::mt19937_64 rng(7);
    bool strictly_negative = false;
    for (int s = 0; s < 1000; ++s) {
        const auto phi = random_test_trajectory(r, rng);
        const auto res = minimality_check(r.sim.measure, u, phi, r.ball);
        EXPECT_LE(res.value, 1e-12 * res.normalization);
        if (res.value < 0.0) strictly_negative = true;
    }
    EXPECT_TRUE(strictly_negative);
}

TEST(Minimality, ProjectedStateGivesZeroAndRejectsOutsidePhi) {
    const auto r = drift_run(64.0);
    const auto& u = r.sim.trajectory.states();
    std::vector<Field> proj = u;
    for (auto& f : proj)
        for (std::size_t node = 0; node < f.nodes(); ++node) r.ball.project(f.at(node), f.at(node));
    // phi = pi(u): pair(nu, u - pi(u)) <= 0 cellwise and strictly negative in total
    EXPECT_LT(minimality_check(r.sim.measure, u, proj, r.ball).value, 0.0);
    EXPECT_THROW(minimality_check(r.sim.measure, u, u, r.ball), ValidationError);
    // a run that stays in D: phi = u gives exactly 0
    NoiseSpec ns;
    ns.steps = 8;
    StepperConfig cfg;
    cfg.dt = ns.dt();
    cfg.penalty_n = 64.0;
    const Field xi = sample_initial(r.grid, r.ball, make_constant_initial({0.5, 0.5}));
    const auto quiet = simulate(xi, make_zero_set(2, 1, 1), sample_path(ns, 0), cfg, r.ball, r.grid);
    const auto& uq = quiet.trajectory.states();
    EXPECT_EQ(minimality_check(quiet.measure, uq, uq, r.ball).value, 0.0);
}

TEST(Support, ConventionsAndGrowthInN) {
    const auto r16 = drift_run(16.0), r256 = drift_run(256.0);
    EXPECT_EQ(support_profile(r16.sim.measure, r16.sim.trajectory.states(), r16.ball, 1e9), 1.0);
    const double s16 = support_profile(r16.sim.measure, r16.sim.trajectory.states(), r16.ball, 0.05);
    const double s256 = support_profile(r256.sim.measure, r256.sim.trajectory.states(), r256.ball, 0.05);
    EXPECT_GE(s16, 0.0);
    EXPECT_LE(s256, 1.0);
    EXPECT_GE(s256, s16);
    EXPECT_EQ(support_profile(ReflectionMeasure(2, 1, 32), std::vector<Field>(2, Field(32, 2)), r16.ball, 0.05), 1.0);
}
