#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "reflekt/grid.hpp"

using namespace reflekt;

namespace {

Field random_field(std::size_t nodes, std::size_t k, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Field f(nodes, k);
    for (double& v : f.values()) v = g(rng);
    return f;
}

GradField random_grad(std::size_t nodes, std::size_t k, std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    GradField f(nodes, k, n);
    for (double& v : f.values()) v = g(rng);
    return f;
}

std::vector<GridSpec> sample_grids() {
    return {GridSpec::line(0.0, 1.0, 7), GridSpec::line(-2.0, 3.0, 40),
            GridSpec({Axis{0.0, 1.0, 5}, Axis{-1.0, 2.0, 8}}), GridSpec({Axis{0.0, 2.0, 9}, Axis{0.0, 1.0, 9}})};
}

double max_abs_diff(const NodalArray& a, const NodalArray& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
    return m;
}

}  // namespace

TEST(GridSpec, SpacingVolumeAndOrdering) {
    const GridSpec g({Axis{0.0, 1.0, 3}, Axis{0.0, 2.0, 4}});
    EXPECT_DOUBLE_EQ(g.spacing(0), 0.25);
    EXPECT_DOUBLE_EQ(g.spacing(1), 0.4);
    EXPECT_DOUBLE_EQ(g.cell_volume(), 0.1);
    EXPECT_EQ(g.node_count(), 12u);
    // axis 0 slowest
    const auto x = g.coordinates(5);
    EXPECT_DOUBLE_EQ(x[0], 0.5);
    EXPECT_DOUBLE_EQ(x[1], 0.8);
}

TEST(GridSpec, RejectsBadInput) {
    EXPECT_THROW(GridSpec::line(1.0, 0.0, 3), ValidationError);
    EXPECT_THROW(GridSpec::line(0.0, 1.0, 0), ValidationError);
    EXPECT_THROW(GridSpec(std::vector<Axis>{}), ValidationError);
    EXPECT_THROW(GridSpec({Axis{}, Axis{}, Axis{}}), ValidationError);
}

TEST(Laplacian, ZeroFieldAndHandStencil) {
    const auto g = GridSpec::line(0.0, 1.0, 3);
    const Field z(3, 2);
    EXPECT_EQ(laplacian_apply(g, z), z);
    Field u(3, 1);
    u(0, 0) = 1.0;
    u(1, 0) = 2.0;
    u(2, 0) = 1.0;
    EXPECT_DOUBLE_EQ(laplacian_apply(g, u)(1, 0), -32.0);
}

TEST(Laplacian, DiscreteEigenfunction) {
    const std::size_t m = 31;
    const auto g = GridSpec::line(0.0, 1.0, m);
    const double h = g.spacing(0);
    Field u(m, 1);
    for (std::size_t i = 0; i < m; ++i) u(i, 0) = std::sin(M_PI * h * (i + 1.0));
    const double lambda = -(2.0 / (h * h)) * (1.0 - std::cos(M_PI * h));
    const Field lu = laplacian_apply(g, u);
    for (std::size_t i = 0; i < m; ++i) EXPECT_NEAR(lu(i, 0), lambda * u(i, 0), 1e-12 * std::abs(lambda));
}

TEST(Laplacian, ShapeMismatch) {
    EXPECT_THROW(laplacian_apply(GridSpec::line(0.0, 1.0, 3), Field(4, 1)), ShapeError);
    EXPECT_THROW(inner(GridSpec::line(0.0, 1.0, 3), Field(3, 1), Field(3, 2)), ShapeError);
}

TEST(Gradient, LinearRamp) {
    const auto g = GridSpec::line(0.0, 1.0, 5);
    Field u(5, 1);
    for (std::size_t i = 0; i < 5; ++i) u(i, 0) = g.coordinates(i)[0];
    const GradField d = gradient(g, u);
    for (std::size_t i = 1; i < 4; ++i) EXPECT_NEAR(d(i, 0, 0), 1.0, 1e-14);
    // first node: ghost 0 at x=0 coincides with the ramp; last node sees ghost 0 instead of 1
    EXPECT_NEAR(d(0, 0, 0), 1.0, 1e-14);
    EXPECT_NEAR(d(4, 0, 0), (0.0 - u(3, 0)) / (2.0 * g.spacing(0)), 1e-14);
    EXPECT_EQ(gradient(g, Field(5, 1)), GradField(5, 1, 1));
}

TEST(Divergence, ZeroAndAdjointIdentity) {
    std::mt19937_64 rng(1);
    for (const auto& g : sample_grids()) {
        EXPECT_EQ(divergence(g, GradField(g.node_count(), 2, g.dims())), Field(g.node_count(), 2));
        for (int s = 0; s < 100; ++s) {
            const auto gf = random_grad(g.node_count(), 2, g.dims(), rng);
            const auto phi = random_field(g.node_count(), 2, rng);
            const double a = inner(g, divergence(g, gf), phi);
            const double b = -inner_grad(g, gf, gradient(g, phi));
            EXPECT_NEAR(a, b, 1e-12 * (std::abs(a) + std::abs(b) + 1.0));
        }
    }
}

TEST(Divergence, DivGradAgainstWideStencil) {
    const std::size_t m = 12;
    const auto g = GridSpec::line(0.0, 1.0, m);
    const double h = g.spacing(0);
    std::mt19937_64 rng(2);
    const Field u = random_field(m, 1, rng);
    // padded arrays: u and its central slope with zero outside the interior
    std::vector<double> up(m + 2, 0.0), gp(m + 2, 0.0);
    for (std::size_t i = 0; i < m; ++i) up[i + 1] = u(i, 0);
    for (std::size_t i = 1; i <= m; ++i) gp[i] = (up[i + 1] - up[i - 1]) / (2.0 * h);
    const Field dg = divergence(g, gradient(g, u));
    const Field lap = laplacian_apply(g, u);
    double gap = 0.0;
    for (std::size_t i = 1; i <= m; ++i) {
        EXPECT_NEAR(dg(i - 1, 0), (gp[i + 1] - gp[i - 1]) / (2.0 * h), 1e-10);
        gap = std::max(gap, std::abs(dg(i - 1, 0) - lap(i - 1, 0)));
    }
    RecordProperty("max_divgrad_minus_laplacian", std::to_string(gap));
    EXPECT_GT(gap, 0.0);
}

TEST(Inner, Examples) {
    const auto g = GridSpec::line(0.0, 1.0, 3);
    const Field one(3, 1, 1.0);
    EXPECT_DOUBLE_EQ(inner(g, one, one), 0.75);
    EXPECT_EQ(inner(g, one, Field(3, 1)), 0.0);
    std::mt19937_64 rng(3);
    for (const auto& gr : sample_grids()) {
        const auto a = random_field(gr.node_count(), 3, rng);
        const auto b = random_field(gr.node_count(), 3, rng);
        const double ab = inner(gr, a, b);
        EXPECT_LE(ab * ab, norm_sq(gr, a) * norm_sq(gr, b) * (1.0 + 1e-14));
    }
}

TEST(Operators, LinearityAndSymmetry) {
    std::mt19937_64 rng(4);
    for (const auto& g : sample_grids()) {
        const std::size_t n = g.node_count();
        const auto f = random_field(n, 2, rng);
        const auto h = random_field(n, 2, rng);
        const double a = 1.7, b = -0.3;
        const Field comb = a * f + b * h;
        EXPECT_LE(max_abs_diff(laplacian_apply(g, comb), a * laplacian_apply(g, f) + b * laplacian_apply(g, h)),
                  1e-12 * 1e4);
        const GradField gc = gradient(g, comb);
        const GradField gf = gradient(g, f), gh = gradient(g, h);
        for (std::size_t i = 0; i < gc.size(); ++i)
            EXPECT_NEAR(gc.values()[i], a * gf.values()[i] + b * gh.values()[i], 1e-10);
        const double lfh = inner(g, laplacian_apply(g, f), h);
        const double flh = inner(g, f, laplacian_apply(g, h));
        EXPECT_NEAR(lfh, flh, 1e-12 * (std::abs(lfh) + 1.0));
        const double lff = inner(g, laplacian_apply(g, f), f);
        EXPECT_LE(lff, 0.0);
        EXPECT_NEAR(dirichlet_energy(g, f), -lff, 1e-12 * (std::abs(lff) + 1.0));
        EXPECT_GE(dirichlet_energy(g, f), 0.0);
    }
}

TEST(Helmholtz, ThetaZeroAndErrors) {
    const auto g = GridSpec::line(0.0, 1.0, 4);
    std::mt19937_64 rng(5);
    const auto r = random_field(4, 2, rng);
    EXPECT_EQ(solve_helmholtz(g, 0.0, r), r);
    EXPECT_THROW(solve_helmholtz(g, -1.0, r), ValidationError);
}

TEST(Helmholtz, RoundTrip) {
    std::mt19937_64 rng(6);
    for (const auto& g : sample_grids()) {
        for (double theta : {1e-4, 0.01, 0.5}) {
            const auto w = random_field(g.node_count(), 2, rng);
            Field rhs = laplacian_apply(g, w);
            rhs *= -theta;
            rhs += w;
            const Field v = solve_helmholtz(g, theta, rhs);
            EXPECT_LE(max_abs_diff(v, w), 1e-9) << g.dims() << " " << theta;
            Field res = laplacian_apply(g, v);
            res *= -theta;
            res += v;
            res -= rhs;
            EXPECT_LE(std::sqrt(norm_sq(g, res)), 1e-9 * (1.0 + std::sqrt(norm_sq(g, rhs))));
        }
    }
}

TEST(Helmholtz, EigenfunctionRhs) {
    const std::size_t m = 25;
    const auto g = GridSpec::line(0.0, 1.0, m);
    const double h = g.spacing(0);
    const double theta = 0.02;
    for (int mode : {1, 3}) {
        Field u(m, 1);
        for (std::size_t i = 0; i < m; ++i) u(i, 0) = std::sin(mode * M_PI * h * (i + 1.0));
        const double lambda = (2.0 / (h * h)) * (1.0 - std::cos(mode * M_PI * h));
        const Field v = solve_helmholtz(g, theta, u);
        for (std::size_t i = 0; i < m; ++i) EXPECT_NEAR(v(i, 0), u(i, 0) / (1.0 + theta * lambda), 1e-12);
    }
}

TEST(Helmholtz, CgMatchesThomasOnOneDimensionalProblem) {
    const auto g = GridSpec::line(0.0, 1.0, 30);
    std::mt19937_64 rng(7);
    const auto r = random_field(30, 1, rng);
    const Field a = detail::thomas_helmholtz(g, 0.1, r);
    const Field b = detail::cg_helmholtz(g, 0.1, r, 1e-13);
    EXPECT_LE(max_abs_diff(a, b), 1e-10);
}
