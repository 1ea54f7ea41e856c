#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reflekt/coefficients.hpp"
#include "reflekt/convex_domain.hpp"
#include "reflekt/error.hpp"
#include "reflekt/grid.hpp"
#include "reflekt/noise.hpp"
#include "reflekt/reflection_measure.hpp"

namespace reflekt {

enum class Scheme { penalized, projected };

inline std::string_view to_string(Scheme s) { return s == Scheme::penalized ? "penalized" : "projected"; }

inline Scheme parse_scheme(std::string_view s) {
    if (s == "penalized") return Scheme::penalized;
    if (s == "projected") return Scheme::projected;
    throw ValidationError("unknown scheme '" + std::string(s) + "' (expected penalized or projected)");
}

struct StepperConfig {
    double dt = 1.0 / 256.0;
    double penalty_n = 0.0;  // n = 0 switches the penalty off
    Scheme scheme = Scheme::penalized;
    double solver_tol = 1e-10;
    std::size_t save_stride = 1;

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("stepper: dt must be positive");
        if (!(penalty_n >= 0.0) || !std::isfinite(penalty_n))
            throw ValidationError("stepper: penalty_n must be finite and nonnegative");
        if (!(solver_tol > 0.0)) throw ValidationError("stepper: solver_tol must be positive");
        if (save_stride < 1) throw ValidationError("stepper: save_stride must be >= 1");
    }
};

/// Scalars of one state u_k.
struct StateRecord {
    std::size_t step = 0;
    double time = 0.0;
    double norm_sq = 0.0;       // |u|^2
    double grad_norm_sq = 0.0;  // |grad_h u|^2, central differences
    double dirichlet = 0.0;     // -(L_h u, u)
    double phi = 0.0;           // sum rho(u) vol
    double penalty_l1 = 0.0;    // sum |u - pi(u)| vol
    double penalty_l2 = 0.0;    // |u - pi(u)|, the L^2 norm
};

/// Energy-identity contributions of the step u_k -> u_{k+1}.
struct StepIncrements {
    double f_pair = 0.0;       // dt (f_k, u_k)
    double g_pair = 0.0;       // dt (g_k, grad u_k)
    double h_pair = 0.0;       // (h_k dW_k, u_k)
    double h_norm_sq = 0.0;    // dt |h_k|^2
    double nu_pair = 0.0;      // sum over cells of u_{k+1} . nu_k
    double dissipation = 0.0;  // dt (-(L_h u_{k+1}, u_{k+1}))
};

struct Trajectory {
    GridSpec grid;
    double dt = 0.0;
    std::size_t steps = 0;
    std::vector<StateRecord> records;        // S + 1 entries
    std::vector<StepIncrements> increments;  // S entries
    std::vector<std::size_t> saved_steps;
    std::vector<Field> saved;

    /// All states 0..S; requires save_stride 1.
    const std::vector<Field>& states() const {
        if (saved.size() != steps + 1) throw ValidationError("trajectory: every state is needed (save_stride 1)");
        return saved;
    }
};

struct Simulation {
    Trajectory trajectory;
    ReflectionMeasure measure;
};

namespace detail {

struct Workspace {
    std::vector<std::vector<double>> x;  // node coordinates
    std::vector<double> f, g, h, p, v;
};

inline Workspace make_workspace(const GridSpec& grid, const CoefficientSet& c) {
    Workspace ws;
    ws.x.reserve(grid.node_count());
    for (std::size_t node = 0; node < grid.node_count(); ++node) ws.x.push_back(grid.coordinates(node));
    ws.f.resize(c.k);
    ws.g.resize(c.k * c.n);
    ws.h.resize(c.k * c.m);
    ws.p.resize(c.k);
    ws.v.resize(c.k);
    return ws;
}

inline void require_compatible(const Field& u, const CoefficientSet& c, const ConvexDomain& domain,
                               const GridSpec& grid) {
    require_conforming(grid, u, "step");
    if (u.components() != c.k || domain.dim() != c.k)
        throw ShapeError("step: state, coefficient and domain dimensions disagree");
    if (c.n != grid.dims()) throw ShapeError("step: coefficient space dimension differs from the grid");
}

struct StepOutput {
    Field next;
    StepIncrements inc;
};

// One splitting step. Cells of the reflection measure go to `measure` when
// it is given.
inline StepOutput advance(const Field& u, double t, std::span<const double> dw, const StepperConfig& cfg,
                          const ConvexDomain& domain, const CoefficientSet& c, const GridSpec& grid, Workspace& ws,
                          ReflectionMeasure* measure, std::size_t k) {
    const std::size_t nodes = u.nodes();
    const std::size_t kk = c.k, n = c.n, m = c.m;
    const double dt = cfg.dt;
    const double vol = grid.cell_volume();
    vec::require_size(dw, m, "step: noise increment");

    StepOutput out;
    const GradField z = gradient(grid, u);
    Field r = u;
    GradField gf(nodes, kk, n);
    double f_pair = 0.0, g_pair = 0.0, h_pair = 0.0, h_sq = 0.0;
    for (std::size_t node = 0; node < nodes; ++node) {
        const auto y = u.at(node);
        const auto zn = z.at(node);
        c.f(t, ws.x[node], y, zn, ws.f);
        if (!c.g_is_zero) {
            c.g(t, ws.x[node], y, zn, gf.at(node));
            g_pair += vec::dot(gf.at(node), zn);
        }
        auto rn = r.at(node);
        for (std::size_t i = 0; i < kk; ++i) {
            rn[i] += dt * ws.f[i];
            f_pair += ws.f[i] * y[i];
        }
        if (!c.h_is_zero) {
            c.h(t, ws.x[node], y, zn, ws.h);
            for (std::size_t i = 0; i < kk; ++i) {
                double hw = 0.0;
                for (std::size_t col = 0; col < m; ++col) hw += ws.h[i * m + col] * dw[col];
                rn[i] += hw;
                h_pair += hw * y[i];
            }
            h_sq += vec::norm_sq(ws.h);
        }
    }
    if (!c.g_is_zero) r.axpy(dt, divergence(grid, gf));
    out.inc.f_pair = dt * vol * f_pair;
    out.inc.g_pair = dt * vol * g_pair;
    out.inc.h_pair = vol * h_pair;
    out.inc.h_norm_sq = dt * vol * h_sq;

    out.next = solve_helmholtz(grid, 0.5 * dt, r, cfg.solver_tol);

    const double theta = cfg.penalty_n * dt;
    double nu_pair = 0.0;
    for (std::size_t node = 0; node < nodes; ++node) {
        auto w = out.next.at(node);
        domain.project(w, ws.p);
        if (cfg.scheme == Scheme::projected) {
            for (std::size_t i = 0; i < kk; ++i) ws.v[i] = (ws.p[i] - w[i]) * vol;
            std::copy(ws.p.begin(), ws.p.end(), w.begin());
        } else {
            penalty_resolvent_into(domain, w, theta, w);
            // -n (u - pi(u)) dt vol at the post-step state; pi(u_{k+1}) = pi(w)
            for (std::size_t i = 0; i < kk; ++i) ws.v[i] = -theta * (w[i] - ws.p[i]) * vol;
        }
        nu_pair += vec::dot(w, ws.v);
        if (measure) measure->add(k, node, ws.v);
    }
    out.inc.nu_pair = nu_pair;
    out.inc.dissipation = dt * dirichlet_energy(grid, out.next);
    return out;
}

inline StateRecord record_state(const Field& u, std::size_t step, double time, const ConvexDomain& domain,
                                const GridSpec& grid, std::vector<double>& p) {
    StateRecord rec;
    rec.step = step;
    rec.time = time;
    rec.norm_sq = norm_sq(grid, u);
    rec.grad_norm_sq = grad_norm_sq(grid, gradient(grid, u));
    rec.dirichlet = dirichlet_energy(grid, u);
    double rho = 0.0, l1 = 0.0;
    for (std::size_t node = 0; node < u.nodes(); ++node) {
        const auto y = u.at(node);
        domain.project(y, p);
        const double d2 = vec::dist_sq(y, p);
        rho += d2;
        l1 += std::sqrt(d2);
    }
    const double vol = grid.cell_volume();
    rec.phi = rho * vol;
    rec.penalty_l1 = l1 * vol;
    rec.penalty_l2 = std::sqrt(rho * vol);
    return rec;
}

}  // namespace detail

/// One step of the splitting scheme:
///   r = u + dt f + dt div g + h dW           (explicit, coefficients at u_k)
///   w = (I - dt/2 L_h)^{-1} r                (implicit diffusion)
///   u_{k+1} = resolvent(w, n dt) or pi(w)    (reflection, nodewise)
inline Field step(const Field& u, double t, std::span<const double> dw, const StepperConfig& cfg,
                  const ConvexDomain& domain, const CoefficientSet& coeffs, const GridSpec& grid) {
    cfg.validate();
    detail::require_compatible(u, coeffs, domain, grid);
    auto ws = detail::make_workspace(grid, coeffs);
    auto out = detail::advance(u, t, dw, cfg, domain, coeffs, grid, ws, nullptr, 0);
    if (!out.next.all_finite()) throw BlowUpError("step: non-finite state", 1);
    return std::move(out.next);
}

/// Runs all steps of `noise`, recording per-state scalars, the energy
/// increments and the reflection measure. cfg.dt must equal noise.dt().
inline Simulation simulate(const Field& xi, const CoefficientSet& coeffs, const NoisePath& noise,
                           const StepperConfig& cfg, const ConvexDomain& domain, const GridSpec& grid) {
    cfg.validate();
    detail::require_compatible(xi, coeffs, domain, grid);
    if (noise.m() != coeffs.m) throw ShapeError("simulate: noise dimension differs from the coefficients");
    if (std::abs(noise.dt() - cfg.dt) > 1e-14 * cfg.dt)
        throw ValidationError("simulate: stepper dt differs from the noise time step");
    for (std::size_t node = 0; node < xi.nodes(); ++node)
        if (distance_sq(domain, xi.at(node)) > 1e-20)
            throw ValidationError("simulate: initial condition must lie in the closure of D");

    const std::size_t steps = noise.steps();
    Simulation sim;
    auto& tr = sim.trajectory;
    tr.grid = grid;
    tr.dt = cfg.dt;
    tr.steps = steps;
    tr.records.reserve(steps + 1);
    tr.increments.reserve(steps);
    sim.measure = ReflectionMeasure(coeffs.k, steps, grid.node_count());

    auto ws = detail::make_workspace(grid, coeffs);
    Field u = xi;
    tr.records.push_back(detail::record_state(u, 0, 0.0, domain, grid, ws.p));
    tr.saved_steps.push_back(0);
    tr.saved.push_back(u);
    const double guard = 1e12 * std::max(1.0, tr.records.front().norm_sq);

    for (std::size_t k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * cfg.dt;
        auto out = detail::advance(u, t, noise.increment(k), cfg, domain, coeffs, grid, ws, &sim.measure, k);
        u = std::move(out.next);
        auto rec = detail::record_state(u, k + 1, static_cast<double>(k + 1) * cfg.dt, domain, grid, ws.p);
        if (!std::isfinite(rec.norm_sq) || rec.norm_sq > guard || !u.all_finite())
            throw BlowUpError("simulate: state blew up", k + 1);
        tr.records.push_back(rec);
        tr.increments.push_back(out.inc);
        if ((k + 1) % cfg.save_stride == 0 || k + 1 == steps) {
            tr.saved_steps.push_back(k + 1);
            tr.saved.push_back(u);
        }
    }
    return sim;
}

/// Residual of the discrete energy identity at every state k:
///   |u_k|^2 + sum dt D(u_{j+1})
///     - ( |xi|^2 + 2 sum dt (f,u) - 2 sum dt (g, grad u) + 2 sum (h dW, u)
///         + sum dt |h|^2 + 2 sum u . nu )
/// with D the Dirichlet form of L_h.
inline std::vector<double> energy_ledger(const Trajectory& tr, const CoefficientSet& coeffs, const NoisePath& noise,
                                         const ReflectionMeasure& measure) {
    if (tr.records.size() != tr.steps + 1 || tr.increments.size() != tr.steps)
        throw ShapeError("energy_ledger: incomplete trajectory");
    if (noise.steps() != tr.steps || noise.m() != coeffs.m)
        throw ShapeError("energy_ledger: noise path does not match the trajectory");
    if (measure.steps() != tr.steps || measure.components() != coeffs.k ||
        measure.nodes() != tr.grid.node_count())
        throw ShapeError("energy_ledger: measure does not match the trajectory");

    std::vector<double> residual(tr.steps + 1, 0.0);
    const double initial = tr.records.front().norm_sq;
    double lhs_int = 0.0, rhs = initial;
    for (std::size_t k = 0; k < tr.steps; ++k) {
        const auto& inc = tr.increments[k];
        lhs_int += inc.dissipation;
        rhs += 2.0 * inc.f_pair - 2.0 * inc.g_pair + 2.0 * inc.h_pair + inc.h_norm_sq + 2.0 * inc.nu_pair;
        residual[k + 1] = (tr.records[k + 1].norm_sq + lhs_int) - rhs;
    }
    return residual;
}

}  // namespace reflekt
