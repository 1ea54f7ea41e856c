#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "reflekt/convex_domain.hpp"
#include "reflekt/error.hpp"
#include "reflekt/grid.hpp"
#include "reflekt/vec.hpp"

namespace reflekt {

/// Coefficient map (t, x, y, z) -> out. y has K entries, z is the K x N
/// Jacobian (row-major), out has K (f), K*N (g) or K*M (h) entries.
using CoefficientFn = std::function<void(double t, std::span<const double> x, std::span<const double> y,
                                         std::span<const double> z, std::span<double> out)>;

struct DeclaredConstants {
    double c = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    double gamma_trace = 0.0;
};

/// Uniform bounds on |f|, |g|, |h|. Infinity means "not bounded".
struct DeclaredBounds {
    double f = std::numeric_limits<double>::infinity();
    double g = std::numeric_limits<double>::infinity();
    double h = std::numeric_limits<double>::infinity();

    bool finite() const { return std::isfinite(f) && std::isfinite(g) && std::isfinite(h); }
};

/// Drift f, divergence flux g and diffusion h with their declared
/// structural constants. Immutable once built; evaluation is pure.
struct CoefficientSet {
    std::string name;
    std::size_t k = 1;  // state components
    std::size_t n = 1;  // space dimensions
    std::size_t m = 1;  // noise dimensions
    CoefficientFn f;
    CoefficientFn g;
    CoefficientFn h;
    DeclaredConstants constants;
    DeclaredBounds bounds;
    bool g_is_zero = false;
    bool h_is_zero = false;
};

struct HypothesisCheck {
    bool passed = false;
    double margin = 0.0;
};

/// alpha + beta^2 < 1, strictly.
inline HypothesisCheck validate_contraction(double c, double alpha, double beta) {
    if (c < 0.0 || alpha < 0.0 || beta < 0.0)
        throw ValidationError("validate_contraction: constants must be nonnegative");
    const double margin = 1.0 - alpha - beta * beta;
    return {margin > 0.0, margin};
}

/// gamma + sqrt(gamma) < 1/2, strictly.
inline HypothesisCheck validate_h4(double gamma_trace) {
    if (gamma_trace < 0.0) throw ValidationError("validate_h4: gamma_trace must be nonnegative");
    const double margin = 0.5 - gamma_trace - std::sqrt(gamma_trace);
    return {margin > 0.0, margin};
}

/// Startup check of the declared constants; throws ValidationError listing
/// every failed hypothesis. `require_bounded` additionally demands finite
/// uniform bounds, which the convergence studies rely on.
inline void validate_hypotheses(const CoefficientSet& set, bool require_bounded = false) {
    std::string problems;
    const auto& k = set.constants;
    if (k.c < 0.0 || k.alpha < 0.0 || k.beta < 0.0 || k.gamma_trace < 0.0) {
        problems += "declared constants must be nonnegative; ";
    } else {
        const auto contraction = validate_contraction(k.c, k.alpha, k.beta);
        if (!contraction.passed)
            problems += "alpha + beta^2 < 1 fails (margin " + std::to_string(contraction.margin) + "); ";
        const auto h4 = validate_h4(k.gamma_trace);
        if (!h4.passed)
            problems += "gamma_trace + sqrt(gamma_trace) < 1/2 fails (margin " + std::to_string(h4.margin) + "); ";
    }
    if (require_bounded && !set.bounds.finite())
        problems += "coefficients must be uniformly bounded for convergence studies; ";
    if (!set.f || !set.g || !set.h) problems += "coefficient functions missing; ";
    if (!problems.empty()) throw ValidationError("coefficients '" + set.name + "': " + problems);
}

// ---------------------------------------------------------------------------
// Empirical probes

/// Where the probes sample (t, x, y, z).
struct ProbeRegion {
    double t_max = 1.0;
    std::vector<double> x_lo;  // defaults to [0, 1]^N when empty
    std::vector<double> x_hi;
    double y_range = 3.0;
    double z_range = 3.0;
};

struct LipschitzReport {
    std::size_t samples = 0;
    // max |df| / (|dy| + |dz|)
    double f_ratio = 0.0;
    // one-sided slopes from probes that move only y or only z
    double g_y_ratio = 0.0;
    double g_z_ratio = 0.0;
    double h_y_ratio = 0.0;
    double h_z_ratio = 0.0;
    // observed sup norms
    double f_max = 0.0;
    double g_max = 0.0;
    double h_max = 0.0;
    bool exceeds_declared = false;
    bool exceeds_bounds = false;
};

namespace detail {

struct ProbePoint {
    double t;
    std::vector<double> x, y, z;
};

struct CoefficientValues {
    std::vector<double> f, g, h;
};

inline CoefficientValues evaluate(const CoefficientSet& set, const ProbePoint& p) {
    CoefficientValues v{std::vector<double>(set.k), std::vector<double>(set.k * set.n),
                        std::vector<double>(set.k * set.m)};
    set.f(p.t, p.x, p.y, p.z, v.f);
    set.g(p.t, p.x, p.y, p.z, v.g);
    set.h(p.t, p.x, p.y, p.z, v.h);
    if (!vec::all_finite(v.f) || !vec::all_finite(v.g) || !vec::all_finite(v.h))
        throw ValidationError("coefficients '" + set.name + "': non-finite output while probing");
    return v;
}

inline bool exceeds(double lhs, double rhs) { return lhs > rhs * (1.0 + 1e-9) + 1e-300; }

}  // namespace detail

/// Random pairs (y1, z1), (y2, z2) at random (t, x); reports the largest
/// observed ratios for the three Lipschitz inequalities and flags any
/// exceedance of the declared c, alpha, beta or bounds.
inline LipschitzReport probe_lipschitz(const CoefficientSet& set, std::size_t sample_count, std::uint64_t rng_seed,
                                       const ProbeRegion& region = {}) {
    std::mt19937_64 rng(rng_seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> unit01(0.0, 1.0);
    const auto& dc = set.constants;
    LipschitzReport rep;
    rep.samples = sample_count;

    auto draw_point = [&] {
        detail::ProbePoint p;
        p.t = region.t_max * unit01(rng);
        p.x.resize(set.n);
        for (std::size_t j = 0; j < set.n; ++j) {
            const double lo = region.x_lo.empty() ? 0.0 : region.x_lo[j];
            const double hi = region.x_hi.empty() ? 1.0 : region.x_hi[j];
            p.x[j] = lo + (hi - lo) * unit01(rng);
        }
        p.y.resize(set.k);
        for (auto& v : p.y) v = region.y_range * unit(rng);
        p.z.resize(set.k * set.n);
        for (auto& v : p.z) v = region.z_range * unit(rng);
        return p;
    };

    for (std::size_t s = 0; s < sample_count; ++s) {
        detail::ProbePoint p1 = draw_point();
        detail::ProbePoint p2 = p1;
        const int mode = static_cast<int>(s % 3);
        const bool local = (s / 3) % 2 == 0;
        const double step = local ? 1e-3 : 1.0;
        if (mode != 1)
            for (auto& v : p2.y) v += step * region.y_range * unit(rng);
        if (mode != 0)
            for (auto& v : p2.z) v += step * region.z_range * unit(rng);

        const auto a = detail::evaluate(set, p1);
        const auto b = detail::evaluate(set, p2);
        const double dy = std::sqrt(vec::dist_sq(p1.y, p2.y));
        const double dz = std::sqrt(vec::dist_sq(p1.z, p2.z));
        const double df = std::sqrt(vec::dist_sq(a.f, b.f));
        const double dg = std::sqrt(vec::dist_sq(a.g, b.g));
        const double dh = std::sqrt(vec::dist_sq(a.h, b.h));

        if (dy + dz > 0.0) rep.f_ratio = std::max(rep.f_ratio, df / (dy + dz));
        if (mode == 0 && dy > 0.0) {
            rep.g_y_ratio = std::max(rep.g_y_ratio, dg / dy);
            rep.h_y_ratio = std::max(rep.h_y_ratio, dh / dy);
        }
        if (mode == 1 && dz > 0.0) {
            rep.g_z_ratio = std::max(rep.g_z_ratio, dg / dz);
            rep.h_z_ratio = std::max(rep.h_z_ratio, dh / dz);
        }
        if (detail::exceeds(df, dc.c * (dy + dz)) || detail::exceeds(dg, dc.c * dy + dc.alpha * dz) ||
            detail::exceeds(dh, dc.c * dy + dc.beta * dz))
            rep.exceeds_declared = true;

        for (const auto* v : {&a, &b}) {
            rep.f_max = std::max(rep.f_max, vec::norm(v->f));
            rep.g_max = std::max(rep.g_max, vec::norm(v->g));
            rep.h_max = std::max(rep.h_max, vec::norm(v->h));
        }
    }
    rep.exceeds_bounds = detail::exceeds(rep.f_max, set.bounds.f) || detail::exceeds(rep.g_max, set.bounds.g) ||
                         detail::exceeds(rep.h_max, set.bounds.h);
    return rep;
}

struct TraceReport {
    std::size_t samples = 0;
    double g_ratio = 0.0;  // max trace[g^T A g] / trace[z^T A z]
    double h_ratio = 0.0;
    bool passed = true;
};

/// Direct check of trace[g^T A g] <= gamma_trace trace[z^T A z] (and the same
/// for h) with random nonnegative-definite A = Q^T Q, Q sometimes rank
/// deficient.
inline TraceReport check_trace_condition(const CoefficientSet& set, std::size_t sample_count,
                                         std::uint64_t rng_seed, const ProbeRegion& region = {}) {
    std::mt19937_64 rng(rng_seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> unit01(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const std::size_t k = set.k;
    TraceReport rep;
    rep.samples = sample_count;

    // trace[V^T A V] for V with K rows and `cols` columns (row-major).
    auto quad = [&](const std::vector<double>& a, const std::vector<double>& v, std::size_t cols) {
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c)
            for (std::size_t i = 0; i < k; ++i)
                for (std::size_t l = 0; l < k; ++l) s += v[i * cols + c] * a[i * k + l] * v[l * cols + c];
        return s;
    };

    for (std::size_t s = 0; s < sample_count; ++s) {
        detail::ProbePoint p;
        p.t = region.t_max * unit01(rng);
        p.x.resize(set.n);
        for (std::size_t j = 0; j < set.n; ++j) {
            const double lo = region.x_lo.empty() ? 0.0 : region.x_lo[j];
            const double hi = region.x_hi.empty() ? 1.0 : region.x_hi[j];
            p.x[j] = lo + (hi - lo) * unit01(rng);
        }
        p.y.resize(k);
        for (auto& v : p.y) v = region.y_range * unit(rng);
        p.z.resize(k * set.n);
        for (auto& v : p.z) v = region.z_range * unit(rng);

        const std::size_t rank = 1 + s % k;
        std::vector<double> q(rank * k), a(k * k, 0.0);
        for (auto& v : q) v = gauss(rng);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t l = 0; l < k; ++l)
                for (std::size_t r = 0; r < rank; ++r) a[i * k + l] += q[r * k + i] * q[r * k + l];

        const auto vals = detail::evaluate(set, p);
        const double zz = quad(a, p.z, set.n);
        const double gg = quad(a, vals.g, set.n);
        const double hh = quad(a, vals.h, set.m);
        if (zz > 0.0) {
            rep.g_ratio = std::max(rep.g_ratio, gg / zz);
            rep.h_ratio = std::max(rep.h_ratio, hh / zz);
        }
        if (detail::exceeds(gg, set.constants.gamma_trace * zz) || detail::exceeds(hh, set.constants.gamma_trace * zz))
            rep.passed = false;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Builtin coefficient sets

inline CoefficientSet make_zero_set(std::size_t k, std::size_t n, std::size_t m) {
    CoefficientSet s;
    s.name = "zero";
    s.k = k;
    s.n = n;
    s.m = m;
    auto zero = [](double, std::span<const double>, std::span<const double>, std::span<const double>,
                   std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
    s.f = zero;
    s.g = zero;
    s.h = zero;
    s.bounds = {0.0, 0.0, 0.0};
    s.g_is_zero = true;
    s.h_is_zero = true;
    return s;
}

/// Constant outward drift f = drift, g = h = 0.
inline CoefficientSet make_drift_out_set(std::size_t k, std::size_t n, std::size_t m, std::vector<double> drift) {
    if (drift.size() != k) throw ValidationError("drift_out: drift vector must have K entries");
    CoefficientSet s = make_zero_set(k, n, m);
    s.name = "drift_out";
    s.bounds.f = vec::norm(drift);
    s.f = [drift = std::move(drift)](double, std::span<const double>, std::span<const double>,
                                     std::span<const double>, std::span<double> out) {
        std::copy(drift.begin(), drift.end(), out.begin());
    };
    return s;
}

/// Default drift of `drift_out`: magnitude 8 along the first axis.
inline std::vector<double> default_outward_drift(std::size_t k) {
    std::vector<double> d(k, 0.0);
    d[0] = 8.0;
    return d;
}

struct BoundedSmoothParams {
    std::vector<double> drive;  // constant part of f; defaults to 6 e_1
    double y_gain = 0.5;        // f += y_gain tanh(y_i)
    double z_gain = 0.5;        // f += z_gain mean_j tanh(z_ij)
    double g_gain = 0.2;        // g = g_gain sat(z)
    double h_gain = 0.3;        // h = h_gain sat(z) E, E the N x M rectangular identity
    double saturation = 4.0;    // sat(z) = s tanh(|z| / s) z / |z|
    DeclaredConstants declared{0.5, 0.2, 0.5, 0.09};
};

/// Smooth saturating coefficients meeting every hypothesis with slack.
///
/// g and h depend on z only through the radial saturation sat(z), which is
/// 1-Lipschitz with |sat(z)| <= min(|z|, s); hence |g| <= g_gain s,
/// trace[g^T A g] <= g_gain^2 trace[z^T A z], and likewise for h.
inline CoefficientSet make_bounded_smooth_set(std::size_t k, std::size_t n, std::size_t m,
                                              BoundedSmoothParams p = {}) {
    if (p.drive.empty()) {
        p.drive.assign(k, 0.0);
        p.drive[0] = 6.0;
    }
    if (p.drive.size() != k) throw ValidationError("bounded_smooth: drive must have K entries");
    CoefficientSet s;
    s.name = "bounded_smooth";
    s.k = k;
    s.n = n;
    s.m = m;
    s.constants = p.declared;
    const double root_k = std::sqrt(static_cast<double>(k));
    s.bounds.f = vec::norm(p.drive) + (p.y_gain + p.z_gain) * root_k;
    s.bounds.g = p.g_gain * p.saturation;
    s.bounds.h = p.h_gain * p.saturation;

    auto sat_factor = [tau = p.saturation](std::span<const double> z) {
        const double r = vec::norm(z);
        return r > 0.0 ? tau * std::tanh(r / tau) / r : 1.0;
    };
    s.f = [p, n](double, std::span<const double>, std::span<const double> y, std::span<const double> z,
                 std::span<double> out) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            double zs = 0.0;
            for (std::size_t j = 0; j < n; ++j) zs += std::tanh(z[i * n + j]);
            out[i] = p.drive[i] + p.y_gain * std::tanh(y[i]) + p.z_gain * zs / static_cast<double>(n);
        }
    };
    s.g = [gain = p.g_gain, sat_factor](double, std::span<const double>, std::span<const double>,
                                        std::span<const double> z, std::span<double> out) {
        const double a = gain * sat_factor(z);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * z[i];
    };
    s.h = [gain = p.h_gain, sat_factor, k, n, m](double, std::span<const double>, std::span<const double>,
                                                  std::span<const double> z, std::span<double> out) {
        const double a = gain * sat_factor(z);
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t c = 0; c < std::min(n, m); ++c) out[i * m + c] = a * z[i * n + c];
    };
    return s;
}

struct LinearParams {
    std::vector<double> f_matrix;  // K x K, row-major; empty means zero
    std::vector<double> f_offset;  // K; empty means zero
    std::vector<double> g_matrix;  // N x N acting on the right of z; empty means zero
    std::vector<double> h_matrix;  // N x M acting on the right of z; empty means zero
    DeclaredConstants declared;
};

/// f = A y + b, g = z S, h = z R. Unbounded unless every matrix is zero.
inline CoefficientSet make_linear_set(std::size_t k, std::size_t n, std::size_t m, LinearParams p) {
    auto check = [](const std::vector<double>& v, std::size_t len, const char* what) {
        if (!v.empty() && v.size() != len)
            throw ValidationError(std::string("linear coefficients: ") + what + " has wrong size");
    };
    check(p.f_matrix, k * k, "f_matrix");
    check(p.f_offset, k, "f_offset");
    check(p.g_matrix, n * n, "g_matrix");
    check(p.h_matrix, n * m, "h_matrix");
    CoefficientSet s;
    s.name = "linear";
    s.k = k;
    s.n = n;
    s.m = m;
    s.constants = p.declared;
    auto nonzero = [](const std::vector<double>& v) {
        return std::any_of(v.begin(), v.end(), [](double x) { return x != 0.0; });
    };
    const double inf = std::numeric_limits<double>::infinity();
    s.bounds.f = nonzero(p.f_matrix) ? inf : vec::norm(p.f_offset);
    s.bounds.g = nonzero(p.g_matrix) ? inf : 0.0;
    s.bounds.h = nonzero(p.h_matrix) ? inf : 0.0;
    s.g_is_zero = !nonzero(p.g_matrix);
    s.h_is_zero = !nonzero(p.h_matrix);

    s.f = [a = p.f_matrix, b = p.f_offset, k](double, std::span<const double>, std::span<const double> y,
                                              std::span<const double>, std::span<double> out) {
        for (std::size_t i = 0; i < k; ++i) {
            double v = b.empty() ? 0.0 : b[i];
            if (!a.empty())
                for (std::size_t l = 0; l < k; ++l) v += a[i * k + l] * y[l];
            out[i] = v;
        }
    };
    auto right_multiply = [k, n](const std::vector<double>& mat, std::size_t cols) {
        return [mat, k, n, cols](double, std::span<const double>, std::span<const double>, std::span<const double> z,
                                 std::span<double> out) {
            std::fill(out.begin(), out.end(), 0.0);
            if (mat.empty()) return;
            for (std::size_t i = 0; i < k; ++i)
                for (std::size_t c = 0; c < cols; ++c) {
                    double v = 0.0;
                    for (std::size_t j = 0; j < n; ++j) v += z[i * n + j] * mat[j * cols + c];
                    out[i * cols + c] = v;
                }
        };
    };
    s.g = right_multiply(p.g_matrix, n);
    s.h = right_multiply(p.h_matrix, m);
    return s;
}

/// The named builtin sets with their default parameters.
inline std::map<std::string, CoefficientSet> builtin_sets(std::size_t k, std::size_t n, std::size_t m) {
    std::map<std::string, CoefficientSet> out;
    out.emplace("zero", make_zero_set(k, n, m));
    out.emplace("drift_out", make_drift_out_set(k, n, m, default_outward_drift(k)));
    out.emplace("bounded_smooth", make_bounded_smooth_set(k, n, m));
    return out;
}

// ---------------------------------------------------------------------------
// Initial condition

struct InitialCondition {
    std::string name;
    std::function<void(std::span<const double> x, std::span<double> out)> xi;
};

inline InitialCondition make_zero_initial() {
    return {"zero", [](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); }};
}

inline InitialCondition make_constant_initial(std::vector<double> value) {
    return {"constant", [value = std::move(value)](std::span<const double>, std::span<double> out) {
                std::copy(value.begin(), value.end(), out.begin());
            }};
}

/// xi(x) = value * prod_j sin(pi (x_j - a_j) / (b_j - a_j)).
inline InitialCondition make_sine_initial(const GridSpec& grid, std::vector<double> value) {
    std::vector<Axis> axes;
    for (std::size_t j = 0; j < grid.dims(); ++j) axes.push_back(grid.axis(j));
    return {"sine", [value = std::move(value), axes](std::span<const double> x, std::span<double> out) {
                double s = 1.0;
                for (std::size_t j = 0; j < axes.size(); ++j)
                    s *= std::sin(M_PI * (x[j] - axes[j].a) / (axes[j].b - axes[j].a));
                for (std::size_t i = 0; i < out.size(); ++i) out[i] = value[i] * s;
            }};
}

/// Pointwise samples of xi at the interior nodes, projected onto the closure of D.
inline Field sample_initial(const GridSpec& grid, const ConvexDomain& domain, const InitialCondition& ic) {
    Field u(grid.node_count(), domain.dim());
    std::vector<double> x(grid.dims());
    for (std::size_t node = 0; node < grid.node_count(); ++node) {
        grid.coordinates(node, x);
        ic.xi(x, u.at(node));
        if (!vec::all_finite(u.at(node))) throw ValidationError("initial condition: non-finite value");
        domain.project(u.at(node), u.at(node));
    }
    return u;
}

}  // namespace reflekt
