#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "reflekt/error.hpp"
#include "reflekt/vec.hpp"

namespace reflekt {

struct Ball {
    std::vector<double> center;
    double radius = 1.0;
};

struct Box {
    std::vector<double> lo;
    std::vector<double> hi;
};

/// The set { x : normal · x <= offset }.
struct Halfspace {
    std::vector<double> normal;
    double offset = 0.0;
};

struct Polytope {
    std::vector<Halfspace> halfspaces;
};

struct DykstraOptions {
    double tolerance = 1e-10;
    std::size_t max_sweeps = 10000;
};

/// Closed convex set D in R^K containing the origin in its interior.
///
/// Construction validates the shape and throws ValidationError when the
/// origin is not interior, so every ConvexDomain in circulation has a
/// strictly positive inner radius.
class ConvexDomain {
public:
    using Shape = std::variant<Ball, Box, Polytope>;

    explicit ConvexDomain(Shape shape, DykstraOptions dykstra = {})
        : shape_(std::move(shape)), dykstra_(dykstra) {
        dim_ = std::visit([this](const auto& s) { return validate(s); }, shape_);
        inner_radius_ = std::visit([](const auto& s) { return compute_inner_radius(s); }, shape_);
        if (!(inner_radius_ > 0.0))
            throw ValidationError("domain: the origin must lie in the interior (inner radius " +
                                  std::to_string(inner_radius_) + ")");
    }

    static ConvexDomain ball(std::vector<double> center, double radius) {
        return ConvexDomain(Ball{std::move(center), radius});
    }
    static ConvexDomain box(std::vector<double> lo, std::vector<double> hi) {
        return ConvexDomain(Box{std::move(lo), std::move(hi)});
    }
    static ConvexDomain polytope(std::vector<Halfspace> halfspaces, DykstraOptions dykstra = {}) {
        return ConvexDomain(Polytope{std::move(halfspaces)}, dykstra);
    }

    std::size_t dim() const noexcept { return dim_; }
    const Shape& shape() const noexcept { return shape_; }
    double inner_radius() const noexcept { return inner_radius_; }

    std::string_view kind() const noexcept {
        switch (shape_.index()) {
            case 0: return "ball";
            case 1: return "box";
            default: return "polytope";
        }
    }

    /// Nearest point of the closure of D. `out` may alias `y`.
    void project(std::span<const double> y, std::span<double> out) const {
        vec::require_size(y, dim_, "project");
        vec::require_size(out, dim_, "project");
        std::visit([&](const auto& s) { project_impl(s, y, out); }, shape_);
    }

    bool contains(std::span<const double> y, double tol = 0.0) const {
        std::vector<double> p(dim_);
        project(y, p);
        return vec::dist_sq(y, p) <= tol * tol;
    }

    /// Per-axis half-width of an origin-centred box enclosing D. For an
    /// unbounded polytope this is the reach of projections of far points.
    std::vector<double> extent() const {
        std::vector<double> e(dim_, 0.0);
        if (const auto* b = std::get_if<Ball>(&shape_)) {
            for (std::size_t k = 0; k < dim_; ++k) e[k] = std::abs(b->center[k]) + b->radius;
        } else if (const auto* bx = std::get_if<Box>(&shape_)) {
            for (std::size_t k = 0; k < dim_; ++k) e[k] = std::max(-bx->lo[k], bx->hi[k]);
        } else {
            const auto& poly = std::get<Polytope>(shape_);
            double reach = 0.0;
            for (const auto& h : poly.halfspaces) reach = std::max(reach, h.offset / vec::norm(h.normal));
            const double far = 100.0 * reach;
            std::vector<double> y(dim_), p(dim_);
            for (std::size_t k = 0; k < dim_; ++k) {
                for (double sign : {-1.0, 1.0}) {
                    std::fill(y.begin(), y.end(), 0.0);
                    y[k] = sign * far;
                    project(y, p);
                    for (std::size_t j = 0; j < dim_; ++j) e[j] = std::max(e[j], std::abs(p[j]));
                }
            }
        }
        return e;
    }

private:
    std::size_t validate(const Ball& b) const {
        if (b.center.empty()) throw ValidationError("ball: empty center");
        if (!(b.radius > 0.0) || !std::isfinite(b.radius)) throw ValidationError("ball: radius must be positive");
        if (!vec::all_finite(b.center)) throw ValidationError("ball: non-finite center");
        return b.center.size();
    }
    std::size_t validate(const Box& b) const {
        if (b.lo.empty() || b.lo.size() != b.hi.size())
            throw ValidationError("box: lo and hi must be nonempty and of equal length");
        for (std::size_t k = 0; k < b.lo.size(); ++k)
            if (!(b.lo[k] < b.hi[k])) throw ValidationError("box: lo must be below hi in every coordinate");
        return b.lo.size();
    }
    std::size_t validate(const Polytope& p) const {
        if (p.halfspaces.empty()) throw ValidationError("polytope: no halfspaces");
        const std::size_t k = p.halfspaces.front().normal.size();
        if (k == 0) throw ValidationError("polytope: empty normal");
        for (const auto& h : p.halfspaces) {
            if (h.normal.size() != k) throw ValidationError("polytope: normals of different dimension");
            if (!(vec::norm(h.normal) > 0.0)) throw ValidationError("polytope: zero normal");
            if (!std::isfinite(h.offset)) throw ValidationError("polytope: non-finite offset");
        }
        return k;
    }

    static double compute_inner_radius(const Ball& b) { return b.radius - vec::norm(b.center); }
    static double compute_inner_radius(const Box& b) {
        double r = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < b.lo.size(); ++k) r = std::min({r, -b.lo[k], b.hi[k]});
        return r;
    }
    static double compute_inner_radius(const Polytope& p) {
        double r = std::numeric_limits<double>::infinity();
        for (const auto& h : p.halfspaces) r = std::min(r, h.offset / vec::norm(h.normal));
        return r;
    }

    static void project_impl(const Ball& b, std::span<const double> y, std::span<double> out) {
        double r2 = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k) {
            const double d = y[k] - b.center[k];
            r2 += d * d;
        }
        if (r2 <= b.radius * b.radius) {
            std::copy(y.begin(), y.end(), out.begin());
            return;
        }
        const double scale = b.radius / std::sqrt(r2);
        for (std::size_t k = 0; k < y.size(); ++k) out[k] = b.center[k] + (y[k] - b.center[k]) * scale;
    }

    static void project_impl(const Box& b, std::span<const double> y, std::span<double> out) {
        for (std::size_t k = 0; k < y.size(); ++k) out[k] = std::clamp(y[k], b.lo[k], b.hi[k]);
    }

    static void project_halfspace(const Halfspace& h, std::span<double> z) {
        const double excess = vec::dot(h.normal, z) - h.offset;
        if (excess <= 0.0) return;
        const double s = excess / vec::norm_sq(h.normal);
        for (std::size_t k = 0; k < z.size(); ++k) z[k] -= s * h.normal[k];
    }

    // Dykstra stops at ~tol from the true projection. Refine by solving the
    // equality-constrained problem on the near-active faces exactly; keep the
    // Dykstra point when that system is degenerate or the answer is not a
    // valid KKT point.
    static void polish_active_set(const Polytope& p, std::span<const double> y, std::vector<double>& x, double tol) {
        const std::size_t dim = y.size();
        std::vector<const Halfspace*> active;
        for (const auto& h : p.halfspaces)
            if (vec::dot(h.normal, x) - h.offset >= -1e3 * tol * vec::norm(h.normal)) active.push_back(&h);
        const std::size_t a = active.size();
        if (a == 0 || a > dim) return;
        // (N N^T) lambda = N y - b, then z = y - N^T lambda
        std::vector<double> mat(a * (a + 1));
        for (std::size_t i = 0; i < a; ++i) {
            for (std::size_t l = 0; l < a; ++l) mat[i * (a + 1) + l] = vec::dot(active[i]->normal, active[l]->normal);
            mat[i * (a + 1) + a] = vec::dot(active[i]->normal, y) - active[i]->offset;
        }
        for (std::size_t c = 0; c < a; ++c) {
            std::size_t piv = c;
            for (std::size_t r = c + 1; r < a; ++r)
                if (std::abs(mat[r * (a + 1) + c]) > std::abs(mat[piv * (a + 1) + c])) piv = r;
            if (std::abs(mat[piv * (a + 1) + c]) < 1e-12 * vec::norm_sq(active[c]->normal)) return;
            for (std::size_t l = 0; l <= a; ++l) std::swap(mat[c * (a + 1) + l], mat[piv * (a + 1) + l]);
            for (std::size_t r = 0; r < a; ++r) {
                if (r == c) continue;
                const double f = mat[r * (a + 1) + c] / mat[c * (a + 1) + c];
                for (std::size_t l = c; l <= a; ++l) mat[r * (a + 1) + l] -= f * mat[c * (a + 1) + l];
            }
        }
        std::vector<double> z(y.begin(), y.end());
        for (std::size_t i = 0; i < a; ++i) {
            const double lambda = mat[i * (a + 1) + a] / mat[i * (a + 1) + i];
            if (lambda < 0.0) return;
            for (std::size_t k = 0; k < dim; ++k) z[k] -= lambda * active[i]->normal[k];
        }
        for (const auto& h : p.halfspaces)
            if (vec::dot(h.normal, z) - h.offset > 1e-12 * (1.0 + std::abs(h.offset)) * vec::norm(h.normal)) return;
        if (std::sqrt(vec::dist_sq(z, x)) > 1e3 * tol) return;
        x = std::move(z);
    }

    // Dykstra's alternating projections onto the halfspaces.
    void project_impl(const Polytope& p, std::span<const double> y, std::span<double> out) const {
        const std::size_t dim = y.size();
        const std::size_t m = p.halfspaces.size();
        bool feasible = true;
        for (const auto& h : p.halfspaces)
            if (vec::dot(h.normal, y) > h.offset) { feasible = false; break; }
        if (feasible) {
            std::copy(y.begin(), y.end(), out.begin());
            return;
        }
        std::vector<double> x(y.begin(), y.end());
        std::vector<double> incr(m * dim, 0.0);
        std::vector<double> prev(dim), z(dim);
        const double tol = dykstra_.tolerance * (1.0 + vec::norm(y));
        double change = std::numeric_limits<double>::infinity();
        for (std::size_t sweep = 0; sweep < dykstra_.max_sweeps; ++sweep) {
            prev = x;
            for (std::size_t i = 0; i < m; ++i) {
                std::span<double> q(incr.data() + i * dim, dim);
                for (std::size_t k = 0; k < dim; ++k) z[k] = x[k] + q[k];
                x = z;
                project_halfspace(p.halfspaces[i], x);
                for (std::size_t k = 0; k < dim; ++k) q[k] = z[k] - x[k];
            }
            change = std::sqrt(vec::dist_sq(x, prev));
            if (change <= tol) {
                polish_active_set(p, y, x, tol);
                std::copy(x.begin(), x.end(), out.begin());
                return;
            }
        }
        throw NonConvergenceError("polytope projection: Dykstra iteration did not converge", change);
    }

    Shape shape_;
    DykstraOptions dykstra_;
    std::size_t dim_ = 0;
    double inner_radius_ = 0.0;
};

inline std::vector<double> project(const ConvexDomain& domain, std::span<const double> y) {
    std::vector<double> out(domain.dim());
    domain.project(y, out);
    return out;
}

/// rho(y) = |y - pi(y)|^2.
inline double distance_sq(const ConvexDomain& domain, std::span<const double> y) {
    std::vector<double> p(domain.dim());
    domain.project(y, p);
    return vec::dist_sq(y, p);
}

/// Gradient of rho: 2 (y - pi(y)).
inline std::vector<double> grad_rho(const ConvexDomain& domain, std::span<const double> y) {
    std::vector<double> p(domain.dim());
    domain.project(y, p);
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = 2.0 * (y[k] - p[k]);
    return p;
}

/// Largest r with Ball(0, r) inside D; a certified delta for
/// pi(x) . (x - pi(x)) >= delta |x - pi(x)|.
inline double inner_radius(const ConvexDomain& domain) { return domain.inner_radius(); }

/// Solves v + theta (v - pi(v)) = w for one point, writing v into `out`.
///
/// The solution is v = (w + theta pi(w)) / (1 + theta): v lies on the segment
/// from w to pi(w), so pi(v) = pi(w). This holds for every closed convex set,
/// polytopes included. `out` may alias `w`.
inline void penalty_resolvent_into(const ConvexDomain& domain, std::span<const double> w, double theta,
                                   std::span<double> out) {
    if (!(theta >= 0.0)) throw ValidationError("penalty resolvent: theta must be nonnegative");
    std::array<double, 8> small{};
    std::vector<double> large;
    std::span<double> p;
    if (domain.dim() <= small.size()) {
        p = std::span<double>(small.data(), domain.dim());
    } else {
        large.resize(domain.dim());
        p = large;
    }
    domain.project(w, p);
    if (std::equal(p.begin(), p.end(), w.begin())) {
        if (out.data() != w.data()) std::copy(w.begin(), w.end(), out.begin());
        return;
    }
    const double inv = 1.0 / (1.0 + theta);
    for (std::size_t k = 0; k < p.size(); ++k) out[k] = (w[k] + theta * p[k]) * inv;
}

inline std::vector<double> penalty_resolvent_point(const ConvexDomain& domain, std::span<const double> w,
                                                   double theta) {
    vec::require_size(w, domain.dim(), "penalty resolvent");
    std::vector<double> out(domain.dim());
    penalty_resolvent_into(domain, w, theta, out);
    return out;
}

/// Fixed-point route to the same resolvent: v <- (w + theta pi(v)) / (1 + theta),
/// a contraction with factor theta / (1 + theta).
inline std::vector<double> penalty_resolvent_iterative(const ConvexDomain& domain, std::span<const double> w,
                                                       double theta, double tolerance = 1e-12,
                                                       std::size_t max_iterations = 100000) {
    vec::require_size(w, domain.dim(), "penalty resolvent");
    if (!(theta >= 0.0)) throw ValidationError("penalty resolvent: theta must be nonnegative");
    std::vector<double> v(w.begin(), w.end()), p(domain.dim()), next(domain.dim());
    const double inv = 1.0 / (1.0 + theta);
    double change = std::numeric_limits<double>::infinity();
    for (std::size_t it = 0; it < max_iterations; ++it) {
        domain.project(v, p);
        for (std::size_t k = 0; k < v.size(); ++k) next[k] = (w[k] + theta * p[k]) * inv;
        change = std::sqrt(vec::dist_sq(next, v));
        v.swap(next);
        if (change <= tolerance * (1.0 + vec::norm(w))) return v;
    }
    throw NonConvergenceError("penalty resolvent: fixed-point iteration did not converge", change);
}

// ---------------------------------------------------------------------------
// Projection property checks

struct PropertyMargin {
    std::string name;
    double worst_margin = std::numeric_limits<double>::infinity();
    std::vector<double> witness_x;
    std::vector<double> witness_other;
};

struct ProjectionReport {
    std::size_t samples = 0;
    double delta = 0.0;
    double gamma_cone = 0.0;
    double tolerance = 1e-9;
    std::array<PropertyMargin, 4> properties;

    bool passed() const {
        return std::all_of(properties.begin(), properties.end(),
                           [&](const PropertyMargin& p) { return p.worst_margin >= -tolerance; });
    }
};

/// Normalized margins of the four projection properties at one sample.
/// `x_in` must lie in the closure of D; `x_any` is arbitrary. A negative
/// margin is a violation. Margins are divided by 1 + |x|^2 + |other|^2.
inline std::array<double, 4> projection_property_margins(const ConvexDomain& domain, std::span<const double> x,
                                                         std::span<const double> x_in,
                                                         std::span<const double> x_any) {
    const std::size_t dim = domain.dim();
    std::vector<double> px(dim), pa(dim), d(dim);
    domain.project(x, px);
    domain.project(x_any, pa);
    for (std::size_t k = 0; k < dim; ++k) d[k] = x[k] - px[k];
    const double dn = vec::norm(d);
    const double delta = domain.inner_radius();
    const double xx = vec::norm_sq(x);

    double p1 = 0.0, p2l = 0.0, p2r = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
        p1 += (x_in[k] - x[k]) * d[k];
        p2l += (x_any[k] - x[k]) * d[k];
        p2r += (x_any[k] - pa[k]) * d[k];
    }
    return {
        -p1 / (1.0 + xx + vec::norm_sq(x_in)),
        (p2r - p2l) / (1.0 + xx + vec::norm_sq(x_any)),
        (vec::dot(x, d) - delta * dn) / (1.0 + xx),
        (vec::dot(px, d) - delta * dn) / (1.0 + xx),
    };
}

/// Samples points from the 3x-inflated bounding box (plus boundary-biased
/// points) and records the worst margin of each projection property, with
/// a = 0 and gamma_cone = delta = inner_radius.
inline ProjectionReport check_projection_properties(const ConvexDomain& domain, std::size_t sample_count,
                                                    std::uint64_t rng_seed) {
    if (sample_count < 1) throw ValidationError("check_projection_properties: sample_count must be >= 1");
    const std::size_t dim = domain.dim();
    ProjectionReport report;
    report.samples = sample_count;
    report.delta = domain.inner_radius();
    report.gamma_cone = report.delta;
    report.properties[0].name = "(x'-x).(x-pi(x)) <= 0";
    report.properties[1].name = "(x'-x).(x-pi(x)) <= (x'-pi(x')).(x-pi(x))";
    report.properties[2].name = "x.(x-pi(x)) >= gamma_cone |x-pi(x)|";
    report.properties[3].name = "pi(x).(x-pi(x)) >= delta |x-pi(x)|";

    const std::vector<double> ext = domain.extent();
    std::mt19937_64 rng(rng_seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto uniform_box = [&](double factor) {
        std::vector<double> y(dim);
        for (std::size_t k = 0; k < dim; ++k) y[k] = factor * ext[k] * unit(rng);
        return y;
    };

    double scale = 0.0;
    for (double e : ext) scale = std::max(scale, e);

    for (std::size_t s = 0; s < sample_count; ++s) {
        std::vector<double> x;
        if (s % 4 == 3) {
            x = project(domain, uniform_box(10.0));
            for (auto& v : x) v += 0.01 * scale * gauss(rng);
        } else {
            x = uniform_box(3.0);
        }
        const std::vector<double> x_in = project(domain, uniform_box(s % 2 == 0 ? 10.0 : 3.0));
        const std::vector<double> x_any = uniform_box(3.0);

        const auto m = projection_property_margins(domain, x, x_in, x_any);
        const std::array<const std::vector<double>*, 4> other{&x_in, &x_any, &x, &x};
        for (std::size_t i = 0; i < 4; ++i) {
            if (m[i] < report.properties[i].worst_margin) {
                report.properties[i].worst_margin = m[i];
                report.properties[i].witness_x = x;
                report.properties[i].witness_other = *other[i];
            }
        }
    }
    return report;
}

}  // namespace reflekt
