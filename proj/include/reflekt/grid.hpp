#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "reflekt/error.hpp"

namespace reflekt {

struct Axis {
    double a = 0.0;
    double b = 1.0;
    std::size_t nodes = 1;  // interior nodes; the boundary nodes carry the Dirichlet zero
};

/// Uniform tensor grid on the box O = prod (a_j, b_j), interior nodes only.
/// Nodes are numbered row-major with axis 0 slowest.
class GridSpec {
public:
    static constexpr std::size_t max_dims = 2;

    GridSpec() : GridSpec(std::vector<Axis>{Axis{}}) {}

    explicit GridSpec(std::vector<Axis> axes) : axes_(std::move(axes)) {
        if (axes_.empty() || axes_.size() > max_dims)
            throw ValidationError("grid: n_dims must be between 1 and " + std::to_string(max_dims));
        for (const auto& ax : axes_) {
            if (ax.nodes < 1) throw ValidationError("grid: every axis needs at least one interior node");
            if (!(ax.a < ax.b) || !std::isfinite(ax.a) || !std::isfinite(ax.b))
                throw ValidationError("grid: axis intervals must satisfy a < b");
        }
        strides_.assign(axes_.size(), 1);
        for (std::size_t j = axes_.size() - 1; j > 0; --j) strides_[j - 1] = strides_[j] * axes_[j].nodes;
        count_ = strides_[0] * axes_[0].nodes;
        volume_ = 1.0;
        for (std::size_t j = 0; j < axes_.size(); ++j) volume_ *= spacing(j);
    }

    /// 1-D grid on (a, b) with m interior nodes.
    static GridSpec line(double a, double b, std::size_t m) { return GridSpec({Axis{a, b, m}}); }

    std::size_t dims() const noexcept { return axes_.size(); }
    const Axis& axis(std::size_t j) const { return axes_.at(j); }
    std::size_t nodes(std::size_t j) const { return axes_.at(j).nodes; }
    double spacing(std::size_t j) const {
        const auto& ax = axes_.at(j);
        return (ax.b - ax.a) / static_cast<double>(ax.nodes + 1);
    }
    std::size_t stride(std::size_t j) const { return strides_.at(j); }
    std::size_t node_count() const noexcept { return count_; }
    double cell_volume() const noexcept { return volume_; }
    /// Total volume carried by the interior nodes, vol * node_count.
    double interior_volume() const noexcept { return volume_ * static_cast<double>(count_); }

    std::size_t index_along(std::size_t node, std::size_t j) const { return (node / strides_[j]) % axes_[j].nodes; }

    void coordinates(std::size_t node, std::span<double> x) const {
        for (std::size_t j = 0; j < axes_.size(); ++j)
            x[j] = axes_[j].a + spacing(j) * static_cast<double>(index_along(node, j) + 1);
    }

    std::vector<double> coordinates(std::size_t node) const {
        std::vector<double> x(dims());
        coordinates(node, x);
        return x;
    }

    bool operator==(const GridSpec& other) const {
        if (axes_.size() != other.axes_.size()) return false;
        for (std::size_t j = 0; j < axes_.size(); ++j)
            if (axes_[j].a != other.axes_[j].a || axes_[j].b != other.axes_[j].b ||
                axes_[j].nodes != other.axes_[j].nodes)
                return false;
        return true;
    }

private:
    std::vector<Axis> axes_;
    std::vector<std::size_t> strides_;
    std::size_t count_ = 0;
    double volume_ = 0.0;
};

/// Values of a fixed number of components at every interior node, stored
/// node-major so the components of one node are contiguous.
class NodalArray {
public:
    NodalArray() = default;
    NodalArray(std::size_t nodes, std::size_t components, double fill = 0.0)
        : nodes_(nodes), components_(components), values_(nodes * components, fill) {}

    std::size_t nodes() const noexcept { return nodes_; }
    std::size_t components() const noexcept { return components_; }
    std::size_t size() const noexcept { return values_.size(); }

    double& operator()(std::size_t node, std::size_t c) { return values_[node * components_ + c]; }
    double operator()(std::size_t node, std::size_t c) const { return values_[node * components_ + c]; }

    std::span<double> at(std::size_t node) { return {values_.data() + node * components_, components_}; }
    std::span<const double> at(std::size_t node) const { return {values_.data() + node * components_, components_}; }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }

    bool all_finite() const {
        return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
    }

    bool operator==(const NodalArray&) const = default;

protected:
    std::size_t nodes_ = 0;
    std::size_t components_ = 0;
    std::vector<double> values_;
};

/// K-component grid function.
class Field : public NodalArray {
public:
    using NodalArray::NodalArray;

    Field& operator+=(const Field& o) {
        check_same(o);
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
        return *this;
    }
    Field& operator-=(const Field& o) {
        check_same(o);
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
        return *this;
    }
    Field& operator*=(double s) {
        for (double& v : values_) v *= s;
        return *this;
    }
    friend Field operator+(Field a, const Field& b) { return a += b; }
    friend Field operator-(Field a, const Field& b) { return a -= b; }
    friend Field operator*(double s, Field a) { return a *= s; }

    /// this += s * o
    void axpy(double s, const Field& o) {
        check_same(o);
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += s * o.values_[i];
    }

private:
    void check_same(const Field& o) const {
        if (o.nodes_ != nodes_ || o.components_ != components_) throw ShapeError("field arithmetic: shape mismatch");
    }
};

/// Discrete Jacobian: a K x N matrix per node, row-major (component, axis).
class GradField : public NodalArray {
public:
    GradField() = default;
    GradField(std::size_t nodes, std::size_t k, std::size_t n, double fill = 0.0)
        : NodalArray(nodes, k * n, fill), k_(k), n_(n) {}

    std::size_t field_components() const noexcept { return k_; }
    std::size_t axes() const noexcept { return n_; }

    double& operator()(std::size_t node, std::size_t i, std::size_t j) { return values_[(node * k_ + i) * n_ + j]; }
    double operator()(std::size_t node, std::size_t i, std::size_t j) const {
        return values_[(node * k_ + i) * n_ + j];
    }

private:
    std::size_t k_ = 0;
    std::size_t n_ = 0;
};

namespace detail {

inline void require_conforming(const GridSpec& grid, const NodalArray& f, const char* op) {
    if (f.nodes() != grid.node_count())
        throw ShapeError(std::string(op) + ": field has " + std::to_string(f.nodes()) + " nodes, grid has " +
                         std::to_string(grid.node_count()));
}

inline void require_conforming(const GridSpec& grid, const GradField& g, const char* op) {
    require_conforming(grid, static_cast<const NodalArray&>(g), op);
    if (g.axes() != grid.dims()) throw ShapeError(std::string(op) + ": gradient field has wrong axis count");
}

// Calls fn(offset_plus, offset_minus) with node offsets of the two axis-j
// neighbours, or -1 where the neighbour is a boundary ghost.
template <class Fn>
inline void for_neighbours(const GridSpec& grid, std::size_t node, std::size_t j, Fn&& fn) {
    const std::size_t idx = grid.index_along(node, j);
    const std::size_t s = grid.stride(j);
    const long plus = idx + 1 < grid.nodes(j) ? static_cast<long>(node + s) : -1;
    const long minus = idx > 0 ? static_cast<long>(node - s) : -1;
    fn(plus, minus);
}

}  // namespace detail

/// Second-order central Laplacian with zero Dirichlet ghosts.
inline Field laplacian_apply(const GridSpec& grid, const Field& u) {
    detail::require_conforming(grid, u, "laplacian_apply");
    const std::size_t k = u.components();
    Field out(u.nodes(), k);
    for (std::size_t j = 0; j < grid.dims(); ++j) {
        const double inv_h2 = 1.0 / (grid.spacing(j) * grid.spacing(j));
        for (std::size_t node = 0; node < u.nodes(); ++node) {
            detail::for_neighbours(grid, node, j, [&](long plus, long minus) {
                for (std::size_t i = 0; i < k; ++i) {
                    const double up = plus >= 0 ? u(static_cast<std::size_t>(plus), i) : 0.0;
                    const double um = minus >= 0 ? u(static_cast<std::size_t>(minus), i) : 0.0;
                    out(node, i) += (up - 2.0 * u(node, i) + um) * inv_h2;
                }
            });
        }
    }
    return out;
}

/// Central-difference gradient with zero Dirichlet ghosts.
inline GradField gradient(const GridSpec& grid, const Field& u) {
    detail::require_conforming(grid, u, "gradient");
    const std::size_t k = u.components();
    const std::size_t n = grid.dims();
    GradField out(u.nodes(), k, n);
    for (std::size_t j = 0; j < n; ++j) {
        const double inv_2h = 0.5 / grid.spacing(j);
        for (std::size_t node = 0; node < u.nodes(); ++node) {
            detail::for_neighbours(grid, node, j, [&](long plus, long minus) {
                for (std::size_t i = 0; i < k; ++i) {
                    const double up = plus >= 0 ? u(static_cast<std::size_t>(plus), i) : 0.0;
                    const double um = minus >= 0 ? u(static_cast<std::size_t>(minus), i) : 0.0;
                    out(node, i, j) = (up - um) * inv_2h;
                }
            });
        }
    }
    return out;
}

/// Negative adjoint of `gradient` under the cell-volume inner products, so
/// inner(divergence(g), phi) == -inner_grad(g, gradient(phi)).
inline Field divergence(const GridSpec& grid, const GradField& g) {
    detail::require_conforming(grid, g, "divergence");
    const std::size_t k = g.field_components();
    Field out(g.nodes(), k);
    for (std::size_t j = 0; j < grid.dims(); ++j) {
        const double inv_2h = 0.5 / grid.spacing(j);
        for (std::size_t node = 0; node < g.nodes(); ++node) {
            detail::for_neighbours(grid, node, j, [&](long plus, long minus) {
                for (std::size_t i = 0; i < k; ++i) {
                    const double gp = plus >= 0 ? g(static_cast<std::size_t>(plus), i, j) : 0.0;
                    const double gm = minus >= 0 ? g(static_cast<std::size_t>(minus), i, j) : 0.0;
                    out(node, i) += (gp - gm) * inv_2h;
                }
            });
        }
    }
    return out;
}

inline double inner(const GridSpec& grid, const Field& a, const Field& b) {
    detail::require_conforming(grid, a, "inner");
    if (a.nodes() != b.nodes() || a.components() != b.components()) throw ShapeError("inner: shape mismatch");
    double s = 0.0;
    const auto va = a.values();
    const auto vb = b.values();
    for (std::size_t i = 0; i < va.size(); ++i) s += va[i] * vb[i];
    return grid.cell_volume() * s;
}

inline double norm_sq(const GridSpec& grid, const Field& f) { return inner(grid, f, f); }

inline double inner_grad(const GridSpec& grid, const GradField& a, const GradField& b) {
    detail::require_conforming(grid, a, "inner_grad");
    if (a.nodes() != b.nodes() || a.components() != b.components()) throw ShapeError("inner_grad: shape mismatch");
    double s = 0.0;
    const auto va = a.values();
    const auto vb = b.values();
    for (std::size_t i = 0; i < va.size(); ++i) s += va[i] * vb[i];
    return grid.cell_volume() * s;
}

inline double grad_norm_sq(const GridSpec& grid, const GradField& g) { return inner_grad(grid, g, g); }

/// Dirichlet form of the discrete Laplacian, -inner(laplacian_apply(u), u),
/// evaluated as a sum of squared edge differences (ghost edges included) so
/// it is nonnegative to the last bit.
inline double dirichlet_energy(const GridSpec& grid, const Field& u) {
    detail::require_conforming(grid, u, "dirichlet_energy");
    const std::size_t k = u.components();
    double s = 0.0;
    for (std::size_t j = 0; j < grid.dims(); ++j) {
        const double inv_h2 = 1.0 / (grid.spacing(j) * grid.spacing(j));
        double sj = 0.0;
        for (std::size_t node = 0; node < u.nodes(); ++node) {
            detail::for_neighbours(grid, node, j, [&](long plus, long minus) {
                for (std::size_t i = 0; i < k; ++i) {
                    const double up = plus >= 0 ? u(static_cast<std::size_t>(plus), i) : 0.0;
                    const double d = up - u(node, i);
                    sj += d * d;
                    if (minus < 0) sj += u(node, i) * u(node, i);
                }
            });
        }
        s += sj * inv_h2;
    }
    return grid.cell_volume() * s;
}

namespace detail {

// (I - theta L) x = rhs along a 1-D grid, one component at a time.
inline Field thomas_helmholtz(const GridSpec& grid, double theta, const Field& rhs) {
    const std::size_t m = grid.nodes(0);
    const std::size_t k = rhs.components();
    const double off = -theta / (grid.spacing(0) * grid.spacing(0));
    const double diag = 1.0 - 2.0 * off;
    Field out(m, k);
    std::vector<double> c(m), d(m);
    for (std::size_t i = 0; i < k; ++i) {
        double denom = diag;
        c[0] = off / denom;
        d[0] = rhs(0, i) / denom;
        for (std::size_t r = 1; r < m; ++r) {
            denom = diag - off * c[r - 1];
            c[r] = off / denom;
            d[r] = (rhs(r, i) - off * d[r - 1]) / denom;
        }
        out(m - 1, i) = d[m - 1];
        for (std::size_t r = m - 1; r-- > 0;) out(r, i) = d[r] - c[r] * out(r + 1, i);
    }
    return out;
}

// Matrix-free conjugate gradients on the SPD operator I - theta L.
inline Field cg_helmholtz(const GridSpec& grid, double theta, const Field& rhs, double tol) {
    const std::size_t k = rhs.components();
    const std::size_t n = rhs.nodes();
    const std::size_t max_iter = 10 * n + 100;
    Field out(n, k);
    Field x(n, 1), r(n, 1), p(n, 1), b(n, 1);
    auto apply = [&](const Field& v) {
        Field av = laplacian_apply(grid, v);
        av *= -theta;
        av += v;
        return av;
    };
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t node = 0; node < n; ++node) b(node, 0) = rhs(node, i);
        x = b;
        r = b - apply(x);
        p = r;
        const double target = tol * (1.0 + std::sqrt(norm_sq(grid, b)));
        double rr = norm_sq(grid, r);
        std::size_t it = 0;
        while (std::sqrt(rr) > target) {
            if (++it > max_iter)
                throw NonConvergenceError("solve_helmholtz: conjugate gradients did not converge", std::sqrt(rr));
            const Field ap = apply(p);
            const double alpha = rr / inner(grid, p, ap);
            x.axpy(alpha, p);
            r.axpy(-alpha, ap);
            const double rr_next = norm_sq(grid, r);
            const double beta = rr_next / rr;
            rr = rr_next;
            p *= beta;
            p += r;
        }
        for (std::size_t node = 0; node < n; ++node) out(node, i) = x(node, 0);
    }
    return out;
}

}  // namespace detail

/// Solves (I - theta L_h) v = rhs componentwise: a direct tridiagonal solve
/// in 1-D, conjugate gradients otherwise.
inline Field solve_helmholtz(const GridSpec& grid, double theta, const Field& rhs, double tol = 1e-10) {
    detail::require_conforming(grid, rhs, "solve_helmholtz");
    if (!(theta >= 0.0)) throw ValidationError("solve_helmholtz: theta must be nonnegative");
    if (theta == 0.0) return rhs;
    if (grid.dims() == 1) return detail::thomas_helmholtz(grid, theta, rhs);
    return detail::cg_helmholtz(grid, theta, rhs, tol);
}

}  // namespace reflekt
