#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "reflekt/convex_domain.hpp"
#include "reflekt/error.hpp"
#include "reflekt/grid.hpp"
#include "reflekt/vec.hpp"

namespace reflekt {

/// Discrete reflection measure: a K-vector per (time step, interior node),
/// stored sparsely. The cell of step k already carries the factor dt * vol
/// and pairs with the post-step state u_{k+1}.
class ReflectionMeasure {
public:
    struct Cell {
        std::size_t step;
        std::size_t node;
    };

    ReflectionMeasure() = default;
    ReflectionMeasure(std::size_t components, std::size_t steps, std::size_t nodes)
        : k_(components), steps_(steps), nodes_(nodes) {}

    std::size_t components() const noexcept { return k_; }
    std::size_t steps() const noexcept { return steps_; }
    std::size_t nodes() const noexcept { return nodes_; }
    std::size_t active_cells() const noexcept { return cells_.size(); }
    bool empty() const noexcept { return cells_.empty(); }

    const Cell& cell(std::size_t i) const { return cells_[i]; }
    std::span<const double> value(std::size_t i) const { return {values_.data() + i * k_, k_}; }

    /// Appends a cell; steps must be added in nondecreasing order. Zero
    /// vectors are dropped.
    void add(std::size_t step, std::size_t node, std::span<const double> v) {
        vec::require_size(v, k_, "measure cell");
        if (step >= steps_ || node >= nodes_) throw ShapeError("measure cell: index out of range");
        if (!cells_.empty() && step < cells_.back().step) throw ValidationError("measure cell: steps out of order");
        if (!vec::all_finite(v)) throw ValidationError("measure cell: non-finite value");
        bool zero = true;
        for (double x : v) zero = zero && x == 0.0;
        if (zero) return;
        cells_.push_back({step, node});
        values_.insert(values_.end(), v.begin(), v.end());
        total_variation_ += vec::norm(v);
    }

    /// Sum of |cell| over cells.
    double total_variation() const noexcept { return total_variation_; }

private:
    std::size_t k_ = 0;
    std::size_t steps_ = 0;
    std::size_t nodes_ = 0;
    std::vector<Cell> cells_;
    std::vector<double> values_;
    double total_variation_ = 0.0;
};

inline double total_variation(const ReflectionMeasure& m) { return m.total_variation(); }

namespace detail {

inline void require_state_trajectory(const ReflectionMeasure& m, const std::vector<Field>& phi, const char* op) {
    if (phi.size() != m.steps() + 1)
        throw ShapeError(std::string(op) + ": expected " + std::to_string(m.steps() + 1) + " states, got " +
                         std::to_string(phi.size()));
    for (const auto& f : phi)
        if (f.nodes() != m.nodes() || f.components() != m.components())
            throw ShapeError(std::string(op) + ": state shape does not match the measure");
}

}  // namespace detail

/// Sum over cells of phi_{k+1}(node) . nu_k(node). `phi` holds states 0..S.
inline double pair(const ReflectionMeasure& m, const std::vector<Field>& phi) {
    detail::require_state_trajectory(m, phi, "pair");
    double s = 0.0;
    for (std::size_t i = 0; i < m.active_cells(); ++i) {
        const auto& c = m.cell(i);
        s += vec::dot(phi[c.step + 1].at(c.node), m.value(i));
    }
    return s;
}

struct MinimalityResult {
    double value = 0.0;          // pair(nu, u - phi)
    double normalization = 0.0;  // total_variation * max |u - phi| over active cells
};

/// pair(nu, u - phi) for a closure-of-D valued test trajectory phi; rejects
/// phi with node values outside the closure (distance_sq above `tolerance`).
inline MinimalityResult minimality_check(const ReflectionMeasure& m, const std::vector<Field>& u,
                                         const std::vector<Field>& phi, const ConvexDomain& domain,
                                         double tolerance = 1e-20) {
    detail::require_state_trajectory(m, u, "minimality_check");
    detail::require_state_trajectory(m, phi, "minimality_check");
    for (const auto& f : phi)
        for (std::size_t node = 0; node < f.nodes(); ++node)
            if (distance_sq(domain, f.at(node)) > tolerance)
                throw ValidationError("minimality_check: test trajectory leaves the closure of D");
    MinimalityResult r;
    double max_gap = 0.0;
    std::vector<double> d(m.components());
    for (std::size_t i = 0; i < m.active_cells(); ++i) {
        const auto& c = m.cell(i);
        const auto uu = u[c.step + 1].at(c.node);
        const auto pp = phi[c.step + 1].at(c.node);
        for (std::size_t k = 0; k < d.size(); ++k) d[k] = uu[k] - pp[k];
        r.value += vec::dot(d, m.value(i));
        max_gap = std::max(max_gap, vec::norm(d));
    }
    r.normalization = m.total_variation() * max_gap;
    return r;
}

/// Fraction of the |nu| mass sitting on cells whose post-step state is within
/// epsilon of D. Defined as 1 for an empty measure.
inline double support_profile(const ReflectionMeasure& m, const std::vector<Field>& u, const ConvexDomain& domain,
                              double epsilon) {
    detail::require_state_trajectory(m, u, "support_profile");
    if (m.empty() || m.total_variation() == 0.0) return 1.0;
    double near = 0.0;
    for (std::size_t i = 0; i < m.active_cells(); ++i) {
        const auto& c = m.cell(i);
        if (distance_sq(domain, u[c.step + 1].at(c.node)) <= epsilon * epsilon) near += vec::norm(m.value(i));
    }
    return std::min(1.0, near / m.total_variation());
}

}  // namespace reflekt
