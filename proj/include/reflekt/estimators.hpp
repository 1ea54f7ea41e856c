#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "reflekt/coefficients.hpp"
#include "reflekt/convex_domain.hpp"
#include "reflekt/error.hpp"
#include "reflekt/grid.hpp"
#include "reflekt/noise.hpp"
#include "reflekt/stepper.hpp"

namespace reflekt {

/// Everything one path needs besides its index.
struct EnsembleSetup {
    GridSpec grid;
    ConvexDomain domain;
    CoefficientSet coeffs;
    Field xi;
    NoiseSpec noise;
    StepperConfig stepper;

    /// Stepper config with dt tied to the noise grid.
    StepperConfig stepper_for(double penalty_n, Scheme scheme) const {
        StepperConfig c = stepper;
        c.dt = noise.dt();
        c.penalty_n = penalty_n;
        c.scheme = scheme;
        return c;
    }
};

struct EstimateReport {
    std::string statistic;
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t paths = 0;               // survivors used
    std::vector<std::size_t> failed;     // indices of aborted paths
    std::vector<double> values;          // per surviving path, in index order
};

// ---------------------------------------------------------------------------
// Deterministic parallel evaluation

/// Sum in a fixed pairwise tree over the index range.
inline double pairwise_sum(const double* v, std::size_t n) {
    if (n == 0) return 0.0;
    if (n == 1) return v[0];
    const std::size_t half = n / 2;
    return pairwise_sum(v, half) + pairwise_sum(v + half, n - half);
}

inline double pairwise_sum(const std::vector<double>& v) { return pairwise_sum(v.data(), v.size()); }

/// Mean and standard error sd / sqrt(P) with the pairwise reduction.
inline EstimateReport summarize(std::string statistic, std::vector<double> values, std::vector<std::size_t> failed = {}) {
    EstimateReport r;
    r.statistic = std::move(statistic);
    r.paths = values.size();
    r.failed = std::move(failed);
    if (r.paths == 0) throw Error("summarize: no surviving paths for " + r.statistic);
    r.mean = pairwise_sum(values) / static_cast<double>(r.paths);
    if (r.paths < 2) {
        r.std_error = std::numeric_limits<double>::infinity();
    } else {
        std::vector<double> dev(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) dev[i] = (values[i] - r.mean) * (values[i] - r.mean);
        const double var = pairwise_sum(dev) / static_cast<double>(r.paths - 1);
        r.std_error = std::sqrt(var / static_cast<double>(r.paths));
    }
    r.values = std::move(values);
    return r;
}

inline std::size_t resolve_workers(std::size_t workers) {
    if (workers > 0) return workers;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

/// Evaluates fn(index) for index in [0, count) on `workers` threads. Paths
/// that abort with BlowUpError or NonConvergenceError come back empty; any
/// other exception is rethrown after all workers stop.
template <class Result>
std::vector<std::optional<Result>> run_paths(std::size_t count, std::size_t workers,
                                             const std::function<Result(std::size_t)>& fn) {
    std::vector<std::optional<Result>> out(count);
    std::vector<std::exception_ptr> fatal(count);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                out[i] = fn(i);
            } catch (const BlowUpError&) {
            } catch (const NonConvergenceError&) {
            } catch (...) {
                fatal[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min(resolve_workers(workers), std::max<std::size_t>(count, 1));
    if (threads <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    for (const auto& e : fatal)
        if (e) std::rethrow_exception(e);
    return out;
}

/// Survivor policy: statistics use surviving paths only if at least 90% of
/// them survived.
template <class Result>
std::pair<std::vector<Result>, std::vector<std::size_t>> survivors(std::vector<std::optional<Result>> results) {
    std::vector<Result> ok;
    std::vector<std::size_t> failed;
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (results[i])
            ok.push_back(std::move(*results[i]));
        else
            failed.push_back(i);
    }
    if (10 * ok.size() < 9 * results.size()) {
        std::string list;
        for (std::size_t i = 0; i < failed.size() && i < 20; ++i) list += (i ? "," : "") + std::to_string(failed[i]);
        throw Error("ensemble: only " + std::to_string(ok.size()) + " of " + std::to_string(results.size()) +
                    " paths survived (failed: " + list + (failed.size() > 20 ? ",..." : "") + ")");
    }
    return {std::move(ok), std::move(failed)};
}

// ---------------------------------------------------------------------------
// Per-path functionals

/// Functionals of one simulated path. Time integrals are right-point sums
/// over the post-step states k = 1..S.
struct PathFunctionals {
    double sup_energy = 0.0;         // max_k |u_k|^2
    double gradient_energy = 0.0;    // sum dt |grad u_k|^2
    double penalty_energy = 0.0;     // sum dt |u_k - pi(u_k)|^2
    double sup_distance = 0.0;       // max_k |u_k - pi(u_k)|^2
    double variation = 0.0;          // Var(nu)
    double penalty_l2_integral = 0.0;  // sum dt |u_k - pi(u_k)|
    double l1_integral = 0.0;        // sum dt int |u_k - pi(u_k)| dx
    double nu_pair = 0.0;            // pair(nu, u)
    double ledger_residual = 0.0;    // final-time energy ledger residual
};

inline PathFunctionals path_functionals(const Simulation& sim, const CoefficientSet& coeffs, const NoisePath& noise) {
    const auto& tr = sim.trajectory;
    PathFunctionals pf;
    for (std::size_t k = 0; k < tr.records.size(); ++k) {
        const auto& r = tr.records[k];
        pf.sup_energy = std::max(pf.sup_energy, r.norm_sq);
        pf.sup_distance = std::max(pf.sup_distance, r.phi);
        if (k == 0) continue;
        pf.gradient_energy += tr.dt * r.grad_norm_sq;
        pf.penalty_energy += tr.dt * r.phi;
        pf.penalty_l2_integral += tr.dt * r.penalty_l2;
        pf.l1_integral += tr.dt * r.penalty_l1;
    }
    for (const auto& inc : tr.increments) pf.nu_pair += inc.nu_pair;
    pf.variation = sim.measure.total_variation();
    pf.ledger_residual = energy_ledger(tr, coeffs, noise, sim.measure).back();
    return pf;
}

inline Simulation simulate_path(const EnsembleSetup& s, const StepperConfig& cfg, const NoisePath& noise) {
    return simulate(s.xi, s.coeffs, noise, cfg, s.domain, s.grid);
}

/// Reports of every per-path functional at one stepper setting.
struct EnsembleReport {
    double penalty_n = 0.0;
    Scheme scheme = Scheme::penalized;
    EstimateReport sup_energy;
    EstimateReport gradient_energy;
    EstimateReport penalty_energy;         // E[sum dt |u - pi(u)|^2]
    EstimateReport scaled_penalty_energy;  // E[n sum dt |u - pi(u)|^2]
    EstimateReport sup_distance;
    EstimateReport variation;
    EstimateReport variation_l2;           // E[(n sum dt |u - pi(u)|)^2]
    EstimateReport nu_pair;
    EstimateReport ledger_residual;        // E|residual(T)|
    std::vector<std::size_t> failed;
};

inline EnsembleReport estimate_ensemble(const EnsembleSetup& s, double penalty_n, Scheme scheme, std::size_t paths,
                                        std::size_t workers = 1) {
    const StepperConfig cfg = s.stepper_for(penalty_n, scheme);
    cfg.validate();
    auto results = run_paths<PathFunctionals>(paths, workers, [&](std::size_t i) {
        const NoisePath noise = sample_path(s.noise, i);
        return path_functionals(simulate_path(s, cfg, noise), s.coeffs, noise);
    });
    auto [ok, failed] = survivors(std::move(results));
    auto collect = [&](auto getter) {
        std::vector<double> v;
        v.reserve(ok.size());
        for (const auto& p : ok) v.push_back(getter(p));
        return v;
    };
    const double n = penalty_n;
    EnsembleReport r;
    r.penalty_n = penalty_n;
    r.scheme = scheme;
    r.failed = failed;
    r.sup_energy = summarize("sup_energy", collect([](const PathFunctionals& p) { return p.sup_energy; }), failed);
    r.gradient_energy =
        summarize("gradient_energy", collect([](const PathFunctionals& p) { return p.gradient_energy; }), failed);
    r.penalty_energy =
        summarize("penalty_energy", collect([](const PathFunctionals& p) { return p.penalty_energy; }), failed);
    r.scaled_penalty_energy = summarize(
        "scaled_penalty_energy", collect([n](const PathFunctionals& p) { return n * p.penalty_energy; }), failed);
    r.sup_distance = summarize("sup_distance", collect([](const PathFunctionals& p) { return p.sup_distance; }), failed);
    r.variation = summarize("variation", collect([](const PathFunctionals& p) { return p.variation; }), failed);
    r.variation_l2 = summarize("variation_l2", collect([n](const PathFunctionals& p) {
                                   const double v = n * p.penalty_l2_integral;
                                   return v * v;
                               }),
                               failed);
    r.nu_pair = summarize("nu_pair", collect([](const PathFunctionals& p) { return p.nu_pair; }), failed);
    r.ledger_residual = summarize(
        "ledger_residual", collect([](const PathFunctionals& p) { return std::abs(p.ledger_residual); }), failed);
    return r;
}

/// E[sup_t |u_t|^2] and E[int |grad u|^2 dt].
inline std::pair<EstimateReport, EstimateReport> estimate_energy(const EnsembleSetup& s, std::size_t paths,
                                                                 std::size_t workers = 1) {
    auto r = estimate_ensemble(s, s.stepper.penalty_n, s.stepper.scheme, paths, workers);
    return {r.sup_energy, r.gradient_energy};
}

/// E[n sum dt |u - pi(u)|^2].
inline EstimateReport estimate_penalty_energy(const EnsembleSetup& s, std::size_t paths, std::size_t workers = 1) {
    return estimate_ensemble(s, s.stepper.penalty_n, s.stepper.scheme, paths, workers).scaled_penalty_energy;
}

/// E[sup_t |u_t - pi(u_t)|^2].
inline EstimateReport estimate_sup_distance(const EnsembleSetup& s, std::size_t paths, std::size_t workers = 1) {
    return estimate_ensemble(s, s.stepper.penalty_n, s.stepper.scheme, paths, workers).sup_distance;
}

/// E[Var(nu)] and E[(n int |u - pi(u)| dt)^2].
inline std::pair<EstimateReport, EstimateReport> estimate_variation(const EnsembleSetup& s, std::size_t paths,
                                                                    std::size_t workers = 1) {
    auto r = estimate_ensemble(s, s.stepper.penalty_n, s.stepper.scheme, paths, workers);
    return {r.variation, r.variation_l2};
}

// ---------------------------------------------------------------------------
// Coupled comparisons

/// A stepper setting in a coupled comparison.
struct Setting {
    double penalty_n = 0.0;
    Scheme scheme = Scheme::penalized;
};

struct GapReport {
    Setting a, b;
    EstimateReport cauchy;   // E[sup |u^a - u^b|^2] + E[sum dt |grad(u^a - u^b)|^2]
    EstimateReport pairing;  // E|pair(nu^a, u^a) - pair(nu^b, u^b)|
};

struct GapFunctionals {
    double cauchy = 0.0;
    double pairing = 0.0;
};

/// Both settings are driven by the same noise path for each path index.
inline GapFunctionals coupled_gap(const EnsembleSetup& s, const Setting& a, const Setting& b, const NoisePath& noise) {
    const auto sa = simulate_path(s, s.stepper_for(a.penalty_n, a.scheme), noise);
    const auto sb = simulate_path(s, s.stepper_for(b.penalty_n, b.scheme), noise);
    const auto& ua = sa.trajectory.states();
    const auto& ub = sb.trajectory.states();
    GapFunctionals g;
    double sup = 0.0, grad = 0.0;
    for (std::size_t k = 0; k < ua.size(); ++k) {
        const Field d = ua[k] - ub[k];
        sup = std::max(sup, norm_sq(s.grid, d));
        if (k > 0) grad += sa.trajectory.dt * grad_norm_sq(s.grid, gradient(s.grid, d));
    }
    g.cauchy = sup + grad;
    double pa = 0.0, pb = 0.0;
    for (const auto& inc : sa.trajectory.increments) pa += inc.nu_pair;
    for (const auto& inc : sb.trajectory.increments) pb += inc.nu_pair;
    g.pairing = std::abs(pa - pb);
    return g;
}

inline GapReport estimate_scheme_gap(const EnsembleSetup& s, const Setting& a, const Setting& b, std::size_t paths,
                                     std::size_t workers = 1) {
    StepperConfig full = s.stepper;
    full.save_stride = 1;
    EnsembleSetup local = s;
    local.stepper = full;
    auto results = run_paths<GapFunctionals>(paths, workers, [&](std::size_t i) {
        return coupled_gap(local, a, b, sample_path(s.noise, i));
    });
    auto [ok, failed] = survivors(std::move(results));
    std::vector<double> c, p;
    for (const auto& g : ok) {
        c.push_back(g.cauchy);
        p.push_back(g.pairing);
    }
    GapReport r;
    r.a = a;
    r.b = b;
    r.cauchy = summarize("cauchy_gap", std::move(c), failed);
    r.pairing = summarize("measure_pairing_gap", std::move(p), failed);
    return r;
}

/// Penalized gaps for each (n, m) pair.
inline std::vector<GapReport> estimate_cauchy_gap(const EnsembleSetup& s, std::size_t paths,
                                                  const std::vector<std::pair<double, double>>& n_pairs,
                                                  std::size_t workers = 1) {
    std::vector<GapReport> out;
    for (const auto& [n, m] : n_pairs)
        out.push_back(estimate_scheme_gap(s, {n, Scheme::penalized}, {m, Scheme::penalized}, paths, workers));
    return out;
}

inline std::vector<GapReport> estimate_measure_pairing_gap(const EnsembleSetup& s, std::size_t paths,
                                                           const std::vector<std::pair<double, double>>& n_pairs,
                                                           std::size_t workers = 1) {
    return estimate_cauchy_gap(s, paths, n_pairs, workers);
}

// ---------------------------------------------------------------------------
// Rate fits

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

/// Least squares of log(value) on log(n).
inline RateFit fit_rate(const std::vector<double>& ns, const std::vector<double>& values) {
    if (ns.size() != values.size() || ns.size() < 2)
        throw ValidationError("fit_rate: need at least two (n, value) pairs of equal length");
    const std::size_t m = ns.size();
    std::vector<double> x(m), y(m);
    for (std::size_t i = 0; i < m; ++i) {
        if (!(ns[i] > 0.0) || !(values[i] > 0.0)) throw ValidationError("fit_rate: n and values must be positive");
        x[i] = std::log(ns[i]);
        y[i] = std::log(values[i]);
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= m;
    my /= m;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw ValidationError("fit_rate: all n are equal");
    RateFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
    return f;
}

/// max / min of positive values; infinity when some value is 0.
inline double spread_ratio(const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    if (*lo <= 0.0) return std::numeric_limits<double>::infinity();
    return *hi / *lo;
}

}  // namespace reflekt
