#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "reflekt/coefficients.hpp"
#include "reflekt/convex_domain.hpp"
#include "reflekt/error.hpp"
#include "reflekt/estimators.hpp"
#include "reflekt/grid.hpp"
#include "reflekt/noise.hpp"
#include "reflekt/stepper.hpp"

namespace reflekt {

using json = nlohmann::json;

/// Raw `key = value` entries. Values are JSON; a value that does not parse
/// as JSON is taken as a bare string.
using ConfigEntries = std::map<std::string, json>;

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline ConfigEntries parse_config_text(const std::string& text) {
    ConfigEntries out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = "config line " + std::to_string(lineno) + ": ";
        std::string body = trim(line);
        if (body.empty() || body[0] == '#') continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw ValidationError(where + "expected `key = value`");
        const std::string key = trim(body.substr(0, eq));
        std::string value = trim(body.substr(eq + 1));
        if (key.empty()) throw ValidationError(where + "empty key");
        for (char c : key)
            if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'))
                throw ValidationError(where + "invalid key '" + key + "'");
        // trailing comment outside strings and brackets
        bool quoted = false;
        for (std::size_t i = 0; i < value.size(); ++i) {
            if (value[i] == '"' && (i == 0 || value[i - 1] != '\\')) quoted = !quoted;
            if (value[i] == '#' && !quoted) {
                value = trim(value.substr(0, i));
                break;
            }
        }
        if (value.empty()) throw ValidationError(where + "missing value for '" + key + "'");
        if (out.count(key)) throw ValidationError(where + "duplicate key '" + key + "'");
        json v = json::parse(value, nullptr, false);
        out[key] = v.is_discarded() ? json(value) : v;
    }
    return out;
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot read config file '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

/// FNV-1a 64 over the canonical `key=value` listing, keys sorted.
inline std::string config_hash(const ConfigEntries& entries) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [k, v] : entries) {
        const std::string line = k + "=" + v.dump() + "\n";
        for (unsigned char c : line) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Validated experiment description. Every block is built and checked
/// once at load time.
struct ExperimentConfig {
    ConfigEntries entries;
    std::string hash;

    GridSpec grid;
    std::optional<ConvexDomain> domain;
    CoefficientSet coeffs;
    std::string initial_kind;
    Field xi;
    NoiseSpec noise;
    StepperConfig stepper;

    std::vector<double> sweep_n;
    std::vector<std::pair<double, double>> gap_pairs;
    bool gap_pairs_explicit = false;
    std::size_t paths = 200;
    std::size_t dt_levels = 3;
    std::size_t check_samples = 10000;
    double support_eps = 0.05;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;

    EnsembleSetup setup() const { return EnsembleSetup{grid, *domain, coeffs, xi, noise, stepper}; }
};

namespace detail {

class Reader {
public:
    explicit Reader(const ConfigEntries& e) : e_(e) {}

    bool has(const std::string& key) {
        used_.insert(key);
        return e_.count(key) > 0;
    }

    double number(const std::string& key, double def) {
        if (!has(key)) return def;
        return as_number(key, e_.at(key));
    }

    std::size_t count(const std::string& key, std::size_t def) {
        if (!has(key)) return def;
        return as_count(key, e_.at(key));
    }

    std::string string(const std::string& key, const std::string& def) {
        if (!has(key)) return def;
        const auto& v = e_.at(key);
        if (!v.is_string()) throw ValidationError(key + ": expected a string");
        return v.get<std::string>();
    }

    std::vector<double> vector(const std::string& key, std::vector<double> def) {
        if (!has(key)) return def;
        return as_vector(key, e_.at(key));
    }

    std::vector<std::vector<double>> matrix(const std::string& key) {
        if (!has(key)) return {};
        const auto& v = e_.at(key);
        if (!v.is_array()) throw ValidationError(key + ": expected an array of arrays");
        std::vector<std::vector<double>> out;
        for (const auto& row : v) out.push_back(as_vector(key, row));
        return out;
    }

    const json* raw(const std::string& key) { return has(key) ? &e_.at(key) : nullptr; }

    void reject_unknown() const {
        std::string unknown;
        for (const auto& [k, v] : e_)
            if (!used_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
        if (!unknown.empty()) throw ValidationError("unknown config keys: " + unknown);
    }

    static double as_number(const std::string& key, const json& v) {
        if (!v.is_number()) throw ValidationError(key + ": expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ValidationError(key + ": non-finite number");
        return d;
    }

    static std::size_t as_count(const std::string& key, const json& v) {
        if (!v.is_number_unsigned()) throw ValidationError(key + ": expected a nonnegative integer");
        return v.get<std::uint64_t>();
    }

    static std::vector<double> as_vector(const std::string& key, const json& v) {
        if (v.is_number()) return {as_number(key, v)};
        if (!v.is_array()) throw ValidationError(key + ": expected a number or an array of numbers");
        std::vector<double> out;
        for (const auto& x : v) out.push_back(as_number(key, x));
        return out;
    }

private:
    const ConfigEntries& e_;
    std::set<std::string> used_;
};

inline std::vector<double> flatten(const std::string& key, const std::vector<std::vector<double>>& rows,
                                   std::size_t r, std::size_t c) {
    if (rows.empty()) return {};
    if (rows.size() != r) throw ValidationError(key + ": expected " + std::to_string(r) + " rows");
    std::vector<double> out;
    for (const auto& row : rows) {
        if (row.size() != c) throw ValidationError(key + ": expected " + std::to_string(c) + " columns");
        out.insert(out.end(), row.begin(), row.end());
    }
    return out;
}

inline GridSpec read_grid(Reader& r) {
    const std::size_t dims = r.count("grid.n_dims", 1);
    if (dims < 1 || dims > GridSpec::max_dims)
        throw ValidationError("grid.n_dims must be between 1 and " + std::to_string(GridSpec::max_dims));
    std::vector<std::vector<double>> extent(dims, {0.0, 1.0});
    if (const json* e = r.raw("grid.extent")) {
        if (e->is_array() && !e->empty() && (*e)[0].is_number()) {
            extent = {Reader::as_vector("grid.extent", *e)};
        } else {
            extent = r.matrix("grid.extent");
        }
    }
    std::vector<double> nodes(dims, 64.0);
    if (const json* n = r.raw("grid.nodes")) {
        nodes.clear();
        if (n->is_array())
            for (const auto& x : *n) nodes.push_back(static_cast<double>(Reader::as_count("grid.nodes", x)));
        else
            nodes.push_back(static_cast<double>(Reader::as_count("grid.nodes", *n)));
    }
    if (extent.size() != dims || nodes.size() != dims)
        throw ValidationError("grid.extent and grid.nodes need one entry per axis");
    std::vector<Axis> axes;
    for (std::size_t j = 0; j < dims; ++j) {
        if (extent[j].size() != 2) throw ValidationError("grid.extent: each axis needs [a, b]");
        axes.push_back(Axis{extent[j][0], extent[j][1], static_cast<std::size_t>(nodes[j])});
    }
    return GridSpec(axes);
}

inline ConvexDomain read_domain(Reader& r) {
    const std::string kind = r.string("domain.kind", "ball");
    const std::size_t k = r.count("domain.k", 2);
    if (kind == "ball") {
        return ConvexDomain::ball(r.vector("domain.center", std::vector<double>(k, 0.0)), r.number("domain.radius", 1.0));
    }
    if (kind == "box") {
        return ConvexDomain::box(r.vector("domain.lo", std::vector<double>(k, -1.0)),
                                 r.vector("domain.hi", std::vector<double>(k, 1.0)));
    }
    if (kind == "polytope") {
        const json* hs = r.raw("domain.halfspaces");
        if (!hs || !hs->is_array()) throw ValidationError("domain.halfspaces: expected [[normal, offset], ...]");
        std::vector<Halfspace> out;
        for (const auto& h : *hs) {
            if (!h.is_array() || h.size() != 2)
                throw ValidationError("domain.halfspaces: each entry must be [normal, offset]");
            out.push_back(Halfspace{Reader::as_vector("domain.halfspaces", h[0]),
                                    Reader::as_number("domain.halfspaces", h[1])});
        }
        return ConvexDomain::polytope(std::move(out));
    }
    throw ValidationError("domain.kind must be ball, box or polytope");
}

inline CoefficientSet read_coefficients(Reader& r, std::size_t k, std::size_t n, std::size_t m) {
    const std::string name = r.string("coefficients.name", "zero");
    DeclaredConstants declared;
    declared.c = r.number("coefficients.c", 0.0);
    declared.alpha = r.number("coefficients.alpha", 0.0);
    declared.beta = r.number("coefficients.beta", 0.0);
    declared.gamma_trace = r.number("coefficients.gamma_trace", 0.0);
    if (name == "zero") return make_zero_set(k, n, m);
    if (name == "drift_out") {
        auto d = r.vector("coefficients.drift", default_outward_drift(k));
        if (d.size() != k) throw ValidationError("coefficients.drift must have K entries");
        return make_drift_out_set(k, n, m, d);
    }
    if (name == "bounded_smooth") {
        BoundedSmoothParams p;
        p.drive = r.vector("coefficients.drift", {});
        if (!p.drive.empty() && p.drive.size() != k) throw ValidationError("coefficients.drift must have K entries");
        return make_bounded_smooth_set(k, n, m, p);
    }
    if (name == "linear") {
        LinearParams p;
        p.f_matrix = flatten("coefficients.f_matrix", r.matrix("coefficients.f_matrix"), k, k);
        p.f_offset = r.vector("coefficients.f_offset", {});
        if (!p.f_offset.empty() && p.f_offset.size() != k)
            throw ValidationError("coefficients.f_offset must have K entries");
        p.g_matrix = flatten("coefficients.g_matrix", r.matrix("coefficients.g_matrix"), n, n);
        p.h_matrix = flatten("coefficients.h_matrix", r.matrix("coefficients.h_matrix"), n, m);
        p.declared = declared;
        return make_linear_set(k, n, m, p);
    }
    throw ValidationError("coefficients.name must be zero, drift_out, bounded_smooth or linear");
}

inline Field read_initial(Reader& r, const GridSpec& grid, const ConvexDomain& domain, std::string& kind) {
    kind = r.string("initial.kind", "zero");
    const std::size_t k = domain.dim();
    InitialCondition ic;
    if (kind == "zero") {
        ic = make_zero_initial();
    } else if (kind == "constant" || kind == "sine") {
        auto v = r.vector("initial.value", std::vector<double>(k, 0.0));
        if (v.size() != k) throw ValidationError("initial.value must have K entries");
        ic = kind == "constant" ? make_constant_initial(v) : make_sine_initial(grid, v);
    } else {
        throw ValidationError("initial.kind must be zero, constant or sine");
    }
    // xi has to start in the closed domain; sample_initial would silently project
    Field raw(grid.node_count(), k);
    std::vector<double> x(grid.dims());
    for (std::size_t node = 0; node < grid.node_count(); ++node) {
        grid.coordinates(node, x);
        ic.xi(x, raw.at(node));
        if (!vec::all_finite(raw.at(node))) throw ValidationError("initial condition: non-finite value");
        if (distance_sq(domain, raw.at(node)) > 1e-24)
            throw ValidationError("initial condition leaves the domain at node " + std::to_string(node));
    }
    return sample_initial(grid, domain, ic);
}

}  // namespace detail

/// Builds and validates the whole experiment: grid, domain (origin interior),
/// coefficient hypotheses, initial condition in the closed domain, time grid
/// and sweep settings. Unknown keys are rejected.
inline ExperimentConfig build_config(const ConfigEntries& entries) {
    detail::Reader r(entries);
    ExperimentConfig c;
    c.entries = entries;
    c.hash = config_hash(entries);

    if (r.has("seed")) c.seed = detail::Reader::as_count("seed", entries.at("seed"));

    c.grid = detail::read_grid(r);
    c.domain = detail::read_domain(r);
    const std::size_t k = c.domain->dim();

    c.noise.m = r.count("noise.m", 1);
    c.noise.horizon = r.number("time.horizon", 1.0);
    c.noise.steps = r.count("time.steps", 256);
    c.noise.validate();

    c.coeffs = detail::read_coefficients(r, k, c.grid.dims(), c.noise.m);
    validate_hypotheses(c.coeffs);
    ProbeRegion region;
    region.t_max = c.noise.horizon;
    for (std::size_t j = 0; j < c.grid.dims(); ++j) {
        region.x_lo.push_back(c.grid.axis(j).a);
        region.x_hi.push_back(c.grid.axis(j).b);
    }
    const auto lip = probe_lipschitz(c.coeffs, r.count("coefficients.probe_samples", 2000), 0, region);
    if (lip.exceeds_declared)
        throw ValidationError("coefficients: sampled Lipschitz ratios exceed the declared constants");
    if (!check_trace_condition(c.coeffs, 200, 1, region).passed)
        throw ValidationError("coefficients: trace condition fails for the declared gamma_trace");

    c.xi = detail::read_initial(r, c.grid, *c.domain, c.initial_kind);

    c.stepper.dt = c.noise.dt();
    c.stepper.scheme = parse_scheme(r.string("stepper.scheme", "penalized"));
    c.stepper.penalty_n = r.number("stepper.penalty_n", 64.0);
    c.stepper.solver_tol = r.number("stepper.solver_tol", 1e-10);
    c.stepper.save_stride = r.count("output.save_stride", 1);
    c.stepper.validate();

    c.sweep_n = r.vector("sweep.n_values", {4.0, 16.0, 64.0, 256.0});
    if (c.sweep_n.empty()) throw ValidationError("sweep.n_values must not be empty");
    for (double n : c.sweep_n)
        if (!(n >= 0.0)) throw ValidationError("sweep.n_values must be nonnegative");
    if (const json* gp = r.raw("sweep.gap_pairs")) {
        c.gap_pairs_explicit = true;
        if (!gp->is_array()) throw ValidationError("sweep.gap_pairs: expected [[n, m], ...]");
        for (const auto& row : *gp) {
            const auto v = detail::Reader::as_vector("sweep.gap_pairs", row);
            if (v.size() != 2 || v[0] < 0.0 || v[1] < 0.0)
                throw ValidationError("sweep.gap_pairs: each entry must be [n, m] with n, m >= 0");
            c.gap_pairs.emplace_back(v[0], v[1]);
        }
    } else {
        for (std::size_t i = 0; i + 1 < c.sweep_n.size(); ++i) c.gap_pairs.emplace_back(c.sweep_n[i], c.sweep_n[i + 1]);
    }
    c.paths = r.count("sweep.paths", 200);
    if (c.paths < 1) throw ValidationError("sweep.paths must be >= 1");
    c.dt_levels = r.count("sweep.dt_levels", 3);
    if (c.dt_levels < 1) throw ValidationError("sweep.dt_levels must be >= 1");
    c.check_samples = r.count("check.samples", 10000);
    if (c.check_samples < 1) throw ValidationError("check.samples must be >= 1");
    c.support_eps = r.number("output.support_eps", 0.05);
    c.out_dir = r.string("output.dir", "out");

    r.reject_unknown();
    return c;
}

inline ExperimentConfig load_config(const std::string& path) { return build_config(parse_config_text(read_file(path))); }

}  // namespace reflekt
