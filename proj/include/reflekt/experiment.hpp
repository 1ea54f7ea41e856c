#pragma once

#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "reflekt/config.hpp"
#include "reflekt/estimators.hpp"
#include "reflekt/reflection_measure.hpp"
#include "reflekt/stepper.hpp"

namespace reflekt {

inline constexpr const char* code_version = "reflekt 0.1.0";

/// %.17g: round-trips every double.
inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Number or null for JSON summaries.
inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

enum class SeedSource { flag, config, environment, fallback };

inline std::string_view to_string(SeedSource s) {
    switch (s) {
        case SeedSource::flag: return "flag";
        case SeedSource::config: return "config";
        case SeedSource::environment: return "environment";
        default: return "default";
    }
}

struct ResolvedSeed {
    std::uint64_t value = 0;
    SeedSource source = SeedSource::fallback;
};

/// --seed, then the config `seed`, then REFLEKT_SEED, then 0.
inline ResolvedSeed resolve_seed(std::optional<std::uint64_t> flag, std::optional<std::uint64_t> config,
                                 const char* env = std::getenv("REFLEKT_SEED")) {
    if (flag) return {*flag, SeedSource::flag};
    if (config) return {*config, SeedSource::config};
    if (env && *env) {
        char* end = nullptr;
        errno = 0;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (errno != 0 || *end != '\0' || env[0] == '-')
            throw ValidationError("REFLEKT_SEED must be an unsigned integer");
        return {static_cast<std::uint64_t>(v), SeedSource::environment};
    }
    return {0, SeedSource::fallback};
}

struct RunContext {
    ResolvedSeed seed;
    std::size_t workers = 1;
    std::filesystem::path out_dir;
};

/// Files produced by a command, relative to the output directory.
struct CommandResult {
    int exit_code = 0;
    std::vector<std::string> outputs;
    std::vector<std::string> notes;
};

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path) {
        if (!out_) throw Error("cannot write " + path.string());
        row(header);
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

inline void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

inline std::string iso_time(std::chrono::system_clock::time_point t) {
    const std::time_t tt = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Writes manifest.json through a temporary file and a rename.
inline void write_manifest(const std::filesystem::path& dir, const json& manifest) {
    const auto tmp = dir / "manifest.json.tmp";
    write_json(tmp, manifest);
    std::filesystem::rename(tmp, dir / "manifest.json");
}

inline EnsembleSetup seeded_setup(const ExperimentConfig& c, const RunContext& ctx) {
    EnsembleSetup s = c.setup();
    s.noise.master_seed = ctx.seed.value;
    return s;
}

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Commands

inline CommandResult cmd_check_domain(const ExperimentConfig& c, const RunContext& ctx) {
    const auto report = check_projection_properties(*c.domain, c.check_samples, ctx.seed.value);
    json j;
    j["kind"] = std::string(c.domain->kind());
    j["samples"] = report.samples;
    j["delta"] = num(report.delta);
    j["gamma_cone"] = num(report.gamma_cone);
    j["tolerance"] = report.tolerance;
    j["margins"] = json::array();
    for (const auto& p : report.properties)
        j["margins"].push_back({{"property", p.name}, {"worst_margin", num(p.worst_margin)}, {"witness", p.witness_x}});
    j["passed"] = report.passed();
    write_json(ctx.out_dir / "check_domain.json", j);
    CommandResult r{report.passed() ? 0 : 1, {"check_domain.json"}, {}};
    if (!report.passed()) r.notes.push_back("projection property violated");
    return r;
}

inline CommandResult cmd_simulate(const ExperimentConfig& c, const RunContext& ctx) {
    const auto s = seeded_setup(c, ctx);
    const NoisePath noise = sample_path(s.noise, 0);
    const Simulation sim = simulate(s.xi, s.coeffs, noise, s.stepper, s.domain, s.grid);
    const auto& tr = sim.trajectory;
    const auto residual = energy_ledger(tr, s.coeffs, noise, sim.measure);

    CommandResult r;
    {
        CsvWriter w(ctx.out_dir / "trajectory.csv",
                    {"step", "time", "norm_sq", "grad_norm_sq", "phi", "penalty_l1", "penalty_l2", "ledger_residual"});
        for (std::size_t k = 0; k < tr.records.size(); ++k) {
            const auto& rec = tr.records[k];
            w.row({std::to_string(rec.step), fmt(rec.time), fmt(rec.norm_sq), fmt(rec.grad_norm_sq), fmt(rec.phi),
                   fmt(rec.penalty_l1), fmt(rec.penalty_l2), fmt(residual[k])});
        }
    }
    r.outputs.push_back("trajectory.csv");
    {
        std::vector<std::string> header{"step", "node_index"};
        for (std::size_t j = 0; j < s.grid.dims(); ++j) header.push_back("x_" + std::to_string(j + 1));
        header.insert(header.end(), {"component", "value"});
        CsvWriter w(ctx.out_dir / "fields.csv", header);
        for (std::size_t i = 0; i < tr.saved.size(); ++i) {
            const Field& f = tr.saved[i];
            for (std::size_t node = 0; node < f.nodes(); ++node) {
                const auto x = s.grid.coordinates(node);
                for (std::size_t comp = 0; comp < f.components(); ++comp) {
                    std::vector<std::string> row{std::to_string(tr.saved_steps[i]), std::to_string(node)};
                    for (double xj : x) row.push_back(fmt(xj));
                    row.push_back(std::to_string(comp));
                    row.push_back(fmt(f(node, comp)));
                    w.row(row);
                }
            }
        }
    }
    r.outputs.push_back("fields.csv");
    {
        CsvWriter w(ctx.out_dir / "measure.csv", {"step", "node_index", "component", "value"});
        const auto& m = sim.measure;
        for (std::size_t i = 0; i < m.active_cells(); ++i) {
            const auto cell = m.cell(i);
            const auto v = m.value(i);
            for (std::size_t comp = 0; comp < v.size(); ++comp)
                w.row({std::to_string(cell.step), std::to_string(cell.node), std::to_string(comp), fmt(v[comp])});
        }
    }
    r.outputs.push_back("measure.csv");
    json summary;
    summary["total_variation"] = num(sim.measure.total_variation());
    summary["active_cells"] = sim.measure.active_cells();
    summary["support_eps"] = c.support_eps;
    if (tr.saved.size() == tr.steps + 1) {
        summary["support_profile"] = num(support_profile(sim.measure, tr.states(), s.domain, c.support_eps));
    } else {
        summary["support_profile"] = nullptr;
        r.notes.push_back("support_profile needs output.save_stride = 1");
    }
    summary["final_ledger_residual"] = num(residual.back());
    write_json(ctx.out_dir / "measure_summary.json", summary);
    r.outputs.push_back("measure_summary.json");
    return r;
}

namespace detail {

inline const std::vector<std::string>& sweep_header() {
    static const std::vector<std::string> h{"statistic", "n", "m_or_blank", "mean", "stderr", "paths", "wall_time"};
    return h;
}

inline void report_row(CsvWriter& w, const EstimateReport& e, double n, const std::string& m, double wall) {
    w.row({e.statistic, fmt(n), m, fmt(e.mean), fmt(e.std_error), std::to_string(e.paths), fmt(wall)});
}

inline void ensemble_rows(CsvWriter& w, const EnsembleReport& e, double wall) {
    for (const EstimateReport* r : {&e.sup_energy, &e.gradient_energy, &e.penalty_energy, &e.scaled_penalty_energy,
                                    &e.sup_distance, &e.variation, &e.variation_l2, &e.nu_pair, &e.ledger_residual})
        report_row(w, *r, e.penalty_n, "", wall);
}

inline json fit_json(const std::string& statistic, const std::vector<double>& ns, const std::vector<double>& values) {
    json j{{"statistic", statistic}, {"n", ns}, {"values", values}};
    try {
        const auto f = fit_rate(ns, values);
        j["slope"] = num(f.slope);
        j["intercept"] = num(f.intercept);
        j["r2"] = num(f.r2);
    } catch (const ValidationError& e) {
        j["slope"] = nullptr;
        j["note"] = e.what();
    }
    if (!values.empty()) j["max_min_ratio"] = num(spread_ratio(values));
    return j;
}

}  // namespace detail

inline CommandResult cmd_ensemble(const ExperimentConfig& c, const RunContext& ctx) {
    const auto s = seeded_setup(c, ctx);
    const auto t0 = Clock::now();
    const auto e = estimate_ensemble(s, s.stepper.penalty_n, s.stepper.scheme, c.paths, ctx.workers);
    const double wall = seconds_since(t0);
    {
        CsvWriter w(ctx.out_dir / "ensemble.csv", detail::sweep_header());
        detail::ensemble_rows(w, e, wall);
    }
    CommandResult r{0, {"ensemble.csv"}, {}};
    if (!e.failed.empty()) r.notes.push_back(std::to_string(e.failed.size()) + " paths aborted");
    return r;
}

inline CommandResult cmd_penalty_sweep(const ExperimentConfig& c, const RunContext& ctx) {
    const auto s = seeded_setup(c, ctx);
    CommandResult r;
    std::vector<EnsembleReport> reports;
    {
        CsvWriter w(ctx.out_dir / "sweep.csv", detail::sweep_header());
        for (double n : c.sweep_n) {
            const auto t0 = Clock::now();
            reports.push_back(estimate_ensemble(s, n, Scheme::penalized, c.paths, ctx.workers));
            detail::ensemble_rows(w, reports.back(), seconds_since(t0));
            if (!reports.back().failed.empty())
                r.notes.push_back("n = " + fmt(n) + ": " + std::to_string(reports.back().failed.size()) +
                                  " paths aborted");
        }
        const bool skip_gaps = c.gap_pairs.empty();
        if (skip_gaps) r.notes.push_back("gap statistics skipped: fewer than two penalty levels");
        for (const auto& [n, m] : c.gap_pairs) {
            const auto t0 = Clock::now();
            const auto g = estimate_scheme_gap(s, {n, Scheme::penalized}, {m, Scheme::penalized}, c.paths, ctx.workers);
            const double wall = seconds_since(t0);
            detail::report_row(w, g.cauchy, n, fmt(m), wall);
            detail::report_row(w, g.pairing, n, fmt(m), wall);
        }
    }
    r.outputs.push_back("sweep.csv");

    json fits;
    std::vector<double> ns, pe, spe, sd, var, var2, se, ge;
    for (const auto& e : reports) {
        ns.push_back(e.penalty_n);
        pe.push_back(e.penalty_energy.mean);
        spe.push_back(e.scaled_penalty_energy.mean);
        sd.push_back(e.sup_distance.mean);
        var.push_back(e.variation.mean);
        var2.push_back(e.variation_l2.mean);
        se.push_back(e.sup_energy.mean);
        ge.push_back(e.gradient_energy.mean);
    }
    fits["fits"] = json::array({detail::fit_json("penalty_energy", ns, pe), detail::fit_json("sup_distance", ns, sd)});
    fits["bounds"] = json::array({detail::fit_json("scaled_penalty_energy", ns, spe),
                                  detail::fit_json("variation", ns, var), detail::fit_json("variation_l2", ns, var2),
                                  detail::fit_json("sup_energy", ns, se), detail::fit_json("gradient_energy", ns, ge)});
    write_json(ctx.out_dir / "rate_fit.json", fits);
    r.outputs.push_back("rate_fit.json");
    return r;
}

/// Mean |ledger residual| at T for the same paths at dt, dt/2, ..., with
/// bridge-refined noise.
struct DtLevel {
    std::size_t steps = 0;
    double dt = 0.0;
    EstimateReport residual;
    double wall_time = 0.0;
};

inline std::vector<DtLevel> dt_sweep_levels(const EnsembleSetup& s, std::size_t paths, std::size_t levels,
                                            std::size_t workers = 1) {
    std::vector<DtLevel> out;
    for (std::size_t level = 0; level < levels; ++level) {
        const auto t0 = Clock::now();
        auto results = run_paths<double>(paths, workers, [&](std::size_t i) {
            NoisePath noise = sample_path(s.noise, i);
            for (std::size_t l = 0; l < level; ++l) noise = refine(noise);
            StepperConfig cfg = s.stepper;
            cfg.dt = noise.dt();
            cfg.save_stride = noise.steps();
            const auto sim = simulate(s.xi, s.coeffs, noise, cfg, s.domain, s.grid);
            return std::abs(energy_ledger(sim.trajectory, s.coeffs, noise, sim.measure).back());
        });
        auto [ok, failed] = survivors(std::move(results));
        DtLevel d;
        d.steps = s.noise.steps << level;
        d.dt = s.noise.horizon / static_cast<double>(d.steps);
        d.residual = summarize("mean_abs_residual", std::move(ok), failed);
        d.wall_time = seconds_since(t0);
        out.push_back(std::move(d));
    }
    return out;
}

inline CommandResult cmd_dt_sweep(const ExperimentConfig& c, const RunContext& ctx) {
    const auto levels = dt_sweep_levels(seeded_setup(c, ctx), c.paths, c.dt_levels, ctx.workers);
    CsvWriter w(ctx.out_dir / "dt_sweep.csv",
                {"level", "steps", "dt", "mean_abs_residual", "stderr", "paths", "wall_time"});
    CommandResult r;
    for (std::size_t level = 0; level < levels.size(); ++level) {
        const auto& d = levels[level];
        w.row({std::to_string(level), std::to_string(d.steps), fmt(d.dt), fmt(d.residual.mean),
               fmt(d.residual.std_error), std::to_string(d.residual.paths), fmt(d.wall_time)});
        if (!d.residual.failed.empty())
            r.notes.push_back("level " + std::to_string(level) + ": " + std::to_string(d.residual.failed.size()) +
                              " paths aborted");
    }
    r.outputs.push_back("dt_sweep.csv");
    return r;
}

inline CommandResult cmd_compare_schemes(const ExperimentConfig& c, const RunContext& ctx) {
    const auto s = seeded_setup(c, ctx);
    {
        CsvWriter w(ctx.out_dir / "compare_schemes.csv", detail::sweep_header());
        for (double n : c.sweep_n) {
            const auto t0 = Clock::now();
            const auto g = estimate_scheme_gap(s, {n, Scheme::penalized}, {0.0, Scheme::projected}, c.paths, ctx.workers);
            const double wall = seconds_since(t0);
            detail::report_row(w, g.cauchy, n, "projected", wall);
            detail::report_row(w, g.pairing, n, "projected", wall);
        }
    }
    return {0, {"compare_schemes.csv"}, {}};
}

inline const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"check-domain", "simulate",     "ensemble",
                                                "penalty-sweep", "dt-sweep",    "compare-schemes"};
    return names;
}

/// Runs one command into ctx.out_dir and writes the manifest.
inline CommandResult run_command(const std::string& command, const ExperimentConfig& c, const RunContext& ctx) {
    std::filesystem::create_directories(ctx.out_dir);
    const auto started = std::chrono::system_clock::now();
    CommandResult r;
    if (command == "check-domain")
        r = cmd_check_domain(c, ctx);
    else if (command == "simulate")
        r = cmd_simulate(c, ctx);
    else if (command == "ensemble")
        r = cmd_ensemble(c, ctx);
    else if (command == "penalty-sweep")
        r = cmd_penalty_sweep(c, ctx);
    else if (command == "dt-sweep")
        r = cmd_dt_sweep(c, ctx);
    else if (command == "compare-schemes")
        r = cmd_compare_schemes(c, ctx);
    else
        throw ValidationError("unknown command '" + command + "'");

    json m;
    m["command"] = command;
    m["config_hash"] = c.hash;
    m["seed"] = ctx.seed.value;
    m["seed_source"] = std::string(to_string(ctx.seed.source));
    m["code_version"] = code_version;
    m["workers"] = ctx.workers;
    m["started"] = iso_time(started);
    m["finished"] = iso_time(std::chrono::system_clock::now());
    m["exit_code"] = r.exit_code;
    m["outputs"] = r.outputs;
    m["notes"] = r.notes;
    write_manifest(ctx.out_dir, m);
    return r;
}

/// CSV text with the wall_time column removed.
inline std::string numeric_content(const std::filesystem::path& csv) {
    std::ifstream in(csv);
    if (!in) throw Error("cannot read " + csv.string());
    std::string line, out;
    std::optional<std::size_t> skip;
    bool header = true;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        if (header) {
            for (std::size_t i = 0; i < cells.size(); ++i)
                if (cells[i] == "wall_time") skip = i;
            header = false;
        }
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (skip && i == *skip) continue;
            out += cells[i];
            out += ',';
        }
        out += '\n';
    }
    return out;
}

}  // namespace reflekt
