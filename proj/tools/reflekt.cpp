#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "reflekt/reflekt.hpp"

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::size_t workers = 0;
    std::string out;
};

int run(const std::string& command, const Options& opt) {
    using namespace reflekt;
    try {
        const ExperimentConfig cfg = load_config(opt.config);
        RunContext ctx;
        ctx.seed = resolve_seed(opt.seed, cfg.seed);
        ctx.workers = resolve_workers(opt.workers);
        ctx.out_dir = opt.out.empty() ? cfg.out_dir : opt.out;
        const auto r = run_command(command, cfg, ctx);
        for (const auto& note : r.notes) std::cerr << "note: " << note << '\n';
        for (const auto& f : r.outputs) std::cout << (ctx.out_dir / f).string() << '\n';
        return r.exit_code;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Penalized reflected stochastic PDE experiments"};
    app.require_subcommand(1);
    Options opt;
    std::string chosen;
    for (const auto& name : reflekt::command_names()) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", opt.config, "flat key = value config file")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", opt.seed, "master seed, overrides the config and REFLEKT_SEED");
        sub->add_option("--workers", opt.workers, "worker threads (0: all cores)");
        sub->add_option("--out", opt.out, "output directory, overrides output.dir");
        sub->callback([&chosen, name] { chosen = name; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    return run(chosen, opt);
}
