// spinsense: command-line front end for the named experiments.
//
// Exit codes: 0 success, 2 invalid usage or configuration, 3 runtime failure.

#include "spinsense/config.hpp"
#include "spinsense/experiments.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitRuntime = 3;

int cmd_list() {
    for (const auto& e : spinsense::experiment_catalog()) std::cout << e.name << "\t" << e.description << "\n";
    return kExitOk;
}

int cmd_validate(const std::string& path) {
    const auto cfg = spinsense::load_config(path);
    spinsense::validate(cfg);
    std::cout << spinsense::to_json(cfg).dump(2) << "\n";
    return kExitOk;
}

int cmd_run(const std::string& path, const std::string& out, int workers, std::optional<std::uint64_t> seed,
            bool coarse_only) {
    const auto cfg = spinsense::load_config(path);
    spinsense::RunOptions opts;
    opts.out_dir = out.empty() ? std::filesystem::path("out") / cfg.experiment : std::filesystem::path(out);
    opts.workers = workers;
    opts.seed = seed;
    opts.coarse_only = coarse_only;
    opts.log = [](const std::string& msg) { std::cerr << msg << std::endl; };
    spinsense::ExperimentConfig resolved = cfg;
    if (seed) resolved.seed = *seed;
    if (coarse_only) resolved.scan.coarse_only = true;
    spinsense::validate(resolved);  // config errors surface before any output is touched
    const auto report = spinsense::run(cfg, opts);
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    for (const auto& f : report.files) std::cout << f.string() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spinsense: variable-range spin-chain quantum sensing experiments"};
    app.require_subcommand(1);

    auto* list = app.add_subcommand("list", "list the available experiments");

    std::string validate_path;
    auto* validate = app.add_subcommand("validate", "parse and validate a config, printing the resolved values");
    validate->add_option("config", validate_path, "TOML config file")->required();

    std::string run_path, out_dir;
    int workers = 0;
    std::optional<std::uint64_t> seed;
    bool coarse_only = false;
    auto* run = app.add_subcommand("run", "run an experiment and write CSVs plus a manifest");
    run->add_option("config", run_path, "TOML config file")->required();
    run->add_option("--out", out_dir, "output directory (default out/<experiment>)");
    run->add_option("--workers", workers, "worker threads (default SPINSENSE_WORKERS, then hardware)")
        ->check(CLI::NonNegativeNumber);
    run->add_option("--seed", seed, "override the config seed");
    run->add_flag("--coarse-only", coarse_only, "skip the fine refinement pass");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitInvalid;
    }

    try {
        if (*list) return cmd_list();
        if (*validate) return cmd_validate(validate_path);
        if (*run) return cmd_run(run_path, out_dir, workers, seed, coarse_only);
    } catch (const spinsense::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitInvalid;
}
