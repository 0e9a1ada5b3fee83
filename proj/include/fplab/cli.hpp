#pragma once

// Command-line front end. One subcommand per experiment plus `suite`, each
// taking --config <file> with optional --seed/--out overrides and --quiet.
// Exit codes: 0 all checks passed, 1 a check or the run itself failed,
// 2 the config (or command line) did not validate.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fplab/runner.hpp"

namespace fplab {

inline const std::vector<std::string>& cli_commands() {
    static const std::vector<std::string> kCommands{
        "fixedpoint", "covers",  "boundary",   "stochastic",
        "plasticity", "datagen", "federation", "suite"};
    return kCommands;
}

// args without the program name
inline int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"fplab: fixed-point experiments on small dense networks"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    std::string out;
    bool quiet = false;
    for (const std::string& name : cli_commands()) {
        CLI::App* sub = app.add_subcommand(
            name, name == "suite" ? "run a list of experiment configs"
                                  : "run one " + name + " config");
        sub->add_option("--config", config_path, "run config (JSON)")->required();
        sub->add_option("--seed", seed, "override the config seed");
        sub->add_option("--out", out, "output directory");
        sub->add_flag("--quiet", quiet, "suppress per-check output");
    }

    std::vector<const char*> argv;
    argv.push_back("fplab");
    for (const std::string& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const CLI::App* sub = app.get_subcommands().front();
    RunOverrides ov;
    ov.quiet = quiet;
    if (sub->count("--seed") > 0) ov.seed = seed;
    if (sub->count("--out") > 0) ov.out = out;

    try {
        const Json config =
            parse_config_text(read_text_file(config_path), config_path);
        const std::string dir =
            std::filesystem::path(config_path).parent_path().string();
        const RunOutcome outcome = sub->get_name() == "suite"
                                       ? run_suite(config, ov, dir.empty() ? "." : dir)
                                       : run_experiment(sub->get_name(), config, ov);
        return outcome.exit_code;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    }
}

}  // namespace fplab
