// Command-line entry point: one subcommand per controller.

#include <iostream>

#include <CLI11.hpp>

#include "adrctl/scenario.hpp"

int main(int argc, char** argv) {
    CLI::App app{"adrctl: density steering, CTMC transfer and switching-diffusion scenarios"};
    app.require_subcommand(1);

    adrctl::RunOptions opts;
    std::string config, out;
    std::uint64_t seed = 0;
    for (const auto& name : adrctl::scenario_subcommands()) {
        auto* sub = app.add_subcommand(name, "run the " + name + " scenario");
        sub->add_option("--config,-c", config, "scenario config file")->required();
        sub->add_option("--out,-o", out, "output directory (overrides [scenario] output)");
        sub->add_option("--seed", seed, "random seed (overrides [scenario] seed)");
        sub->add_flag("--verbose,-v", opts.verbose, "progress messages on stdout");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : adrctl::kExitUsage;
    }
    auto* chosen = app.get_subcommands().front();
    opts.config = config;
    if (chosen->count("--out")) opts.out_dir = out;
    if (chosen->count("--seed")) opts.seed = seed;
    return adrctl::run_scenario(chosen->get_name(), opts, std::cout, std::cerr);
}
