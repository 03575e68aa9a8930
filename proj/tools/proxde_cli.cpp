#include "proxde/runner.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

int load_and_run(const std::string& file, const std::string& out_dir, const std::string& seed_hex,
                 long long paths, long long steps, bool audit_only) {
    std::ifstream in(file);
    if (!in) {
        std::cerr << "config error [scenario-file]: cannot open '" << file << "'\n";
        return 2;
    }
    std::stringstream buffer;
    buffer << in.rdbuf();

    proxde::Scenario scenario;
    try {
        scenario = proxde::Scenario::from_text(buffer.str());
        if (!seed_hex.empty()) scenario.seed = std::stoull(seed_hex, nullptr, 16);
        if (paths > 0) scenario.paths = paths;
        if (steps > 0) scenario.steps = steps;
    } catch (const proxde::config::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }

    try {
        proxde::RunOutcome outcome = proxde::run_scenario(scenario, out_dir, audit_only);
        for (const auto& path : outcome.artifacts) std::cout << "wrote " << path << "\n";
        for (auto it = outcome.summary["checks"].begin(); it != outcome.summary["checks"].end();
             ++it)
            std::cout << (it.value().get<bool>() ? "PASS " : "FAIL ") << it.key() << "\n";
        if (outcome.summary.contains("error"))
            std::cerr << "numerical abort: " << outcome.summary["error"].get<std::string>()
                      << "\n";
        return outcome.exit_code;
    } catch (const proxde::config::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return 3;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Scenario runner for monotone differential inclusions"};
    app.require_subcommand(1);

    std::string scenario_file, out_dir, seed_hex;
    long long paths = 0, steps = 0;

    CLI::App* run = app.add_subcommand("run", "run a scenario file and write artifacts");
    run->add_option("scenario", scenario_file, "scenario file")->required();
    run->add_option("--out", out_dir, "output directory override");
    run->add_option("--seed", seed_hex, "hex master seed override");
    run->add_option("--paths", paths, "ensemble path count override");
    run->add_option("--steps", steps, "grid step count override");

    CLI::App* kinds = app.add_subcommand("list-kinds", "list operator and graph kinds");

    CLI::App* audit = app.add_subcommand("audit", "run only the coercivity audit");
    audit->add_option("scenario", scenario_file, "scenario file")->required();
    audit->add_option("--out", out_dir, "output directory override");

    CLI11_PARSE(app, argc, argv);

    if (kinds->parsed()) {
        std::cout << "operators:\n";
        for (const auto& k : proxde::operator_kind_catalog()) std::cout << "  " << k << "\n";
        std::cout << "graphs:\n";
        for (const auto& g : proxde::graph_catalog()) std::cout << "  " << g << "\n";
        return 0;
    }
    return load_and_run(scenario_file, out_dir, seed_hex, paths, steps, audit->parsed());
}
