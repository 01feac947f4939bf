// Command-line driver.
//
//   pnlt <subcommand> --config PATH [--out DIR] [--workers N] [--seed S]
//
// Exit codes: 0 success, 2 configuration error, 3 runtime error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pnlt/config.hpp"
#include "pnlt/experiments.hpp"
#include "pnlt/parallel.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Options {
    std::string config;
    std::string out = "out";
    unsigned workers = 0;
    std::optional<long long> seed;
};

int run(const std::string& sub, const Options& o) {
    pnlt::ExperimentConfig e;
    try {
        e = pnlt::parse_experiment(pnlt::Config::load(o.config));
    } catch (const pnlt::Error& err) {
        std::cerr << "config error: " << err.what() << '\n';
        return kExitConfig;
    }
    if (o.seed) e.seed = static_cast<std::uint64_t>(*o.seed);
    if (o.workers > 0) pnlt::set_workers(o.workers);

    if (sub == "validate") {
        const auto diags = pnlt::validate(e);
        for (const auto& d : diags) std::cout << d << '\n';
        return diags.empty() ? 0 : kExitConfig;
    }
    if (e.kind != sub) {
        std::cerr << "config error: " << o.config << " describes experiment '" << e.kind << "', not '" << sub << "'\n";
        return kExitConfig;
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const pnlt::RunResult r = pnlt::run_experiment(e, o.out);
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        pnlt::write_manifest(e, r, wall, o.out);
        for (const auto& a : r.artifacts) std::cout << (std::filesystem::path(o.out) / a).string() << '\n';
    } catch (const pnlt::ConfigError& err) {
        std::cerr << "config error: " << err.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& err) {
        std::cerr << sub << " failed: " << err.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nonlocal phase-field dislocation energies, line tension and scaling sweeps"};
    app.set_version_flag("--version", pnlt::kVersion);
    app.require_subcommand(1);
    Options o;
    std::string chosen;
    const std::vector<std::pair<std::string, std::string>> subs{
        {"psi-table", "Line-tension table with relaxed upper bounds"},
        {"envelope", "Envelope constants and optional g(A) decomposition"},
        {"energy", "Energy of a grid field"},
        {"minimize", "Gradient descent on the energy"},
        {"sweep-linetension", "Mollified-jump epsilon sweep"},
        {"sweep-gamma", "Recovery-sequence epsilon sweep"},
        {"validate", "Check a configuration without running it"},
    };
    for (const auto& [name, help] : subs) {
        CLI::App* s = app.add_subcommand(name, help);
        s->add_option("--config", o.config, "Configuration file")->required()->check(CLI::ExistingFile);
        s->add_option("--out", o.out, "Output directory");
        s->add_option("--workers", o.workers, "Worker threads (0: hardware)");
        s->add_option("--seed", o.seed, "Random seed (overrides the config)");
        s->callback([&chosen, n = name] { chosen = n; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : kExitConfig;
    }
    return run(chosen, o);
}
