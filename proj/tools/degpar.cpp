// Batch runner for the verification pipelines.
//
//   degpar [--config FILE] [--out DIR] [--workers N] [--seed S] <subcommand>
//
// Exit status: 0 when every assertion passes, 1 when one fails (named on
// stderr) or a solve breaks down, 2 for configuration and usage errors.

#include "degpar/experiments.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

int run(const std::string& sub, const std::string& config_path, const std::string& out, unsigned workers,
        std::uint64_t seed) {
    using namespace degpar;
    Config cfg;
    try {
        if (!config_path.empty()) cfg = Config::load(config_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    }
    const RunContext ctx{seed, workers};
    const auto start = std::chrono::system_clock::now();
    Outcome o;
    try {
        o = experiments().at(sub)(cfg, ctx);
    } catch (const InvalidArgument& e) {  // includes ConfigError and HypothesisViolation
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        o = Outcome{};
        o.check("completed", false, e.what());
    }
    const auto stop = std::chrono::system_clock::now();
    try {
        write_outputs(out, sub, cfg, ctx, o, start, stop);
    } catch (const std::exception& e) {
        std::cerr << "cannot write outputs: " << e.what() << '\n';
        return 1;
    }
    for (const auto& a : o.assertions)
        std::cout << (a.pass ? "PASS " : "FAIL ") << a.name << (a.detail.empty() ? "" : ": " + a.detail) << '\n';
    if (const Assertion* f = o.first_failure()) {
        std::cerr << "assertion failed: " << f->name << (f->detail.empty() ? "" : " (" + f->detail + ")") << '\n';
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Weighted degenerate/singular parabolic solver: verification runner"};
    std::string config_path, out = "degpar-out";
    unsigned workers = 1;
    std::uint64_t seed = 1;
    bool schema = false;
    app.add_option("--config", config_path, "flat key = value configuration file")->check(CLI::ExistingFile);
    app.add_option("--out", out, "output directory")->capture_default_str();
    app.add_option("--workers", workers, "parallel sweep points (0 = hardware threads)")->capture_default_str();
    app.add_option("--seed", seed, "seed for random initial data")->capture_default_str();
    app.add_flag("--print-schema", schema, "print the configuration schema and exit");

    std::string chosen;
    for (const auto& [name, _] : degpar::experiments()) {
        CLI::App* s = app.add_subcommand(name, "run the " + name + " pipeline");
        s->fallthrough();
        s->callback([&chosen, name = name] { chosen = name; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    if (schema) {
        std::cout << degpar::Config::schema_table();
        return 0;
    }
    if (chosen.empty()) {
        std::cerr << "no subcommand given\n" << app.help();
        return 2;
    }
    return run(chosen, config_path, out, workers, seed);
}
