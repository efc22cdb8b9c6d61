#include "gmes/cli.hpp"
#include "gmes/errors.hpp"
#include "gmes/source_sim.hpp"
#include "gmes/testbed.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

// Exit codes: 0 success, 1 configuration error, 2 runtime failure.
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

struct Overrides {
    std::string out;
    int jobs = 0;
    std::int64_t seed_offset = -1;

    void apply(gmes::SweepSpec& spec) const {
        if (!out.empty()) spec.output_dir = out;
        if (jobs > 0) spec.jobs = jobs;
        if (seed_offset >= 0) spec.seed_offset = static_cast<std::uint64_t>(seed_offset);
    }
};

void add_overrides(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--out", o.out, "Output directory (overrides the config)");
    cmd->add_option("--jobs", o.jobs, "Parallel runs (overrides the config)")->check(CLI::PositiveNumber);
    cmd->add_option("--seed-offset", o.seed_offset, "Added to every seed")->check(CLI::NonNegativeNumber);
}

int cmd_run(const std::string& config, const Overrides& o) {
    gmes::SweepSpec spec = gmes::parse_config(config);
    o.apply(spec);
    const gmes::SweepOutcome res = gmes::run_sweep(spec, std::cout);
    std::cout << res.runs << " runs, " << res.failures << " failed; results in " << spec.output_dir << "\n";
    return res.exit_code();
}

int cmd_bench(const std::string& config, const Overrides& o) {
    gmes::SweepSpec spec = gmes::parse_config(config);
    o.apply(spec);
    if (spec.experiments.empty()) throw gmes::ConfigError(config + ": bench needs an experiment cell");
    const gmes::ExperimentConfig& cfg = spec.experiments.front();
    const std::uint64_t seed = cfg.seeds.front() + spec.seed_offset;
    const gmes::RegretTrace trace = gmes::run_experiment(cfg, seed);
    if (!o.out.empty()) {
        std::filesystem::create_directories(o.out);
        std::ostringstream csv;
        gmes::write_trace_csv(trace, csv, spec.include_timing);
        gmes::write_file_atomic((std::filesystem::path(o.out) / (gmes::run_stem(cfg, seed) + ".csv")).string(), csv.str());
    }
    std::cout << gmes::run_stem(cfg, seed) << " R_T = " << trace.records.back().instant_regret << "\n";
    return 0;
}

struct SeekArgs {
    std::string algorithm = "gmes";
    std::size_t m = 4;
    std::uint64_t seed = 0;
    int t_max = 60;
    std::string out;
};

int cmd_seek(const std::string& scenario, const SeekArgs& a) {
    const auto& names = gmes::scenario_names();
    const gmes::LightField field = std::find(names.begin(), names.end(), scenario) != names.end()
                                       ? gmes::make_scenario(scenario)
                                       : gmes::load_scenario(scenario);
    gmes::SeekConfig cfg;
    cfg.algorithm = gmes::parse_algorithm(a.algorithm);
    cfg.m = a.m;
    cfg.T_max = a.t_max;
    const gmes::SeekResult res = gmes::run_seek(field, cfg, a.seed);
    if (!a.out.empty()) {
        const std::filesystem::path dir(a.out);
        std::filesystem::create_directories(dir);
        std::ostringstream csv, summary;
        gmes::write_trajectory_csv(res, csv);
        gmes::write_seek_summary_json(res, summary);
        gmes::write_file_atomic((dir / "trajectory.csv").string(), csv.str());
        gmes::write_file_atomic((dir / "summary.json").string(), summary.str());
    }
    gmes::write_seek_summary_json(res, std::cout);
    return 0;
}

int cmd_validate(const std::string& config) {
    const gmes::SweepSpec spec = gmes::parse_config(config);
    std::cout << gmes::spec_to_json(spec).dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-agent Bayesian optimization benchmarks and source-seeking simulation"};
    app.require_subcommand(1);

    std::string config;
    Overrides overrides;
    auto* run = app.add_subcommand("run", "Run every cell and seed of a sweep config");
    run->add_option("config", config, "JSON sweep config")->required();
    add_overrides(run, overrides);

    auto* bench = app.add_subcommand("bench", "Run the first cell's first seed and print its final regret");
    bench->add_option("config", config, "JSON sweep config")->required();
    add_overrides(bench, overrides);

    std::string scenario;
    SeekArgs seek_args;
    auto* seek = app.add_subcommand("seek", "Simulate source seeking on a scenario");
    seek->add_option("scenario", scenario, "SINGLE, SPARSE, DENSE or a scenario file")->required();
    seek->add_option("--algorithm", seek_args.algorithm, "gmes, ucb_pe, bucb or thompson");
    seek->add_option("-m,--robots", seek_args.m, "Number of robots")->check(CLI::PositiveNumber);
    seek->add_option("--seed", seek_args.seed, "Replicate seed");
    seek->add_option("--t-max", seek_args.t_max, "Iteration limit")->check(CLI::PositiveNumber);
    seek->add_option("--out", seek_args.out, "Directory for trajectory.csv and summary.json");

    auto* validate = app.add_subcommand("validate", "Check a config and print the resolved spec");
    validate->add_option("config", config, "JSON sweep config")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfigError;
    }

    try {
        if (*run) return cmd_run(config, overrides);
        if (*bench) return cmd_bench(config, overrides);
        if (*seek) return cmd_seek(scenario, seek_args);
        if (*validate) return cmd_validate(config);
    } catch (const gmes::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return 0;
}
