#pragma once

#include "gmes/source_sim.hpp"
#include "gmes/testbed.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace gmes {

/// Simulator cell: one scenario (built-in name or scenario file path) with a
/// fully resolved configuration and its replicate seeds.
struct SeekJob {
    std::string scenario = "SINGLE";
    SeekConfig config;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
};

struct SweepSpec {
    /// One entry per (algorithm, function, m) cell; each carries its seeds.
    std::vector<ExperimentConfig> experiments;
    std::vector<SeekJob> seeks;
    std::string output_dir = "out";
    int jobs = 1;
    /// Write measured wall-clock times into the run CSVs (breaks
    /// byte-identical reruns).
    bool include_timing = false;
    /// Added to every seed at run time.
    std::uint64_t seed_offset = 0;
};

/// Reads a JSON sweep config. Lists under "algorithm", "function" and "m"
/// (experiments) or "scenario", "algorithm" and "m" (seeks) expand into
/// their cartesian product; absent fields take their defaults. Syntax errors
/// report line and column; every invalid field is listed in one ConfigError.
SweepSpec parse_config(const std::string& path);
SweepSpec parse_config_text(const std::string& text, const std::string& source);

/// Resolved spec with every default materialized. parse_config_text on its
/// dump yields the same spec.
nlohmann::ordered_json spec_to_json(const SweepSpec& spec);

/// Every violated invariant, one message each; empty when valid.
std::vector<std::string> validate_spec(const SweepSpec& spec);

struct SweepOutcome {
    int runs = 0;
    int failures = 0;
    /// 0 on success, 2 when any run failed.
    int exit_code() const { return failures == 0 ? 0 : 2; }
};

/// Runs every cell and seed with up to spec.jobs worker threads and writes,
/// under spec.output_dir:
///   spec.json                      resolved spec
///   runs/<cell>_seed<s>.csv, .json regret trace and its resolved config
///   aggregate.csv                  per-iteration mean and 95% CI per cell
///   instant_regret_<f>_m<m>.svg, cumulative_regret_<f>_m<m>.svg
///   seek/<cell>_seed<s>_trajectory.csv, _summary.json; seek_summary.csv
///   failures.json                  runs that threw, with their errors
/// Files are written to a temporary name and renamed into place.
SweepOutcome run_sweep(const SweepSpec& spec, std::ostream& log);

/// File stem of a benchmark run: <function>_<algorithm>_m<m>_seed<s>.
std::string run_stem(const ExperimentConfig& cfg, std::uint64_t seed);

struct AggregateRow {
    std::string function;
    std::string algorithm;
    std::size_t m = 0;
    int iter = 0;
    int n = 0;
    double instant_mean = 0.0;
    double instant_ci = 0.0;
    double cumulative_mean = 0.0;
    double cumulative_ci = 0.0;
};

/// Mean and 1.96 * sample std / sqrt(n) of each iteration over the given
/// run CSV files (one cell).
std::vector<AggregateRow> aggregate_runs(const std::string& function, const std::string& algorithm, std::size_t m,
                                         const std::vector<std::string>& csv_paths);

/// Writes `content` to path.tmp and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace gmes
