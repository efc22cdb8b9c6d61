#pragma once

#include "gmes/acquisition.hpp"
#include "gmes/baselines.hpp"
#include "gmes/gp.hpp"
#include "gmes/rng.hpp"
#include "gmes/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace gmes {

/// Benchmark objective, negated so that the task is maximization.
struct TestFunction {
    std::string name;
    DomainBox domain;
    double f_star = 0.0;
    std::vector<Vector> x_star_set;
    double (*formula)(const Vector&) = nullptr;
};

/// ackley ([-5,5]^2), bird ([-2pi,2pi]^2) or rosenbrock ([-2,2]^2).
TestFunction make_test_function(const std::string& name);
const std::vector<std::string>& test_function_names();

/// Throws DomainError for points outside the function's domain.
double eval_function(const TestFunction& fn, const Vector& x);

struct ObservationModel {
    double sigma0 = 0.1;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

/// f(x) + N(0, sigma0^2) drawn from `rng`.
double observe(const TestFunction& fn, const Vector& x, const ObservationModel& obs, Rng& rng);

/// Affine output map y_model = (y - offset) / scale applied before GP fitting.
struct OutputScaling {
    double offset = 0.0;
    double scale = 1.0;

    double to_model(double y) const { return (y - offset) / scale; }
    double to_output(double z) const { return offset + scale * z; }

    /// Mean and standard deviation of f over a 64-per-dimension grid.
    static OutputScaling probe(const TestFunction& fn);
};

enum class Algorithm { gmes, ucb_pe, bucb, thompson };

Algorithm parse_algorithm(const std::string& name);
std::string algorithm_name(Algorithm a);

struct ExperimentConfig {
    Algorithm algorithm = Algorithm::gmes;
    std::size_t m = 5;
    int T = 150;
    /// length_scale is in unit-box coordinates and signal_variance in
    /// standardized output units. The noise term is derived from sigma0.
    KernelSpec kernel{.length_scale = 0.2};
    GmesConfig gmes;
    BaselineConfig baseline;
    std::string function = "ackley";
    double sigma0 = 0.1;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    /// Scale inputs to the unit box and standardize outputs before fitting.
    bool normalize = true;

    void validate() const;
};

struct RegretRecord {
    int iter = 0;
    double instant_regret = 0.0;
    double cumulative_regret = 0.0;
    /// Best noisy observation so far, in output units.
    double best_value = 0.0;
    /// Argmax of the posterior mean, in the function's own coordinates.
    Vector inferred_x;
    double wall_ms = 0.0;
    /// Observations in the dataset the iteration's posterior was fitted on.
    std::size_t dataset_size = 0;
};

struct RegretTrace {
    std::string function;
    std::string algorithm;
    std::uint64_t seed = 0;
    std::size_t m = 0;
    /// Regret of the initial random queries.
    double initial_regret = 0.0;
    OutputScaling scaling;
    std::vector<RegretRecord> records;
    /// Query batches X_0 .. X_T in the function's coordinates.
    std::vector<QueryBatch> batches;
};

/// Running best-true-value bookkeeping behind the instant and cumulative
/// regrets.
struct RegretState {
    double f_star = 0.0;
    double best_true = -std::numeric_limits<double>::infinity();
    double cumulative = 0.0;
};

/// Folds a newly queried batch with its true values into the state and
/// returns (R_t, cumulative R_t).
std::pair<double, double> compute_regret(RegretState& state, const Vector& true_values);

/// The optimization loop for one replicate seed: observe the previous batch, refit,
/// select the next batch, record regret. Errors are rethrown with the
/// iteration attached.
RegretTrace run_experiment(const ExperimentConfig& cfg, std::uint64_t seed);

/// Selection step shared by the experiment loop and the simulator.
QueryBatch select_batch(Algorithm algorithm, const GpPosterior& gp, int t, const DomainBox& box, std::size_t m,
                        const GmesConfig& gcfg, const BaselineConfig& bcfg);

/// CSV: iter,instant_regret,cumulative_regret,best_value,inferred_x0..,wall_ms.
/// With include_timing false the wall_ms column is written as 0 so that
/// repeated runs are byte-identical.
void write_trace_csv(const RegretTrace& trace, std::ostream& out, bool include_timing);

}  // namespace gmes
