#pragma once

#include "gmes/acquisition.hpp"
#include "gmes/gp.hpp"
#include "gmes/rng.hpp"
#include "gmes/types.hpp"

#include <cstdint>
#include <vector>

namespace gmes {

struct BaselineConfig {
    BetaSchedule beta;
    /// Points per dimension of the discrete candidate set. Grids are used up
    /// to d = 2; beyond that resolution^2 uniform draws stand in.
    int candidate_grid_resolution = 32;
    std::uint64_t rng_seed = 0;
    /// Settings for the continuous UCB maximizer used for the first point.
    int ucb_restarts = 16;
    int ucb_iters = 100;
    int ucb_grid_resolution = 24;

    void validate() const;
    /// The GmesConfig whose find_x_ucb the baselines share.
    GmesConfig ucb_config() const;
};

/// Candidate set used by the discretized baselines (rows are points).
Matrix candidate_points(const DomainBox& box, int resolution, Rng& rng);

/// First point maximizes UCB; the rest maximize the posterior variance
/// conditioned on the points already chosen.
QueryBatch ucb_pe_select(const GpPosterior& gp, int t, const DomainBox& box, std::size_t m, const BaselineConfig& cfg);

/// Sequential UCB with posterior-mean hallucination. Hallucinated values
/// equal to the mean leave the mean unchanged, so only the variance is
/// conditioned.
QueryBatch bucb_select(const GpPosterior& gp, int t, const DomainBox& box, std::size_t m, const BaselineConfig& cfg);

/// Argmax of each of m joint posterior sample paths over a random candidate
/// set.
QueryBatch thompson_select(const GpPosterior& gp, int t, const DomainBox& box, std::size_t m,
                           const BaselineConfig& cfg);

/// Index of the argmax of `count` joint posterior draws over `candidates`.
/// The covariance is factorized with jitter 1e-10 * sigma_f^2, doubled up to
/// three times before a FactorizationError.
std::vector<Eigen::Index> sample_path_argmax(const GpPosterior& gp, const Matrix& candidates, std::size_t count,
                                             Rng& rng);

/// Posterior variances over `candidates` after conditioning on `chosen`
/// (rows) with the GP's observation noise; values are not needed.
Vector conditioned_variance(const GpPosterior& gp, const Matrix& candidates, const Matrix& chosen);

}  // namespace gmes
