#pragma once

#include "gmes/gp.hpp"
#include "gmes/rng.hpp"
#include "gmes/types.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace gmes {

/// beta_t = max(0, initial - slope * t).
struct BetaSchedule {
    double initial = 3.0;
    double slope = 0.01;

    double operator()(int t) const;
};

/// First/second-moment adaptive step rule. base_step <= 0 selects the
/// default 0.05 * box_diagonal / sqrt(d).
struct StepRule {
    double base_step = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    double resolve(const DomainBox& box) const;
};

struct GmesConfig {
    BetaSchedule beta;
    int ascent_iters = 50;
    StepRule step;
    /// Minimum pairwise query separation; the log-barrier is only added to
    /// the objective when use_barrier is set.
    double r_div = 0.0;
    bool use_barrier = false;
    double barrier_scale = 10.0;
    /// Multi-start count for the UCB maximization (half random, half seeded
    /// at the best observations).
    int restarts = 16;
    int ucb_iters = 100;
    /// Points per dimension of the UCB pre-scan grid (d <= 2 only).
    int grid_resolution = 24;
    /// Batch ascent restarts; restart 0 is seeded around x_ucb.
    int batch_restarts = 2;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

struct AcquisitionReport {
    Vector x_ucb;
    double gamma_value = 0.0;
    double surrogate_mi = 0.0;
    /// Objective gamma - p after each ascent step of the winning restart.
    std::vector<double> ascent_trajectory;
};

double ucb_value(const GpPosterior& gp, const Vector& x, double beta);

/// argmax over the box of mu + beta * sigma. Deterministic given cfg.rng_seed
/// and the posterior's data size.
Vector find_x_ucb(const GpPosterior& gp, double beta, const DomainBox& box, const GmesConfig& cfg);

/// Location of the posterior-mean maximum (the inferred maximum).
Vector find_mean_argmax(const GpPosterior& gp, const DomainBox& box, const GmesConfig& cfg);

/// Variance reduction at x from conditioning on the batch:
/// Sigma(x, X) (Sigma(X, X) + s^2 I)^{-1} Sigma(X, x), with s^2 the GP's
/// diagonal noise.
double gamma(const GpPosterior& gp, const QueryBatch& batch, const Vector& x);

/// d gamma / d batch as an m x d matrix.
Matrix gamma_gradient(const GpPosterior& gp, const QueryBatch& batch, const Vector& x);

/// Sum over pairs of [-(1/L) log(|xi - xj| - r_div)]^+.
double log_barrier(const QueryBatch& batch, double r_div, double barrier_scale);
Matrix log_barrier_gradient(const QueryBatch& batch, double r_div, double barrier_scale);

/// Euclidean projection onto the box product (coordinatewise clamp).
QueryBatch project_box(const QueryBatch& batch, const DomainBox& box);

/// 1/2 log(sigma_t^2 / (sigma_t^2 - gamma)) at x_ucb, in nats.
double surrogate_mi(const GpPosterior& gp, const QueryBatch& batch, const Vector& x_ucb);

/// Rejection-sampled batch with pairwise distance > r_div.
QueryBatch sample_separated_batch(const DomainBox& box, std::size_t m, double r_div, Rng& rng);

/// Projected adaptive gradient ascent of gamma(X, x_ucb) - p(X) over X^m.
std::pair<QueryBatch, AcquisitionReport> gmes_select_batch(const GpPosterior& gp, int t, const DomainBox& box,
                                                           std::size_t m, const GmesConfig& cfg);

}  // namespace gmes
