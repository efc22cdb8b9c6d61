#pragma once

#include "gmes/acquisition.hpp"
#include "gmes/baselines.hpp"
#include "gmes/gp.hpp"
#include "gmes/testbed.hpp"
#include "gmes/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace gmes {

/// Point light hanging `height` meters above ground position (x, y).
struct Lamp {
    Vector position;
    double height = 1.0;
    double intensity = 1.0;
};

/// Ground-level light intensity over a rectangular arena, plus the robot
/// start positions of the scenario.
struct LightField {
    std::string name;
    DomainBox arena;
    std::vector<Lamp> lamps;
    std::vector<Vector> starts;
    /// Brightest ground point, located numerically at construction.
    Vector brightest;

    /// Recomputes `brightest` (grid scan plus local refinement).
    void locate_brightest();
    void validate() const;
};

/// SINGLE, SPARSE or DENSE.
LightField make_scenario(const std::string& name);
const std::vector<std::string>& scenario_names();

/// Text scenario: one declaration per line, '#' starts a comment.
///   arena x0 y0 x1 y1
///   lamp x y height intensity
///   robot x y
/// Throws ConfigError with the offending line number.
LightField parse_scenario(std::istream& in, const std::string& name);
LightField load_scenario(const std::string& path);

/// Sum over lamps of intensity / (height^2 + |x - lamp|^2). Throws
/// DomainError outside the arena.
double field_value(const LightField& field, const Vector& x);

struct RobotState {
    Vector position;
    double heading = 0.0;
    double v = 0.0;
    Vector target;
    /// Controller memory (integral and previous error of each loop).
    double dist_integral = 0.0;
    double dist_prev = 0.0;
    double heading_integral = 0.0;
    double heading_prev = 0.0;
};

struct SafetyConfig {
    double d_safe = 0.2;
    double k_alpha = 0.1;
    double t_lk = 1.0;
    /// Floor on the look-ahead speed so that a stopped robot still moves.
    double v_min = 0.05;
    /// Query separation handed to the acquisition.
    double r_div = 0.25;

    void validate() const;
};

struct ControllerConfig {
    double kp_v = 2.0;
    double ki_v = 0.0;
    double kd_v = 0.0;
    double kp_w = 3.0;
    double ki_w = 0.0;
    double kd_w = 0.1;
    double v_max = 0.22;
    double w_max = 2.84;
    /// Distances below this command zero velocity.
    double deadband = 0.01;

    void validate() const;
};

/// The query itself when within r_lk = max(v, v_min) * t_lk of the robot,
/// otherwise the point r_lk along the ray towards it.
Vector lookahead_target(const RobotState& robot, const Vector& query, const SafetyConfig& cfg);

struct CbfProjection {
    Vector target;
    bool stalled = false;
};

/// Closest point to `lookahead` inside the arena that satisfies, for every
/// other robot j, u_j . (x - p_j) >= (1 - k_alpha dt) |p_i - p_j| +
/// k_alpha dt d_safe with u_j the unit vector from p_j to p_i. An empty
/// feasible set returns p_i with stalled set.
CbfProjection cbf_project(const RobotState& robot, const Vector& lookahead, const std::vector<RobotState>& others,
                          const SafetyConfig& cfg, double dt, const DomainBox& arena);

/// One unicycle step: PID on heading error and on distance, saturated at
/// w_max and v_max. The position is kept inside `arena`.
RobotState step_robot(const RobotState& robot, const Vector& target, const ControllerConfig& ctrl, double dt,
                      const DomainBox& arena);

struct SeekConfig {
    Algorithm algorithm = Algorithm::gmes;
    std::size_t m = 4;
    int T_max = 60;
    /// length_scale in meters; the noise term is derived from sigma0.
    KernelSpec kernel{0.9, 1.0, 0.01, 1e-8};
    GmesConfig gmes;
    BaselineConfig baseline;
    SafetyConfig safety;
    ControllerConfig controller;
    double sigma0 = 0.02;
    double dt = 0.05;
    int step_budget = 400;
    double arrival_tolerance = 0.05;
    double convergence_radius = 0.1;
    int convergence_hits = 3;
    /// Observations (meters, field units) available before the first
    /// iteration.
    std::vector<std::pair<Vector, double>> prior_observations;

    void validate() const;
};

struct TrajectoryRow {
    double t = 0.0;
    int robot_id = 0;
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;
    double v = 0.0;
    double target_x = 0.0;
    double target_y = 0.0;
};

struct SeekResult {
    std::string scenario;
    std::string algorithm;
    std::uint64_t seed = 0;
    std::size_t m = 0;
    int iterations_to_converge = 0;
    double sim_time_s = 0.0;
    bool converged = false;
    /// Inferred maximum after each iteration.
    std::vector<Vector> inferred;
    /// Published query batch of each iteration.
    std::vector<QueryBatch> batches;
    std::vector<TrajectoryRow> trajectory;
    double min_pair_distance = 0.0;
    int safety_stalls = 0;
    Vector brightest;
};

/// BO loop on the robots: observe at the current positions, refit, check
/// termination, select the next batch, drive there. Throws SafetyViolation
/// if two robots ever come within d_safe.
SeekResult run_seek(const LightField& field, const SeekConfig& cfg, std::uint64_t seed);

/// t,robot_id,x,y,heading,v,target_x,target_y
void write_trajectory_csv(const SeekResult& result, std::ostream& out);
void write_seek_summary_json(const SeekResult& result, std::ostream& out);

}  // namespace gmes
