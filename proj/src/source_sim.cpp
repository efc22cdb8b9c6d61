#include "gmes/source_sim.hpp"

#include "gmes/errors.hpp"
#include "gmes/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

namespace gmes {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr std::uint64_t kSensorStream = 0x53454e53;

Vector vec2(double a, double b) {
    Vector v(2);
    v << a, b;
    return v;
}

double wrap_angle(double a) {
    a = std::fmod(a + kPi, 2.0 * kPi);
    if (a < 0.0) a += 2.0 * kPi;
    return a - kPi;
}

double raw_field(const LightField& field, const Vector& x) {
    double v = 0.0;
    for (const Lamp& l : field.lamps) v += l.intensity / (l.height * l.height + (x - l.position).squaredNorm());
    return v;
}

LightField finish(LightField f) {
    f.validate();
    f.locate_brightest();
    return f;
}

// Half-space a . x >= b.
struct HalfSpace {
    Vector a;
    double b;
};

bool satisfies(const std::vector<HalfSpace>& hs, const Vector& x) {
    for (const auto& h : hs) {
        if (h.a.dot(x) < h.b - 1e-12 * (1.0 + std::abs(h.b))) return false;
    }
    return true;
}

// Output standardization from a 64 x 64 probe of the field.
OutputScaling probe_field(const LightField& field) {
    const int g = 64;
    double sum = 0.0, sum_sq = 0.0;
    const Vector w = field.arena.width();
    for (int i = 0; i < g; ++i) {
        for (int j = 0; j < g; ++j) {
            const double f = raw_field(field, field.arena.lower + vec2(i / (g - 1.0) * w[0], j / (g - 1.0) * w[1]));
            sum += f;
            sum_sq += f * f;
        }
    }
    OutputScaling s;
    s.offset = sum / (g * g);
    const double var = sum_sq / (g * g) - s.offset * s.offset;
    s.scale = var > 0.0 ? std::sqrt(var) : 1.0;
    return s;
}

}  // namespace

void LightField::validate() const {
    if (arena.dim() != 2) throw ConfigError("scenario '" + name + "': arena must be two-dimensional");
    if (!(arena.lower[0] < arena.upper[0] && arena.lower[1] < arena.upper[1])) {
        throw ConfigError("scenario '" + name + "': arena lower corner must be below the upper corner");
    }
    if (lamps.empty()) throw ConfigError("scenario '" + name + "': at least one lamp is required");
    for (const Lamp& l : lamps) {
        if (l.position.size() != 2) throw ConfigError("scenario '" + name + "': lamp position must be 2-D");
        if (!(l.height > 0.0)) throw ConfigError("scenario '" + name + "': lamp height must be > 0");
        if (!(l.intensity > 0.0)) throw ConfigError("scenario '" + name + "': lamp intensity must be > 0");
    }
    for (const Vector& s : starts) {
        if (s.size() != 2 || !arena.contains(s)) throw ConfigError("scenario '" + name + "': robot start outside the arena");
    }
}

void LightField::locate_brightest() {
    // Grid scan, then a compass search from the best grid cell.
    const int g = 400;
    const Vector w = arena.width();
    Vector best = arena.lower;
    double best_val = -1.0;
    for (int i = 0; i <= g; ++i) {
        for (int j = 0; j <= g; ++j) {
            const Vector x = arena.lower + vec2(i * w[0] / g, j * w[1] / g);
            const double f = raw_field(*this, x);
            if (f > best_val) {
                best_val = f;
                best = x;
            }
        }
    }
    double step = w.maxCoeff() / g;
    const Vector dirs[4] = {vec2(1, 0), vec2(-1, 0), vec2(0, 1), vec2(0, -1)};
    while (step > 1e-12) {
        bool moved = false;
        for (const Vector& d : dirs) {
            const Vector x = arena.clamp(best + step * d);
            const double f = raw_field(*this, x);
            if (f > best_val) {
                best_val = f;
                best = x;
                moved = true;
            }
        }
        if (!moved) step *= 0.5;
    }
    brightest = best;
}

const std::vector<std::string>& scenario_names() {
    static const std::vector<std::string> names{"SINGLE", "SPARSE", "DENSE"};
    return names;
}

LightField make_scenario(const std::string& name) {
    LightField f;
    f.name = name;
    f.arena = DomainBox(Vector::Zero(2), Vector::Constant(2, 4.0));
    f.starts = {vec2(0.5, 0.5), vec2(1.0, 0.5), vec2(0.5, 1.0), vec2(1.0, 1.0),
                vec2(1.5, 0.5), vec2(0.5, 1.5), vec2(1.5, 1.0), vec2(1.0, 1.5)};
    if (name == "SINGLE") {
        f.lamps = {{vec2(2.9, 2.7), 0.9, 1.0}};
    } else if (name == "SPARSE") {
        // Two bright lamps in opposite top corners, two dim ones at the
        // bottom; the low bright lamp defines the target.
        f.lamps = {{vec2(3.0, 2.9), 0.8, 1.0},
                   {vec2(0.9, 3.1), 1.3, 1.4},
                   {vec2(1.2, 1.6), 1.0, 0.45},
                   {vec2(3.1, 0.9), 0.9, 0.35}};
    } else if (name == "DENSE") {
        f.lamps = {{vec2(2.4, 2.7), 0.8, 1.0},
                   {vec2(3.0, 1.9), 1.2, 1.5},
                   {vec2(1.7, 1.8), 1.0, 0.5},
                   {vec2(1.5, 2.9), 0.9, 0.4}};
    } else {
        throw ConfigError("unknown scenario '" + name + "' (expected SINGLE, SPARSE or DENSE)");
    }
    return finish(std::move(f));
}

LightField parse_scenario(std::istream& in, const std::string& name) {
    LightField f;
    f.name = name;
    bool have_arena = false;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        std::string key;
        if (!(ss >> key)) continue;
        auto fail = [&](const std::string& what) -> ConfigError {
            return ConfigError(name + ":" + std::to_string(lineno) + ": " + what);
        };
        auto read = [&](int count) {
            std::vector<double> v(static_cast<std::size_t>(count));
            for (auto& x : v) {
                if (!(ss >> x)) throw fail("'" + key + "' expects " + std::to_string(count) + " numbers");
            }
            std::string extra;
            if (ss >> extra) throw fail("unexpected trailing token '" + extra + "'");
            return v;
        };
        if (key == "arena") {
            const auto v = read(4);
            f.arena = DomainBox(vec2(v[0], v[1]), vec2(v[2], v[3]));
            have_arena = true;
        } else if (key == "lamp") {
            const auto v = read(4);
            f.lamps.push_back({vec2(v[0], v[1]), v[2], v[3]});
        } else if (key == "robot") {
            const auto v = read(2);
            f.starts.push_back(vec2(v[0], v[1]));
        } else {
            throw fail("unknown declaration '" + key + "' (expected arena, lamp or robot)");
        }
    }
    if (!have_arena) throw ConfigError(name + ": missing 'arena' declaration");
    return finish(std::move(f));
}

LightField load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
    return parse_scenario(in, path);
}

double field_value(const LightField& field, const Vector& x) {
    if (x.size() != 2 || !field.arena.contains(x, 1e-12)) throw DomainError(field.name + ": point outside the arena");
    return raw_field(field, x);
}

void SafetyConfig::validate() const {
    std::string problems;
    if (!(d_safe > 0.0)) problems += " d_safe must be > 0;";
    if (!(k_alpha >= 0.0)) problems += " k_alpha must be >= 0;";
    if (!(t_lk > 0.0)) problems += " t_lk must be > 0;";
    if (!(v_min > 0.0)) problems += " v_min must be > 0;";
    if (!(r_div >= 0.0)) problems += " r_div must be >= 0;";
    if (!problems.empty()) throw ConfigError("safety config:" + problems);
}

void ControllerConfig::validate() const {
    std::string problems;
    if (!(kp_v > 0.0)) problems += " kp_v must be > 0;";
    if (!(kp_w > 0.0)) problems += " kp_w must be > 0;";
    if (ki_v < 0.0 || kd_v < 0.0 || ki_w < 0.0 || kd_w < 0.0) problems += " gains must be >= 0;";
    if (!(v_max > 0.0)) problems += " v_max must be > 0;";
    if (!(w_max > 0.0)) problems += " w_max must be > 0;";
    if (!(deadband >= 0.0)) problems += " deadband must be >= 0;";
    if (!problems.empty()) throw ConfigError("controller config:" + problems);
}

Vector lookahead_target(const RobotState& robot, const Vector& query, const SafetyConfig& cfg) {
    const double r_lk = std::max(robot.v, cfg.v_min) * cfg.t_lk;
    const Vector delta = query - robot.position;
    const double dist = delta.norm();
    if (dist <= r_lk) return query;
    return robot.position + (r_lk / dist) * delta;
}

CbfProjection cbf_project(const RobotState& robot, const Vector& lookahead, const std::vector<RobotState>& others,
                          const SafetyConfig& cfg, double dt, const DomainBox& arena) {
    std::vector<HalfSpace> hs;
    const double shrink = 1.0 - cfg.k_alpha * dt;
    for (const RobotState& o : others) {
        const Vector rel = robot.position - o.position;
        const double d = rel.norm();
        const Vector u = rel / d;
        hs.push_back({u, u.dot(o.position) + shrink * d + cfg.k_alpha * dt * cfg.d_safe});
    }
    for (int j = 0; j < 2; ++j) {
        Vector e = Vector::Zero(2);
        e[j] = 1.0;
        hs.push_back({e, arena.lower[j]});
        hs.push_back({-e, -arena.upper[j]});
    }
    if (satisfies(hs, lookahead)) return {lookahead, false};

    // The minimizer of a 2-D distance over a polygon lies on one active edge
    // or at a vertex of two; enumerate both kinds.
    Vector best;
    double best_d = std::numeric_limits<double>::infinity();
    auto consider = [&](const Vector& x) {
        if (!satisfies(hs, x)) return;
        const double d = (x - lookahead).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = x;
        }
    };
    for (const auto& h : hs) consider(lookahead + (h.b - h.a.dot(lookahead)) / h.a.squaredNorm() * h.a);
    for (std::size_t k = 0; k < hs.size(); ++k) {
        for (std::size_t l = k + 1; l < hs.size(); ++l) {
            const double det = hs[k].a[0] * hs[l].a[1] - hs[k].a[1] * hs[l].a[0];
            if (std::abs(det) < 1e-12) continue;
            consider(vec2((hs[k].b * hs[l].a[1] - hs[l].b * hs[k].a[1]) / det,
                          (hs[k].a[0] * hs[l].b - hs[l].a[0] * hs[k].b) / det));
        }
    }
    if (!std::isfinite(best_d)) return {robot.position, true};
    return {best, false};
}

RobotState step_robot(const RobotState& robot, const Vector& target, const ControllerConfig& ctrl, double dt,
                      const DomainBox& arena) {
    RobotState next = robot;
    const Vector delta = target - robot.position;
    const double dist = delta.norm();
    if (dist < ctrl.deadband) {
        next.v = 0.0;
        next.dist_integral = 0.0;
        next.heading_integral = 0.0;
        next.dist_prev = dist;
        next.heading_prev = 0.0;
        return next;
    }
    const double err = wrap_angle(std::atan2(delta[1], delta[0]) - robot.heading);
    next.heading_integral += err * dt;
    const double w = std::clamp(ctrl.kp_w * err + ctrl.ki_w * next.heading_integral +
                                    ctrl.kd_w * wrap_angle(err - robot.heading_prev) / dt,
                                -ctrl.w_max, ctrl.w_max);
    next.heading_prev = err;

    next.dist_integral += dist * dt;
    double v = ctrl.kp_v * dist + ctrl.ki_v * next.dist_integral + ctrl.kd_v * (dist - robot.dist_prev) / dt;
    next.dist_prev = dist;
    // Drive forward only while roughly facing the target.
    v *= std::max(0.0, std::cos(err));
    next.v = std::clamp(v, 0.0, ctrl.v_max);

    next.heading = wrap_angle(robot.heading + w * dt);
    next.position = arena.clamp(robot.position + next.v * dt * vec2(std::cos(next.heading), std::sin(next.heading)));
    return next;
}

void SeekConfig::validate() const {
    if (m < 1) throw ConfigError("seek: m must be >= 1");
    if (T_max < 1) throw ConfigError("seek: T_max must be >= 1");
    if (!(sigma0 >= 0.0)) throw ConfigError("seek: sigma0 must be >= 0");
    if (!(dt > 0.0)) throw ConfigError("seek: dt must be > 0");
    if (step_budget < 1) throw ConfigError("seek: step_budget must be >= 1");
    if (!(arrival_tolerance > 0.0)) throw ConfigError("seek: arrival_tolerance must be > 0");
    if (!(convergence_radius > 0.0)) throw ConfigError("seek: convergence_radius must be > 0");
    if (convergence_hits < 1) throw ConfigError("seek: convergence_hits must be >= 1");
    try {
        kernel.validate();
    } catch (const DomainError& e) {
        throw ConfigError(std::string("seek: ") + e.what());
    }
    gmes.validate();
    baseline.validate();
    safety.validate();
    controller.validate();
}

SeekResult run_seek(const LightField& field, const SeekConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    field.validate();
    if (field.starts.size() < cfg.m) {
        throw ConfigError("scenario '" + field.name + "' declares " + std::to_string(field.starts.size()) +
                          " robot starts, need " + std::to_string(cfg.m));
    }
    const SafetyConfig& safety = cfg.safety;
    const DomainBox& arena = field.arena;
    const auto m = static_cast<Eigen::Index>(cfg.m);

    std::vector<RobotState> robots(cfg.m);
    for (std::size_t i = 0; i < cfg.m; ++i) {
        robots[i].position = field.starts[i];
        robots[i].target = field.starts[i];
        robots[i].heading = kPi / 4.0;
    }
    auto min_distance = [&robots]() {
        double d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < robots.size(); ++i) {
            for (std::size_t j = i + 1; j < robots.size(); ++j) d = std::min(d, (robots[i].position - robots[j].position).norm());
        }
        return d;
    };
    if (min_distance() <= safety.d_safe) throw ConfigError("seek: robot starts closer than d_safe");

    const OutputScaling scaling = probe_field(field);
    KernelSpec kernel = cfg.kernel;
    const double noise_sd = cfg.sigma0 / scaling.scale;
    kernel.noise_variance = std::max(noise_sd * noise_sd, 1e-6);
    GmesConfig gcfg = cfg.gmes;
    gcfg.rng_seed = seed;
    gcfg.r_div = safety.r_div;
    gcfg.use_barrier = true;
    BaselineConfig bcfg = cfg.baseline;
    bcfg.rng_seed = seed;

    SeekResult res;
    res.scenario = field.name;
    res.algorithm = algorithm_name(cfg.algorithm);
    res.seed = seed;
    res.m = cfg.m;
    res.brightest = field.brightest;
    res.min_pair_distance = min_distance();

    Rng sensor = make_rng(seed, {kSensorStream});
    std::normal_distribution<double> noise(0.0, 1.0);
    Dataset data(2);
    for (const auto& [x, y] : cfg.prior_observations) data.append(x, scaling.to_model(y));

    double clock = 0.0;
    auto log_state = [&]() {
        for (std::size_t i = 0; i < robots.size(); ++i) {
            const RobotState& r = robots[i];
            res.trajectory.push_back({clock, static_cast<int>(i), r.position[0], r.position[1], r.heading, r.v,
                                      r.target[0], r.target[1]});
        }
    };
    log_state();

    int hits = 0;
    for (int t = 1; t <= cfg.T_max; ++t) {
        for (const RobotState& r : robots) {
            double y = field_value(field, r.position);
            if (cfg.sigma0 > 0.0) y += cfg.sigma0 * noise(sensor);
            data.append(r.position, scaling.to_model(y));
        }
        const GpPosterior gp = fit_posterior(kernel, data);
        const Vector inferred = find_mean_argmax(gp, arena, gcfg);
        res.inferred.push_back(inferred);
        hits = (inferred - field.brightest).norm() <= cfg.convergence_radius ? hits + 1 : 0;
        res.iterations_to_converge = t;
        if (hits >= cfg.convergence_hits) {
            res.converged = true;
            break;
        }
        if (t == cfg.T_max) break;

        const QueryBatch batch = select_batch(cfg.algorithm, gp, t, arena, cfg.m, gcfg, bcfg);
        res.batches.push_back(batch);
        for (Eigen::Index i = 0; i < m; ++i) robots[static_cast<std::size_t>(i)].target = batch.point(static_cast<std::size_t>(i));

        for (int step = 0; step < cfg.step_budget; ++step) {
            bool arrived = true;
            for (const RobotState& r : robots) arrived = arrived && (r.position - r.target).norm() <= cfg.arrival_tolerance;
            if (arrived) break;

            // Targets are projected against the previous substep's states;
            // moves are committed in robot order, and a move that would bring
            // a robot within d_safe of an already committed position is
            // dropped (the robot holds for this substep).
            const std::vector<RobotState> prev = robots;
            std::vector<RobotState> others;
            for (std::size_t i = 0; i < robots.size(); ++i) {
                others.clear();
                for (std::size_t j = 0; j < prev.size(); ++j) {
                    if (j != i) others.push_back(prev[j]);
                }
                const Vector la = lookahead_target(prev[i], prev[i].target, safety);
                const CbfProjection proj = cbf_project(prev[i], la, others, safety, safety.t_lk, arena);
                if (proj.stalled) ++res.safety_stalls;
                RobotState next = step_robot(prev[i], proj.target, cfg.controller, cfg.dt, arena);
                bool safe = true;
                for (std::size_t j = 0; j < robots.size() && safe; ++j) {
                    if (j == i) continue;
                    const double after = (next.position - robots[j].position).norm();
                    const double before = (prev[i].position - robots[j].position).norm();
                    safe = after > safety.d_safe + 1e-3 || after >= before;
                }
                if (!safe) {
                    next.position = prev[i].position;
                    next.v = 0.0;
                    ++res.safety_stalls;
                }
                robots[i] = next;
            }
            clock += cfg.dt;
            const double dmin = min_distance();
            res.min_pair_distance = std::min(res.min_pair_distance, dmin);
            if (dmin <= safety.d_safe) {
                throw SafetyViolation("seek: robots within d_safe at t = " + std::to_string(clock) + " s");
            }
            log_state();
        }
    }
    res.sim_time_s = clock;
    return res;
}

void write_trajectory_csv(const SeekResult& result, std::ostream& out) {
    out << "t,robot_id,x,y,heading,v,target_x,target_y\n";
    std::ostringstream line;
    line << std::setprecision(17);
    for (const TrajectoryRow& r : result.trajectory) {
        line.str("");
        line << r.t << ',' << r.robot_id << ',' << r.x << ',' << r.y << ',' << r.heading << ',' << r.v << ','
             << r.target_x << ',' << r.target_y << '\n';
        out << line.str();
    }
}

void write_seek_summary_json(const SeekResult& result, std::ostream& out) {
    nlohmann::ordered_json j;
    j["scenario"] = result.scenario;
    j["algorithm"] = result.algorithm;
    j["seed"] = result.seed;
    j["m"] = result.m;
    j["converged"] = result.converged;
    j["iterations_to_converge"] = result.iterations_to_converge;
    j["sim_time_s"] = result.sim_time_s;
    j["min_pair_distance"] = result.min_pair_distance;
    j["safety_stalls"] = result.safety_stalls;
    j["brightest"] = {result.brightest[0], result.brightest[1]};
    nlohmann::ordered_json inferred = nlohmann::ordered_json::array();
    for (const Vector& x : result.inferred) inferred.push_back({x[0], x[1]});
    j["inferred"] = inferred;
    out << j.dump(2) << '\n';
}

}  // namespace gmes
