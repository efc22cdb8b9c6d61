#include "gmes/testbed.hpp"

#include "gmes/errors.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

namespace gmes {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr std::uint64_t kInitStream = 0x494e4954;
constexpr std::uint64_t kObsStream = 0x4f425356;

double ackley(const Vector& x) {
    const double n = static_cast<double>(x.size());
    const double sq = x.squaredNorm() / n;
    const double cs = (2.0 * kPi * x.array()).cos().sum() / n;
    return 20.0 * std::exp(-0.2 * std::sqrt(sq)) + std::exp(cs) - std::exp(1.0) - 20.0;
}

double bird(const Vector& x) {
    const double a = x[0], b = x[1];
    const double v = std::sin(a) * std::exp((1.0 - std::cos(b)) * (1.0 - std::cos(b))) +
                     std::cos(b) * std::exp((1.0 - std::sin(a)) * (1.0 - std::sin(a))) + (a - b) * (a - b);
    return -v;
}

double rosenbrock(const Vector& x) {
    double v = 0.0;
    for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
        v += 100.0 * (x[i + 1] - x[i] * x[i]) * (x[i + 1] - x[i] * x[i]) + (1.0 - x[i]) * (1.0 - x[i]);
    }
    return -v;
}

Vector vec2(double a, double b) {
    Vector v(2);
    v << a, b;
    return v;
}

template <class E>
[[noreturn]] void rethrow_at(int t, const E& e) {
    throw E("iteration " + std::to_string(t) + ": " + e.what());
}

}  // namespace

const std::vector<std::string>& test_function_names() {
    static const std::vector<std::string> names{"ackley", "bird", "rosenbrock"};
    return names;
}

TestFunction make_test_function(const std::string& name) {
    TestFunction fn;
    fn.name = name;
    if (name == "ackley") {
        fn.domain = DomainBox(Vector::Constant(2, -5.0), Vector::Constant(2, 5.0));
        fn.f_star = 0.0;
        fn.x_star_set = {Vector::Zero(2)};
        fn.formula = ackley;
    } else if (name == "bird") {
        fn.domain = DomainBox(Vector::Constant(2, -2.0 * kPi), Vector::Constant(2, 2.0 * kPi));
        // Dense 2000^2 grid followed by Nelder-Mead refinement.
        fn.f_star = 106.76453674926474;
        fn.x_star_set = {vec2(4.70104313370157, 3.1529384999840433), vec2(-1.582142163079009, -3.1302468024686796)};
        fn.formula = bird;
    } else if (name == "rosenbrock") {
        fn.domain = DomainBox(Vector::Constant(2, -2.0), Vector::Constant(2, 2.0));
        fn.f_star = 0.0;
        fn.x_star_set = {Vector::Ones(2)};
        fn.formula = rosenbrock;
    } else {
        throw ConfigError("unknown test function '" + name + "' (expected ackley, bird or rosenbrock)");
    }
    return fn;
}

double eval_function(const TestFunction& fn, const Vector& x) {
    if (static_cast<std::size_t>(x.size()) != fn.domain.dim() || !fn.domain.contains(x, 1e-12)) {
        throw DomainError(fn.name + ": query outside the domain");
    }
    return fn.formula(x);
}

void ObservationModel::validate() const {
    if (!(sigma0 >= 0.0)) throw ConfigError("observation model: sigma0 must be >= 0");
}

double observe(const TestFunction& fn, const Vector& x, const ObservationModel& obs, Rng& rng) {
    const double f = eval_function(fn, x);
    if (obs.sigma0 == 0.0) return f;
    std::normal_distribution<double> noise(0.0, obs.sigma0);
    return f + noise(rng);
}

OutputScaling OutputScaling::probe(const TestFunction& fn) {
    const DomainBox& box = fn.domain;
    const auto d = static_cast<Eigen::Index>(box.dim());
    const Eigen::Index g = 64;
    Eigen::Index total = 1;
    for (Eigen::Index j = 0; j < d; ++j) total *= g;
    double sum = 0.0, sum_sq = 0.0;
    Vector x(d);
    for (Eigen::Index idx = 0; idx < total; ++idx) {
        Eigen::Index rem = idx;
        for (Eigen::Index j = 0; j < d; ++j) {
            x[j] = box.lower[j] + static_cast<double>(rem % g) / static_cast<double>(g - 1) * (box.upper[j] - box.lower[j]);
            rem /= g;
        }
        const double f = fn.formula(x);
        sum += f;
        sum_sq += f * f;
    }
    OutputScaling s;
    s.offset = sum / static_cast<double>(total);
    const double var = sum_sq / static_cast<double>(total) - s.offset * s.offset;
    s.scale = var > 0.0 ? std::sqrt(var) : 1.0;
    return s;
}

Algorithm parse_algorithm(const std::string& name) {
    if (name == "gmes") return Algorithm::gmes;
    if (name == "ucb_pe") return Algorithm::ucb_pe;
    if (name == "bucb") return Algorithm::bucb;
    if (name == "thompson") return Algorithm::thompson;
    throw ConfigError("unknown algorithm '" + name + "' (expected gmes, ucb_pe, bucb or thompson)");
}

std::string algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::gmes: return "gmes";
        case Algorithm::ucb_pe: return "ucb_pe";
        case Algorithm::bucb: return "bucb";
        case Algorithm::thompson: return "thompson";
    }
    return "unknown";
}

void ExperimentConfig::validate() const {
    if (T < 1) throw ConfigError("experiment: T must be >= 1");
    if (m < 1) throw ConfigError("experiment: m must be >= 1");
    if (!(sigma0 >= 0.0)) throw ConfigError("experiment: sigma0 must be >= 0");
    if (seeds.empty()) throw ConfigError("experiment: at least one seed is required");
    try {
        kernel.validate();
    } catch (const DomainError& e) {
        throw ConfigError(std::string("experiment: ") + e.what());
    }
    gmes.validate();
    baseline.validate();
    make_test_function(function);
}

std::pair<double, double> compute_regret(RegretState& state, const Vector& true_values) {
    if (true_values.size() > 0) state.best_true = std::max(state.best_true, true_values.maxCoeff());
    const double r = state.f_star - state.best_true;
    state.cumulative += r;
    return {r, state.cumulative};
}

QueryBatch select_batch(Algorithm algorithm, const GpPosterior& gp, int t, const DomainBox& box, std::size_t m,
                        const GmesConfig& gcfg, const BaselineConfig& bcfg) {
    switch (algorithm) {
        case Algorithm::gmes: return gmes_select_batch(gp, t, box, m, gcfg).first;
        case Algorithm::ucb_pe: return ucb_pe_select(gp, t, box, m, bcfg);
        case Algorithm::bucb: return bucb_select(gp, t, box, m, bcfg);
        case Algorithm::thompson: return thompson_select(gp, t, box, m, bcfg);
    }
    throw ConfigError("unknown algorithm");
}

RegretTrace run_experiment(const ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const TestFunction fn = make_test_function(cfg.function);
    const DomainBox& dom = fn.domain;
    const auto d = dom.dim();
    const DomainBox model_box = cfg.normalize ? DomainBox::unit(d) : dom;
    const OutputScaling scaling = cfg.normalize ? OutputScaling::probe(fn) : OutputScaling{};
    auto to_model = [&](const Vector& x) -> Vector {
        return cfg.normalize ? Vector((x - dom.lower).cwiseQuotient(dom.width())) : x;
    };
    auto to_domain = [&](const Vector& u) -> Vector {
        return cfg.normalize ? dom.clamp(dom.lower + u.cwiseProduct(dom.width())) : dom.clamp(u);
    };

    KernelSpec kernel = cfg.kernel;
    const double noise_sd = cfg.sigma0 / scaling.scale;
    kernel.noise_variance = std::max(noise_sd * noise_sd, 1e-6);
    GmesConfig gcfg = cfg.gmes;
    gcfg.rng_seed = seed;
    BaselineConfig bcfg = cfg.baseline;
    bcfg.rng_seed = seed;
    const ObservationModel obs{cfg.sigma0, seed};

    RegretTrace trace;
    trace.function = fn.name;
    trace.algorithm = algorithm_name(cfg.algorithm);
    trace.seed = seed;
    trace.m = cfg.m;
    trace.scaling = scaling;

    Rng init_rng = make_rng(seed, {kInitStream});
    Rng obs_rng = make_rng(seed, {kObsStream});
    Matrix x0(static_cast<Eigen::Index>(cfg.m), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < x0.rows(); ++i) x0.row(i) = uniform_in_box(dom, init_rng).transpose();
    QueryBatch previous(x0);
    trace.batches.push_back(previous);

    auto true_values = [&](const QueryBatch& b) {
        Vector v(static_cast<Eigen::Index>(b.size()));
        for (std::size_t i = 0; i < b.size(); ++i) v[static_cast<Eigen::Index>(i)] = eval_function(fn, b.point(i));
        return v;
    };

    RegretState state;
    state.f_star = fn.f_star;
    // R_0 scores the initial queries and enters the cumulative sum; R_t for
    // t >= 1 maximizes over X_1 .. X_t only.
    trace.initial_regret = compute_regret(state, true_values(previous)).first;
    state.best_true = -std::numeric_limits<double>::infinity();

    Dataset data(d);
    double best_y = -std::numeric_limits<double>::infinity();
    for (int t = 1; t <= cfg.T; ++t) {
        const auto start = std::chrono::steady_clock::now();
        RegretRecord rec;
        try {
            for (std::size_t i = 0; i < previous.size(); ++i) {
                const Vector x = previous.point(i);
                const double y = observe(fn, x, obs, obs_rng);
                best_y = std::max(best_y, y);
                data.append(to_model(x), scaling.to_model(y));
            }
            const GpPosterior gp = fit_posterior(kernel, data);
            const QueryBatch next = select_batch(cfg.algorithm, gp, t, model_box, cfg.m, gcfg, bcfg);
            Matrix pts(next.points.rows(), next.points.cols());
            for (Eigen::Index i = 0; i < pts.rows(); ++i) pts.row(i) = to_domain(next.points.row(i).transpose()).transpose();
            previous = QueryBatch(pts);
            rec.inferred_x = to_domain(find_mean_argmax(gp, model_box, gcfg));
        } catch (const FactorizationError& e) {
            rethrow_at(t, e);
        } catch (const InitializationError& e) {
            rethrow_at(t, e);
        } catch (const DomainError& e) {
            rethrow_at(t, e);
        }
        trace.batches.push_back(previous);
        const auto [r, cum] = compute_regret(state, true_values(previous));
        rec.iter = t;
        rec.instant_regret = r;
        rec.cumulative_regret = cum;
        rec.best_value = best_y;
        rec.dataset_size = data.size();
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        trace.records.push_back(std::move(rec));
    }
    return trace;
}

void write_trace_csv(const RegretTrace& trace, std::ostream& out, bool include_timing) {
    const std::size_t d = trace.records.empty() ? 0 : static_cast<std::size_t>(trace.records.front().inferred_x.size());
    out << "iter,instant_regret,cumulative_regret,best_value";
    for (std::size_t j = 0; j < d; ++j) out << ",inferred_x" << j;
    out << ",wall_ms\n";
    std::ostringstream line;
    line << std::setprecision(17);
    for (const auto& r : trace.records) {
        line.str("");
        line << r.iter << ',' << r.instant_regret << ',' << r.cumulative_regret << ',' << r.best_value;
        for (Eigen::Index j = 0; j < r.inferred_x.size(); ++j) line << ',' << r.inferred_x[j];
        line << ',' << (include_timing ? r.wall_ms : 0.0) << '\n';
        out << line.str();
    }
}

}  // namespace gmes
