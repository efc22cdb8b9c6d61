#include "gmes/cli.hpp"

#include "gmes/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

namespace gmes {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Config reading

// Typed access to the members of one JSON object. Type mismatches and
// unknown keys are collected into `errs` rather than thrown, so that a
// single pass reports every problem.
class Fields {
public:
    Fields(const json* obj, std::string path, std::vector<std::string>& errs)
        : obj_(obj), path_(std::move(path)), errs_(errs) {
        if (obj_ != nullptr && !obj_->is_object()) {
            errs_.push_back(path_ + ": expected an object");
            obj_ = nullptr;
        }
    }

    template <class T>
    void get(const char* key, T& out) {
        const json* v = find(key);
        if (v == nullptr) return;
        if (!convert(*v, out)) errs_.push_back(where(key) + ": expected " + type_name<T>());
    }

    /// A scalar or an array of scalars.
    template <class T>
    std::vector<T> list(const char* key, std::vector<T> fallback) {
        const json* v = find(key);
        if (v == nullptr) return fallback;
        std::vector<T> out;
        if (!v->is_array()) {
            T x{};
            if (convert(*v, x)) return {x};
            errs_.push_back(where(key) + ": expected " + type_name<T>() + " or a list of them");
            return fallback;
        }
        if (v->empty()) {
            errs_.push_back(where(key) + ": list must not be empty");
            return fallback;
        }
        for (std::size_t i = 0; i < v->size(); ++i) {
            T x{};
            if (convert((*v)[i], x)) {
                out.push_back(x);
            } else {
                errs_.push_back(where(key) + "[" + std::to_string(i) + "]: expected " + type_name<T>());
            }
        }
        return out.empty() ? fallback : out;
    }

    Fields sub(const char* key) { return Fields(find(key), where(key), errs_); }
    void touch(const char* key) { seen_.insert(key); }

    /// Flags keys that were never read.
    void finish() {
        if (obj_ == nullptr) return;
        for (auto it = obj_->begin(); it != obj_->end(); ++it) {
            if (!seen_.count(it.key())) errs_.push_back(where(it.key().c_str()) + ": unknown key");
        }
    }

    std::vector<std::string>& errors() { return errs_; }
    std::string where(const char* key) const { return path_.empty() ? std::string(key) : path_ + "." + key; }

private:
    const json* find(const char* key) {
        seen_.insert(key);
        if (obj_ == nullptr) return nullptr;
        auto it = obj_->find(key);
        return it == obj_->end() ? nullptr : &*it;
    }

    template <class T>
    static std::string type_name() {
        if constexpr (std::is_same_v<T, bool>) return "a boolean";
        if constexpr (std::is_same_v<T, std::string>) return "a string";
        if constexpr (std::is_same_v<T, double>) return "a number";
        if constexpr (std::is_same_v<T, std::uint64_t> || std::is_same_v<T, std::size_t>) {
            return "a non-negative integer";
        }
        return "an integer";
    }

    template <class T>
    static bool convert(const json& v, T& out) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) return false;
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) return false;
        } else if constexpr (std::is_same_v<T, double>) {
            if (!v.is_number()) return false;
        } else if constexpr (std::is_unsigned_v<T>) {
            if (!v.is_number_unsigned()) return false;
        } else {
            if (!v.is_number_integer()) return false;
        }
        out = v.get<T>();
        return true;
    }

    const json* obj_;
    std::string path_;
    std::vector<std::string>& errs_;
    std::set<std::string> seen_;
};

void read_kernel(Fields f, KernelSpec& k) {
    f.get("length_scale", k.length_scale);
    f.get("signal_variance", k.signal_variance);
    f.get("jitter", k.jitter);
    double nu = 1.5;
    f.get("nu", nu);
    if (nu != 1.5) f.errors().push_back(f.where("nu") + ": only the Matern 3/2 kernel (nu = 1.5) is implemented");
    f.finish();
}

void read_gmes(Fields f, GmesConfig& g) {
    f.get("ascent_iters", g.ascent_iters);
    f.get("base_step", g.step.base_step);
    f.get("step_beta1", g.step.beta1);
    f.get("step_beta2", g.step.beta2);
    f.get("step_epsilon", g.step.epsilon);
    f.get("r_div", g.r_div);
    f.get("use_barrier", g.use_barrier);
    f.get("barrier_scale", g.barrier_scale);
    f.get("ucb_restarts", g.restarts);
    f.get("ucb_iters", g.ucb_iters);
    f.get("ucb_grid_resolution", g.grid_resolution);
    f.get("batch_restarts", g.batch_restarts);
    f.finish();
}

void read_baseline(Fields f, BaselineConfig& b) {
    f.get("candidate_grid_resolution", b.candidate_grid_resolution);
    f.get("ucb_restarts", b.ucb_restarts);
    f.get("ucb_iters", b.ucb_iters);
    f.get("ucb_grid_resolution", b.ucb_grid_resolution);
    f.finish();
}

BetaSchedule read_beta(Fields f) {
    BetaSchedule b;
    f.get("initial", b.initial);
    f.get("slope", b.slope);
    f.finish();
    return b;
}

std::vector<Algorithm> read_algorithms(Fields& f) {
    std::vector<Algorithm> out;
    for (const auto& name : f.list<std::string>("algorithm", {"gmes"})) {
        try {
            out.push_back(parse_algorithm(name));
        } catch (const ConfigError& e) {
            f.errors().push_back(f.where("algorithm") + ": " + e.what());
        }
    }
    return out;
}

void read_experiments(Fields f, std::vector<ExperimentConfig>& out) {
    ExperimentConfig base;
    const auto algorithms = read_algorithms(f);
    const auto functions = f.list<std::string>("function", {base.function});
    const auto ms = f.list<std::size_t>("m", {base.m});
    f.get("T", base.T);
    f.get("sigma0", base.sigma0);
    base.seeds = f.list<std::uint64_t>("seeds", base.seeds);
    f.get("normalize", base.normalize);
    read_kernel(f.sub("kernel"), base.kernel);
    base.gmes.beta = read_beta(f.sub("beta"));
    base.baseline.beta = base.gmes.beta;
    read_gmes(f.sub("gmes"), base.gmes);
    read_baseline(f.sub("baseline"), base.baseline);
    f.finish();
    for (Algorithm a : algorithms) {
        for (const auto& fn : functions) {
            for (std::size_t m : ms) {
                ExperimentConfig c = base;
                c.algorithm = a;
                c.function = fn;
                c.m = m;
                out.push_back(std::move(c));
            }
        }
    }
}

void read_seeks(Fields f, std::vector<SeekJob>& out) {
    SeekJob base;
    SeekConfig& c = base.config;
    const auto scenarios = f.list<std::string>("scenario", {base.scenario});
    const auto algorithms = read_algorithms(f);
    const auto ms = f.list<std::size_t>("m", {c.m});
    base.seeds = f.list<std::uint64_t>("seeds", base.seeds);
    f.get("T_max", c.T_max);
    f.get("sigma0", c.sigma0);
    f.get("dt", c.dt);
    f.get("step_budget", c.step_budget);
    f.get("arrival_tolerance", c.arrival_tolerance);
    f.get("convergence_radius", c.convergence_radius);
    f.get("convergence_hits", c.convergence_hits);
    read_kernel(f.sub("kernel"), c.kernel);
    c.gmes.beta = read_beta(f.sub("beta"));
    c.baseline.beta = c.gmes.beta;
    read_gmes(f.sub("gmes"), c.gmes);
    read_baseline(f.sub("baseline"), c.baseline);
    {
        Fields s = f.sub("safety");
        s.get("d_safe", c.safety.d_safe);
        s.get("k_alpha", c.safety.k_alpha);
        s.get("t_lk", c.safety.t_lk);
        s.get("v_min", c.safety.v_min);
        s.get("r_div", c.safety.r_div);
        s.finish();
    }
    {
        Fields k = f.sub("controller");
        k.get("kp_v", c.controller.kp_v);
        k.get("ki_v", c.controller.ki_v);
        k.get("kd_v", c.controller.kd_v);
        k.get("kp_w", c.controller.kp_w);
        k.get("ki_w", c.controller.ki_w);
        k.get("kd_w", c.controller.kd_w);
        k.get("v_max", c.controller.v_max);
        k.get("w_max", c.controller.w_max);
        k.get("deadband", c.controller.deadband);
        k.finish();
    }
    f.finish();
    for (const auto& sc : scenarios) {
        for (Algorithm a : algorithms) {
            for (std::size_t m : ms) {
                SeekJob job = base;
                job.scenario = sc;
                job.config.algorithm = a;
                job.config.m = m;
                out.push_back(std::move(job));
            }
        }
    }
}

// Reads either a single grid object under `one` or a list of them under
// `many`.
template <class Reader>
void read_cells(Fields& top, const json& root, const char* one, const char* many, Reader reader) {
    if (root.contains(one)) reader(top.sub(one));
    if (root.contains(many)) {
        const json& arr = root.at(many);
        top.touch(many);
        if (!arr.is_array()) {
            top.errors().push_back(std::string(many) + ": expected a list of objects");
            return;
        }
        for (std::size_t i = 0; i < arr.size(); ++i) {
            reader(Fields(&arr[i], std::string(many) + "[" + std::to_string(i) + "]", top.errors()));
        }
    }
}

std::string join_lines(const std::vector<std::string>& errs) {
    std::string out;
    for (const auto& e : errs) out += (out.empty() ? "" : "\n") + e;
    return out;
}

// ---------------------------------------------------------------------------
// Config writing

json kernel_json(const KernelSpec& k) {
    return {{"length_scale", k.length_scale}, {"signal_variance", k.signal_variance}, {"jitter", k.jitter}, {"nu", 1.5}};
}

json beta_json(const BetaSchedule& b) { return {{"initial", b.initial}, {"slope", b.slope}}; }

json gmes_json(const GmesConfig& g) {
    return {{"ascent_iters", g.ascent_iters},
            {"base_step", g.step.base_step},
            {"step_beta1", g.step.beta1},
            {"step_beta2", g.step.beta2},
            {"step_epsilon", g.step.epsilon},
            {"r_div", g.r_div},
            {"use_barrier", g.use_barrier},
            {"barrier_scale", g.barrier_scale},
            {"ucb_restarts", g.restarts},
            {"ucb_iters", g.ucb_iters},
            {"ucb_grid_resolution", g.grid_resolution},
            {"batch_restarts", g.batch_restarts}};
}

json baseline_json(const BaselineConfig& b) {
    return {{"candidate_grid_resolution", b.candidate_grid_resolution},
            {"ucb_restarts", b.ucb_restarts},
            {"ucb_iters", b.ucb_iters},
            {"ucb_grid_resolution", b.ucb_grid_resolution}};
}

json experiment_json(const ExperimentConfig& c) {
    return {{"algorithm", algorithm_name(c.algorithm)},
            {"function", c.function},
            {"m", c.m},
            {"T", c.T},
            {"sigma0", c.sigma0},
            {"seeds", c.seeds},
            {"normalize", c.normalize},
            {"kernel", kernel_json(c.kernel)},
            {"beta", beta_json(c.gmes.beta)},
            {"gmes", gmes_json(c.gmes)},
            {"baseline", baseline_json(c.baseline)}};
}

json seek_json(const SeekJob& j) {
    const SeekConfig& c = j.config;
    return {{"scenario", j.scenario},
            {"algorithm", algorithm_name(c.algorithm)},
            {"m", c.m},
            {"seeds", j.seeds},
            {"T_max", c.T_max},
            {"sigma0", c.sigma0},
            {"dt", c.dt},
            {"step_budget", c.step_budget},
            {"arrival_tolerance", c.arrival_tolerance},
            {"convergence_radius", c.convergence_radius},
            {"convergence_hits", c.convergence_hits},
            {"kernel", kernel_json(c.kernel)},
            {"beta", beta_json(c.gmes.beta)},
            {"gmes", gmes_json(c.gmes)},
            {"baseline", baseline_json(c.baseline)},
            {"safety",
             {{"d_safe", c.safety.d_safe},
              {"k_alpha", c.safety.k_alpha},
              {"t_lk", c.safety.t_lk},
              {"v_min", c.safety.v_min},
              {"r_div", c.safety.r_div}}},
            {"controller",
             {{"kp_v", c.controller.kp_v},
              {"ki_v", c.controller.ki_v},
              {"kd_v", c.controller.kd_v},
              {"kp_w", c.controller.kp_w},
              {"ki_w", c.controller.ki_w},
              {"kd_w", c.controller.kd_w},
              {"v_max", c.controller.v_max},
              {"w_max", c.controller.w_max},
              {"deadband", c.controller.deadband}}}};
}

LightField resolve_scenario(const std::string& scenario) {
    const auto& names = scenario_names();
    if (std::find(names.begin(), names.end(), scenario) != names.end()) return make_scenario(scenario);
    return load_scenario(scenario);
}

std::string seek_stem(const SeekJob& job, std::uint64_t seed) {
    std::string sc = fs::path(job.scenario).stem().string();
    return sc + "_" + algorithm_name(job.config.algorithm) + "_m" + std::to_string(job.config.m) + "_seed" +
           std::to_string(seed);
}

// ---------------------------------------------------------------------------
// Output

std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

std::string svg_plot(const std::string& title, const std::string& ylabel,
                     const std::vector<std::pair<std::string, std::vector<double>>>& series) {
    const double W = 720, H = 440, left = 70, right = 150, top = 40, bottom = 50;
    const double pw = W - left - right, ph = H - top - bottom;
    const double floor = 1e-12;
    double lo = 1e300, hi = -1e300;
    std::size_t len = 1;
    for (const auto& [name, ys] : series) {
        len = std::max(len, ys.size());
        for (double y : ys) {
            const double l = std::log10(std::max(y, floor));
            lo = std::min(lo, l);
            hi = std::max(hi, l);
        }
    }
    if (lo > hi) lo = hi = 0.0;
    lo = std::floor(lo);
    hi = std::ceil(hi);
    if (hi <= lo) hi = lo + 1.0;
    auto px = [&](std::size_t i) { return left + pw * (len > 1 ? static_cast<double>(i) / (len - 1) : 0.0); };
    auto py = [&](double y) { return top + ph * (hi - std::log10(std::max(y, floor))) / (hi - lo); };

    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
    std::ostringstream s;
    s << std::fixed << std::setprecision(2);
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << left + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
    s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int e = static_cast<int>(lo); e <= static_cast<int>(hi); ++e) {
        const double y = top + ph * (hi - e) / (hi - lo);
        s << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << left + pw << "\" y2=\"" << y
          << "\" stroke=\"#ddd\"/>\n";
        s << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">1e" << e << "</text>\n";
    }
    for (int k = 0; k <= 4; ++k) {
        const std::size_t i = (len - 1) * static_cast<std::size_t>(k) / 4;
        s << "<text x=\"" << px(i) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << i + 1 << "</text>\n";
    }
    s << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">iteration</text>\n";
    s << "<text x=\"18\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << top + ph / 2 << ")\">" << ylabel << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& [name, ys] = series[k];
        const char* c = colors[k % 6];
        s << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < ys.size(); ++i) s << (i ? " " : "") << px(i) << ',' << py(ys[i]);
        s << "\"/>\n";
        const double ly = top + 16 + 18 * static_cast<double>(k);
        s << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 36 << "\" y2=\"" << ly
          << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
        s << "<text x=\"" << left + pw + 42 << "\" y=\"" << ly + 4 << "\">" << name << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

}  // namespace

SweepSpec parse_config_text(const std::string& text, const std::string& source) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        // Translate the byte offset into line and column.
        const std::size_t at = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
        const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(at), '\n');
        const auto nl = text.rfind('\n', at == 0 ? 0 : at - 1);
        const auto col = nl == std::string::npos || at == 0 ? at + 1 : at - nl;
        std::string what = e.what();
        const auto pos = what.find("syntax error");
        throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " +
                          (pos == std::string::npos ? what : what.substr(pos)));
    }
    std::vector<std::string> errs;
    SweepSpec spec;
    Fields top(&root, "", errs);
    top.get("output_dir", spec.output_dir);
    top.get("jobs", spec.jobs);
    top.get("include_timing", spec.include_timing);
    top.get("seed_offset", spec.seed_offset);
    if (root.is_object()) {
        read_cells(top, root, "experiment", "experiments",
                   [&](Fields f) { read_experiments(std::move(f), spec.experiments); });
        read_cells(top, root, "seek", "seeks", [&](Fields f) { read_seeks(std::move(f), spec.seeks); });
    }
    top.finish();
    for (const auto& e : validate_spec(spec)) errs.push_back(e);
    if (!errs.empty()) throw ConfigError(source + ": invalid configuration:\n" + join_lines(errs));
    return spec;
}

SweepSpec parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

json spec_to_json(const SweepSpec& spec) {
    json j;
    j["output_dir"] = spec.output_dir;
    j["jobs"] = spec.jobs;
    j["include_timing"] = spec.include_timing;
    j["seed_offset"] = spec.seed_offset;
    j["experiments"] = json::array();
    for (const auto& c : spec.experiments) j["experiments"].push_back(experiment_json(c));
    j["seeks"] = json::array();
    for (const auto& s : spec.seeks) j["seeks"].push_back(seek_json(s));
    return j;
}

std::vector<std::string> validate_spec(const SweepSpec& spec) {
    std::vector<std::string> errs;
    auto check = [&errs](const std::string& where, auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            errs.push_back(where + ": " + e.what());
        }
    };
    if (spec.jobs < 1) errs.push_back("jobs: must be >= 1");
    if (spec.output_dir.empty()) errs.push_back("output_dir: must not be empty");
    if (spec.experiments.empty() && spec.seeks.empty()) errs.push_back("config declares no experiment or seek cells");
    for (std::size_t i = 0; i < spec.experiments.size(); ++i) {
        const ExperimentConfig& c = spec.experiments[i];
        const std::string at = "experiments[" + std::to_string(i) + "]";
        if (c.T < 1) errs.push_back(at + ".T: must be >= 1");
        if (c.m < 1) errs.push_back(at + ".m: must be >= 1");
        if (!(c.sigma0 >= 0.0)) errs.push_back(at + ".sigma0: must be >= 0");
        if (c.seeds.empty()) errs.push_back(at + ".seeds: at least one seed is required");
        check(at + ".function", [&] { make_test_function(c.function); });
        check(at + ".kernel", [&] { c.kernel.validate(); });
        check(at + ".gmes", [&] { c.gmes.validate(); });
        check(at + ".baseline", [&] { c.baseline.validate(); });
    }
    for (std::size_t i = 0; i < spec.seeks.size(); ++i) {
        const SeekJob& s = spec.seeks[i];
        const std::string at = "seeks[" + std::to_string(i) + "]";
        if (s.seeds.empty()) errs.push_back(at + ".seeds: at least one seed is required");
        check(at, [&] { s.config.validate(); });
        check(at + ".scenario", [&] {
            const LightField f = resolve_scenario(s.scenario);
            if (f.starts.size() < s.config.m) {
                throw ConfigError("declares " + std::to_string(f.starts.size()) + " robot starts, m = " +
                                  std::to_string(s.config.m));
            }
        });
    }
    return errs;
}

std::string run_stem(const ExperimentConfig& cfg, std::uint64_t seed) {
    return cfg.function + "_" + algorithm_name(cfg.algorithm) + "_m" + std::to_string(cfg.m) + "_seed" +
           std::to_string(seed);
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + tmp + "'");
        out << content;
        out.flush();
        if (!out) throw Error("write to '" + tmp + "' failed");
    }
    fs::rename(tmp, path);
}

std::vector<AggregateRow> aggregate_runs(const std::string& function, const std::string& algorithm, std::size_t m,
                                         const std::vector<std::string>& csv_paths) {
    // values[run][iter] for both regret columns.
    std::vector<std::vector<double>> inst, cum;
    for (const auto& path : csv_paths) {
        std::ifstream in(path);
        if (!in) throw Error("cannot read run file '" + path + "'");
        std::string line;
        std::getline(in, line);
        std::vector<std::string> header;
        {
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) header.push_back(cell);
        }
        const auto col = [&](const std::string& name) {
            const auto it = std::find(header.begin(), header.end(), name);
            if (it == header.end()) throw Error(path + ": missing column '" + name + "'");
            return static_cast<std::size_t>(it - header.begin());
        };
        const std::size_t ci = col("instant_regret"), cc = col("cumulative_regret");
        inst.emplace_back();
        cum.emplace_back();
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<std::string> cells;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) cells.push_back(cell);
            if (cells.size() != header.size()) throw Error(path + ": malformed row");
            inst.back().push_back(std::stod(cells[ci]));
            cum.back().push_back(std::stod(cells[cc]));
        }
    }
    std::vector<AggregateRow> rows;
    if (inst.empty()) return rows;
    std::size_t len = inst.front().size();
    for (const auto& r : inst) len = std::min(len, r.size());
    const double n = static_cast<double>(inst.size());
    auto stats = [n](const std::vector<std::vector<double>>& v, std::size_t t) {
        double mean = 0.0;
        for (const auto& r : v) mean += r[t];
        mean /= n;
        double ss = 0.0;
        for (const auto& r : v) ss += (r[t] - mean) * (r[t] - mean);
        const double sd = n > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
        return std::pair{mean, 1.96 * sd / std::sqrt(n)};
    };
    for (std::size_t t = 0; t < len; ++t) {
        AggregateRow row;
        row.function = function;
        row.algorithm = algorithm;
        row.m = m;
        row.iter = static_cast<int>(t + 1);
        row.n = static_cast<int>(inst.size());
        std::tie(row.instant_mean, row.instant_ci) = stats(inst, t);
        std::tie(row.cumulative_mean, row.cumulative_ci) = stats(cum, t);
        rows.push_back(row);
    }
    return rows;
}

SweepOutcome run_sweep(const SweepSpec& spec, std::ostream& log) {
    const auto errs = validate_spec(spec);
    if (!errs.empty()) throw ConfigError("invalid sweep spec:\n" + join_lines(errs));

    const fs::path out(spec.output_dir);
    fs::create_directories(out / "runs");
    if (!spec.seeks.empty()) fs::create_directories(out / "seek");
    write_file_atomic((out / "spec.json").string(), spec_to_json(spec).dump(2) + "\n");

    struct Job {
        bool seek;
        std::size_t cell;
        std::uint64_t seed;
        std::string stem;
    };
    std::vector<Job> jobs;
    for (std::size_t c = 0; c < spec.experiments.size(); ++c) {
        for (auto s : spec.experiments[c].seeds) {
            const std::uint64_t seed = s + spec.seed_offset;
            jobs.push_back({false, c, seed, run_stem(spec.experiments[c], seed)});
        }
    }
    for (std::size_t c = 0; c < spec.seeks.size(); ++c) {
        for (auto s : spec.seeks[c].seeds) {
            const std::uint64_t seed = s + spec.seed_offset;
            jobs.push_back({true, c, seed, seek_stem(spec.seeks[c], seed)});
        }
    }

    std::vector<std::optional<std::string>> failure(jobs.size());
    std::vector<std::optional<SeekResult>> seek_results(jobs.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    std::size_t done = 0;

    auto work = [&]() {
        for (std::size_t k = next++; k < jobs.size(); k = next++) {
            const Job& job = jobs[k];
            std::string note;
            try {
                if (!job.seek) {
                    const ExperimentConfig& cfg = spec.experiments[job.cell];
                    const RegretTrace trace = run_experiment(cfg, job.seed);
                    std::ostringstream csv;
                    write_trace_csv(trace, csv, spec.include_timing);
                    json side = experiment_json(cfg);
                    side["seed"] = job.seed;
                    side["seeds"] = json::array({job.seed});
                    write_file_atomic((out / "runs" / (job.stem + ".csv")).string(), csv.str());
                    write_file_atomic((out / "runs" / (job.stem + ".json")).string(), side.dump(2) + "\n");
                    note = "R_T = " + fmt(trace.records.back().instant_regret);
                } else {
                    const SeekJob& sj = spec.seeks[job.cell];
                    const SeekResult res = run_seek(resolve_scenario(sj.scenario), sj.config, job.seed);
                    std::ostringstream csv, summary;
                    write_trajectory_csv(res, csv);
                    write_seek_summary_json(res, summary);
                    write_file_atomic((out / "seek" / (job.stem + "_trajectory.csv")).string(), csv.str());
                    write_file_atomic((out / "seek" / (job.stem + "_summary.json")).string(), summary.str());
                    note = (res.converged ? "converged after " : "not converged after ") +
                           std::to_string(res.iterations_to_converge) + " iterations";
                    seek_results[k] = res;
                }
            } catch (const std::exception& e) {
                failure[k] = e.what();
                note = std::string("FAILED: ") + e.what();
            }
            std::lock_guard<std::mutex> lock(log_mutex);
            log << "[" << ++done << "/" << jobs.size() << "] " << job.stem << ": " << note << std::endl;
        }
    };
    const int n_threads = std::max(1, std::min<int>(spec.jobs, static_cast<int>(jobs.size())));
    std::vector<std::thread> pool;
    for (int i = 1; i < n_threads; ++i) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();

    SweepOutcome outcome;
    outcome.runs = static_cast<int>(jobs.size());

    json failures = json::array();
    for (std::size_t k = 0; k < jobs.size(); ++k) {
        if (!failure[k]) continue;
        ++outcome.failures;
        failures.push_back({{"run", jobs[k].stem}, {"kind", jobs[k].seek ? "seek" : "experiment"}, {"error", *failure[k]}});
    }
    write_file_atomic((out / "failures.json").string(), failures.dump(2) + "\n");

    if (!spec.experiments.empty()) {
        std::ostringstream agg;
        agg << "function,algorithm,m,iter,n_seeds,instant_mean,instant_ci95,cumulative_mean,cumulative_ci95\n";
        // (function, m) -> algorithm -> rows, for the plots.
        std::map<std::pair<std::string, std::size_t>, std::vector<std::pair<std::string, std::vector<AggregateRow>>>> panels;
        std::size_t k = 0;
        for (const auto& cfg : spec.experiments) {
            std::vector<std::string> paths;
            for (std::size_t s = 0; s < cfg.seeds.size(); ++s, ++k) {
                if (!failure[k]) paths.push_back((out / "runs" / (jobs[k].stem + ".csv")).string());
            }
            const auto rows = aggregate_runs(cfg.function, algorithm_name(cfg.algorithm), cfg.m, paths);
            for (const auto& r : rows) {
                agg << r.function << ',' << r.algorithm << ',' << r.m << ',' << r.iter << ',' << r.n << ','
                    << fmt(r.instant_mean) << ',' << fmt(r.instant_ci) << ',' << fmt(r.cumulative_mean) << ','
                    << fmt(r.cumulative_ci) << '\n';
            }
            panels[{cfg.function, cfg.m}].emplace_back(algorithm_name(cfg.algorithm), rows);
        }
        write_file_atomic((out / "aggregate.csv").string(), agg.str());
        for (const auto& [key, lines] : panels) {
            const std::string suffix = key.first + "_m" + std::to_string(key.second);
            std::vector<std::pair<std::string, std::vector<double>>> inst, cum;
            for (const auto& [name, rows] : lines) {
                inst.emplace_back(name, std::vector<double>{});
                cum.emplace_back(name, std::vector<double>{});
                for (const auto& r : rows) {
                    inst.back().second.push_back(r.instant_mean);
                    cum.back().second.push_back(r.cumulative_mean);
                }
            }
            write_file_atomic((out / ("instant_regret_" + suffix + ".svg")).string(),
                              svg_plot("Instant regret, " + key.first + ", m = " + std::to_string(key.second),
                                       "mean instant regret", inst));
            write_file_atomic((out / ("cumulative_regret_" + suffix + ".svg")).string(),
                              svg_plot("Cumulative regret, " + key.first + ", m = " + std::to_string(key.second),
                                       "mean cumulative regret", cum));
        }
    }

    if (!spec.seeks.empty()) {
        std::ostringstream s;
        s << "scenario,algorithm,m,seed,converged,iterations_to_converge,sim_time_s,min_pair_distance,safety_stalls\n";
        for (std::size_t k = 0; k < jobs.size(); ++k) {
            if (!seek_results[k]) continue;
            const SeekResult& r = *seek_results[k];
            s << spec.seeks[jobs[k].cell].scenario << ',' << r.algorithm << ',' << r.m << ',' << r.seed << ','
              << (r.converged ? 1 : 0) << ',' << r.iterations_to_converge << ',' << fmt(r.sim_time_s) << ','
              << fmt(r.min_pair_distance) << ',' << r.safety_stalls << '\n';
        }
        write_file_atomic((out / "seek_summary.csv").string(), s.str());
    }
    return outcome;
}

}  // namespace gmes
