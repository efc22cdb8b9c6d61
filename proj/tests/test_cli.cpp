#include "doctest.h"

#include "gmes/cli.hpp"
#include "gmes/errors.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace gmes;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("gmes_cli_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        rows.push_back(cells);
    }
    return rows;
}

std::string config_error(const std::string& text) {
    try {
        parse_config_text(text, "cfg.json");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

const char* kSmallSweep = R"({
  "experiment": {
    "algorithm": ["gmes", "bucb"],
    "function": "rosenbrock",
    "m": 2,
    "T": 4,
    "seeds": [0, 1],
    "kernel": {"length_scale": 0.25}
  }
})";

std::size_t count_files(const fs::path& dir, const std::string& ext) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ext;
    return n;
}

}  // namespace

TEST_CASE("minimal config resolves to the documented defaults") {
    const SweepSpec spec = parse_config_text(R"({"experiment": {"algorithm": "gmes", "function": "ackley"}})", "min");
    REQUIRE(spec.experiments.size() == 1);
    const ExperimentConfig& c = spec.experiments[0];
    CHECK(c.T == 150);
    CHECK(c.sigma0 == 0.1);
    CHECK(c.gmes.ascent_iters == 50);
    CHECK(c.gmes.beta.initial == 3.0);
    CHECK(c.gmes.beta.slope == 0.01);
    CHECK(c.gmes.r_div == 0.0);
    CHECK_FALSE(c.gmes.use_barrier);
    CHECK(c.seeds.size() == 5);
    const auto j = spec_to_json(spec);
    CHECK(j["experiments"][0]["kernel"]["nu"] == 1.5);
    CHECK(j["experiments"][0]["T"] == 150);
    CHECK(spec.jobs == 1);
}

TEST_CASE("list-valued fields expand into a cartesian product") {
    const SweepSpec spec = parse_config_text(
        R"({"experiment": {"algorithm": ["gmes", "ucb_pe", "thompson"], "function": ["ackley", "bird"], "m": [2, 5]},
            "seek": {"scenario": ["SINGLE", "DENSE"], "m": [1, 4]}})",
        "grid");
    CHECK(spec.experiments.size() == 12);
    CHECK(spec.seeks.size() == 4);
    CHECK(spec.experiments[0].algorithm == Algorithm::gmes);
    CHECK(spec.experiments[11].algorithm == Algorithm::thompson);
    CHECK(spec.experiments[11].function == "bird");
    CHECK(spec.experiments[11].m == 5);
}

TEST_CASE("config errors") {
    const std::string unknown = config_error(R"({"experiment": {"algorithm": "ei"}})");
    CHECK(unknown.find("unknown algorithm 'ei'") != std::string::npos);
    CHECK(unknown.find("gmes, ucb_pe, bucb or thompson") != std::string::npos);

    // Every problem is listed, not just the first.
    const std::string many = config_error(
        R"({"jobs": 0, "experiment": {"function": "sphere", "T": -1, "sigma0": "x", "kernel": {"length_scale": -2},
            "speed": 3}})");
    CHECK(many.find("jobs") != std::string::npos);
    CHECK(many.find("sphere") != std::string::npos);
    CHECK(many.find(".T: must be >= 1") != std::string::npos);
    CHECK(many.find("experiment.sigma0: expected a number") != std::string::npos);
    CHECK(many.find("length_scale must be > 0") != std::string::npos);
    CHECK(many.find("experiment.speed: unknown key") != std::string::npos);

    const std::string syntax = config_error("{\n  \"experiment\": {\n    \"T\": 5,,\n  }\n}\n");
    CHECK(syntax.find("cfg.json:3:") == 0);

    CHECK(config_error(R"({"output_dir": "x"})").find("no experiment or seek") != std::string::npos);
    CHECK(config_error(R"({"seek": {"scenario": "/no/such/file.txt"}})").find("cannot open") != std::string::npos);
    CHECK(config_error(R"({"seek": {"m": 12}})").find("robot starts") != std::string::npos);
    CHECK(config_error(R"({"experiment": {"kernel": {"nu": 2.5}}})").find("nu") != std::string::npos);
    CHECK_THROWS_AS(parse_config("/no/such/config.json"), ConfigError);
}

TEST_CASE("resolved spec round-trips") {
    const SweepSpec spec = parse_config_text(
        R"({"output_dir": "o", "jobs": 3, "seed_offset": 7,
            "experiment": {"algorithm": ["gmes", "bucb"], "function": "bird", "m": [3, 4], "sigma0": 0.05,
                           "kernel": {"length_scale": 0.3}, "beta": {"initial": 2.0, "slope": 0.02},
                           "gmes": {"ascent_iters": 20, "r_div": 0.01, "use_barrier": true}},
            "seek": {"scenario": "SPARSE", "algorithm": "gmes", "m": 2, "seeds": [4],
                     "safety": {"d_safe": 0.25, "r_div": 0.3}, "controller": {"kp_w": 2.5}}})",
        "rt");
    const std::string once = spec_to_json(spec).dump(2);
    const SweepSpec again = parse_config_text(once, "rt2");
    CHECK(spec_to_json(again).dump(2) == once);
    CHECK(again.seeks[0].config.safety.d_safe == 0.25);
    CHECK(again.experiments[3].gmes.beta.initial == 2.0);
    CHECK(again.experiments[3].baseline.beta.slope == 0.02);
}

TEST_CASE("sweep writes the documented files") {
    SweepSpec spec = parse_config_text(kSmallSweep, "small");
    const fs::path out = fresh_dir("files");
    spec.output_dir = out.string();
    std::ostringstream log;
    const SweepOutcome res = run_sweep(spec, log);
    CHECK(res.runs == 4);
    CHECK(res.exit_code() == 0);
    CHECK(count_files(out / "runs", ".csv") == 4);
    CHECK(count_files(out / "runs", ".json") == 4);
    CHECK(count_files(out / "runs", ".tmp") == 0);
    CHECK(count_files(out, ".svg") == 2);
    CHECK(fs::exists(out / "aggregate.csv"));
    CHECK(fs::exists(out / "instant_regret_rosenbrock_m2.svg"));
    CHECK(slurp(out / "failures.json") == "[]\n");
    // The spec sidecar re-parses to the same spec.
    CHECK(spec_to_json(parse_config((out / "spec.json").string())).dump() == spec_to_json(spec).dump());
    CHECK(slurp(out / "instant_regret_rosenbrock_m2.svg").find("<polyline") != std::string::npos);
}

TEST_CASE("reruns produce byte-identical run files") {
    SweepSpec spec = parse_config_text(kSmallSweep, "small");
    const fs::path a = fresh_dir("det_a"), b = fresh_dir("det_b");
    std::ostringstream log;
    spec.output_dir = a.string();
    run_sweep(spec, log);
    spec.output_dir = b.string();
    spec.jobs = 2;
    run_sweep(spec, log);
    for (const auto& e : fs::directory_iterator(a / "runs")) {
        CAPTURE(e.path().filename().string());
        CHECK(slurp(e.path()) == slurp(b / "runs" / e.path().filename()));
    }
    CHECK(slurp(a / "aggregate.csv") == slurp(b / "aggregate.csv"));
}

TEST_CASE("aggregate equals a recomputation from the run files") {
    SweepSpec spec = parse_config_text(kSmallSweep, "small");
    spec.experiments[0].seeds = {0, 1, 2};
    const fs::path out = fresh_dir("agg");
    spec.output_dir = out.string();
    std::ostringstream log;
    run_sweep(spec, log);

    // (algorithm, iter) -> values over seeds, read straight from the run CSVs.
    std::map<std::pair<std::string, int>, std::vector<double>> inst, cum;
    for (const auto& e : fs::directory_iterator(out / "runs")) {
        if (e.path().extension() != ".csv") continue;
        const std::string name = e.path().filename().string();
        const std::string algo = name.find("_gmes_") != std::string::npos ? "gmes" : "bucb";
        const auto rows = read_csv(e.path());
        for (std::size_t r = 1; r < rows.size(); ++r) {
            inst[{algo, std::stoi(rows[r][0])}].push_back(std::stod(rows[r][1]));
            cum[{algo, std::stoi(rows[r][0])}].push_back(std::stod(rows[r][2]));
        }
    }
    const auto agg = read_csv(out / "aggregate.csv");
    REQUIRE(agg.size() == 1 + 2 * 4);
    CHECK(agg[0][5] == "instant_mean");
    for (std::size_t r = 1; r < agg.size(); ++r) {
        const auto key = std::make_pair(agg[r][1], std::stoi(agg[r][3]));
        const auto& v = inst.at(key);
        double mean = 0.0, ss = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        for (double x : v) ss += (x - mean) * (x - mean);
        const double ci = 1.96 * std::sqrt(ss / (static_cast<double>(v.size()) - 1.0)) / std::sqrt(static_cast<double>(v.size()));
        CHECK(std::stoi(agg[r][4]) == static_cast<int>(v.size()));
        CHECK(std::stod(agg[r][5]) == doctest::Approx(mean).epsilon(1e-14));
        CHECK(std::stod(agg[r][6]) == doctest::Approx(ci).epsilon(1e-12));
        double cmean = 0.0;
        for (double x : cum.at(key)) cmean += x;
        CHECK(std::stod(agg[r][7]) == doctest::Approx(cmean / static_cast<double>(v.size())).epsilon(1e-14));
    }
}

TEST_CASE("failed runs are recorded and the sweep continues") {
    // An unplaceable separation radius makes every gmes run fail at the first
    // selection, while bucb runs ignore it.
    SweepSpec spec = parse_config_text(
        R"({"experiment": {"algorithm": ["gmes", "bucb"], "function": "ackley", "m": 3, "T": 2, "seeds": [0],
                           "gmes": {"r_div": 5.0}}})",
        "fail");
    const fs::path out = fresh_dir("fail");
    spec.output_dir = out.string();
    std::ostringstream log;
    const SweepOutcome res = run_sweep(spec, log);
    CHECK(res.failures == 1);
    CHECK(res.exit_code() == 2);
    const std::string manifest = slurp(out / "failures.json");
    CHECK(manifest.find("ackley_gmes_m3_seed0") != std::string::npos);
    CHECK(manifest.find("iteration 1") != std::string::npos);
    CHECK(fs::exists(out / "runs" / "ackley_bucb_m3_seed0.csv"));
    CHECK_FALSE(fs::exists(out / "runs" / "ackley_gmes_m3_seed0.csv"));
}

TEST_CASE("seek cells and seed offsets") {
    SweepSpec spec = parse_config_text(R"({"seek": {"scenario": "SINGLE", "m": 2, "T_max": 3, "seeds": [0]}})", "seek");
    const fs::path out = fresh_dir("seek");
    spec.output_dir = out.string();
    spec.seed_offset = 10;
    std::ostringstream log;
    CHECK(run_sweep(spec, log).exit_code() == 0);
    CHECK(fs::exists(out / "seek" / "SINGLE_gmes_m2_seed10_trajectory.csv"));
    CHECK(fs::exists(out / "seek" / "SINGLE_gmes_m2_seed10_summary.json"));
    const auto rows = read_csv(out / "seek_summary.csv");
    REQUIRE(rows.size() == 2);
    CHECK(rows[1][0] == "SINGLE");
    CHECK(rows[1][3] == "10");
}

TEST_CASE("atomic writes replace the target") {
    const fs::path dir = fresh_dir("atomic");
    fs::create_directories(dir);
    const std::string path = (dir / "f.txt").string();
    write_file_atomic(path, "one");
    write_file_atomic(path, "two");
    CHECK(slurp(path) == "two");
    CHECK_FALSE(fs::exists(path + ".tmp"));
}
