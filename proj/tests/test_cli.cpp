#include "catch_amalgamated.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "mixmech/gmm.hpp"
#include "mixmech/measure.hpp"
#include "mixmech/npmle.hpp"

using namespace mixmech;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

fs::path work_dir(const char* stem) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "mixmech_cli_%s_%d", stem, static_cast<int>(::getpid()));
    const fs::path dir = fs::temp_directory_path() / buf;
    fs::create_directories(dir);
    return dir;
}

int run_cli(const std::string& args, const fs::path& stdout_path = {}) {
    std::string cmd = std::string(MIXMECH_CLI_PATH) + " " + args;
    if (!stdout_path.empty()) cmd += " > " + stdout_path.string();
    cmd += " 2> /dev/null";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json slurp_json(const fs::path& p) { return json::parse(slurp(p)); }

void write_measure(const fs::path& p, const MixingMeasure& mu) {
    std::ofstream out(p);
    out << mu.to_json().dump() << "\n";
}

}  // namespace

TEST_CASE("fit subcommand writes a parseable result") {
    const fs::path dir = work_dir("fit");
    const GmmDensity source(MixingMeasure::uniform(1, {-2.0, 2.0}));
    const Dataset data = source.sample(60, 5);
    data.write_csv((dir / "data.csv").string());

    REQUIRE(run_cli("fit --data " + (dir / "data.csv").string() +
                    " --grid=-3,3:0.5 --alg em --out " + (dir / "fit.json").string()) == 0);

    const json out = slurp_json(dir / "fit.json");
    REQUIRE(out.contains("measure"));
    REQUIRE(out.contains("loglik"));
    REQUIRE(out.contains("gap"));
    REQUIRE(out.contains("iters"));
    const MixingMeasure fitted = MixingMeasure::from_json(out.at("measure"));
    REQUIRE(loglik(fitted, data) == Catch::Approx(out.at("loglik").get<double>()).margin(1e-9));
    REQUIRE(out.at("gap").get<double>() >= 0.0);

    // restriction flags must come as a pair
    REQUIRE(run_cli("fit --data " + (dir / "data.csv").string() + " --theta=-1,1") == 1);
    fs::remove_all(dir);
}

TEST_CASE("divergence subcommand prints closed-form values") {
    const fs::path dir = work_dir("div");
    write_measure(dir / "f.json", MixingMeasure::delta(Point{0.0}));
    write_measure(dir / "g.json", MixingMeasure::delta(Point{2.0}));
    const std::string pair =
        "--f " + (dir / "f.json").string() + " --g " + (dir / "g.json").string();

    REQUIRE(run_cli("divergence " + pair + " --metric h2", dir / "h2.json") == 0);
    REQUIRE(slurp_json(dir / "h2.json").at("value").get<double>() ==
            Catch::Approx(0.7869386805747332).margin(1e-6));

    REQUIRE(run_cli("divergence " + pair + " --metric tv", dir / "tv.json") == 0);
    REQUIRE(slurp_json(dir / "tv.json").at("value").get<double>() ==
            Catch::Approx(0.6826894921370859).margin(1e-6));

    REQUIRE(run_cli("divergence " + pair + " --metric kl --method mc --samples 200 --seed 3",
                    dir / "kl.json") == 0);
    const json kl_out = slurp_json(dir / "kl.json");
    REQUIRE(kl_out.at("method") == "monte-carlo");
    REQUIRE(kl_out.at("value").get<double>() ==
            Catch::Approx(2.0).margin(8.0 * kl_out.at("std_error").get<double>()));

    REQUIRE(run_cli("divergence " + pair + " --metric h2 --method mc --samples 50") == 1);
    REQUIRE(run_cli("divergence " + pair + " --metric wasserstein") == 1);
    fs::remove_all(dir);
}

TEST_CASE("langevin subcommand copies data at time zero and validates steps") {
    const fs::path dir = work_dir("lan");
    const GmmDensity source(MixingMeasure::uniform(1, {-2.0, 2.0}));
    source.sample(40, 7).write_csv((dir / "data.csv").string());
    write_measure(dir / "fstar.json", MixingMeasure::uniform(1, {-2.0, 2.0}));

    const std::string base = "langevin --data " + (dir / "data.csv").string() + " --fstar " +
                             (dir / "fstar.json").string();
    REQUIRE(run_cli(base + " --t 0 --out " + (dir / "same.csv").string()) == 0);
    REQUIRE(slurp(dir / "same.csv") == slurp(dir / "data.csv"));

    REQUIRE(run_cli(base + " --t 0.3 --out " + (dir / "moved.csv").string()) == 0);
    REQUIRE(slurp(dir / "moved.csv") != slurp(dir / "data.csv"));

    REQUIRE(run_cli(base + " --t 1 --dt 0.5 --out " + (dir / "bad.csv").string()) == 1);
    fs::remove_all(dir);
}

TEST_CASE("polymer subcommand writes the summary table") {
    const fs::path dir = work_dir("pol");
    REQUIRE(run_cli("polymer --n 12 --t 0,0.05 --reps 3 --seed 2 --out " +
                    (dir / "poly.csv").string()) == 0);
    std::ifstream in(dir / "poly.csv");
    std::string header, line0, line1, extra;
    REQUIRE(std::getline(in, header));
    REQUIRE(header == "n,t,mean_overlap,var_energy_over_n");
    REQUIRE(std::getline(in, line0));
    REQUIRE(std::getline(in, line1));
    REQUIRE_FALSE(std::getline(in, extra));
    REQUIRE(line0.rfind("12,0,1,", 0) == 0);  // exact overlap at t = 0
    REQUIRE(line1.rfind("12,0.05", 0) == 0);
    fs::remove_all(dir);
}

TEST_CASE("bracketing subcommand reports the family size and coverage") {
    const fs::path dir = work_dir("bra");
    REQUIRE(run_cli("bracketing --eps 0.3", dir / "bra.json") == 0);
    const json out = slurp_json(dir / "bra.json");
    REQUIRE(out.size() == 4);
    REQUIRE(out.at("log_count").get<double>() ==
            Catch::Approx(69.97597582886497).epsilon(1e-12));
    REQUIRE(out.at("coverage_worst_gap").get<double>() <= 1.5);
    REQUIRE(out.at("predicted_bound").get<double>() >= out.at("log_count").get<double>());
    REQUIRE(out.at("count").get<double>() > 1e30);

    REQUIRE(run_cli("bracketing --eps 0.3 --theta=-1,1,-1,1") == 1);  // dim mismatch
    fs::remove_all(dir);
}

TEST_CASE("experiment subcommand runs from a config and emits artifacts") {
    const fs::path dir = work_dir("exp");
    {
        std::ofstream cfg(dir / "cfg.json");
        cfg << json{{"experiment", "stability"},
                    {"n_list", {40, 80}},
                    {"reps", 2},
                    {"solver", {{"algorithm", "em"}, {"max_iters", 50}}}}
                   .dump();
    }
    REQUIRE(run_cli("experiment stability --config " + (dir / "cfg.json").string() +
                    " --out-dir " + (dir / "res").string()) == 0);
    REQUIRE(fs::exists(dir / "res" / "rows.csv"));
    REQUIRE(fs::exists(dir / "res" / "summary.json"));
    REQUIRE(slurp_json(dir / "res" / "summary.json").at("config").at("experiment") ==
            "stability");

    // the positional name must agree with the config
    REQUIRE(run_cli("experiment kl-risk --config " + (dir / "cfg.json").string() +
                    " --out-dir " + (dir / "res2").string()) == 1);
    fs::remove_all(dir);
}

TEST_CASE("experiment subcommand signals failed trend assertions") {
    const fs::path dir = work_dir("expfail");
    {
        std::ofstream cfg(dir / "cfg.json");
        // at eps = 0.5 the enumerated family provably outgrows the fitted
        // envelope, so the log-count check fails deterministically
        cfg << json{{"experiment", "bracketing"},
                    {"eps_list", {0.5}},
                    {"assert_trends", true}}
                   .dump();
    }
    REQUIRE(run_cli("experiment bracketing --config " + (dir / "cfg.json").string() +
                    " --out-dir " + (dir / "res").string(),
                    dir / "out.txt") == 2);
    REQUIRE(slurp(dir / "out.txt").find("[FAIL] log_count_within_envelope") !=
            std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("bad usage exits nonzero") {
    REQUIRE(run_cli("") == 1);                  // missing subcommand
    REQUIRE(run_cli("fit") == 1);               // missing --data
    REQUIRE(run_cli("experiment percolation --out-dir /tmp/mixmech_nope") == 1);
}
