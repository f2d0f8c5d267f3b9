#include <catch2/catch.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "cesfit/detail/text.hpp"

namespace {

struct RunResult {
    int exit_code;
    std::string output;
};

/// Runs the installed CLI through the shell and captures stdout (optionally
/// merged with stderr) plus the exit code.
RunResult run_cli(const std::string& args, bool merge_stderr = false) {
    const std::string cmd = std::string(CESFIT_CLI_PATH) + " " + args +
                            (merge_stderr ? " 2>&1" : " 2>/dev/null");
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string output;
    char buffer[4096];
    std::size_t count = 0;
    while ((count = std::fread(buffer, 1, sizeof buffer, pipe)) > 0)
        output.append(buffer, count);
    const int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, output};
}

std::string golden_path() {
    return std::string(CESFIT_FIXTURE_DIR) + "/golden_seed7.csv";
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    out << text;
}

}  // namespace

TEST_CASE("fit on the golden fixture recovers the truth", "[cli]") {
    const auto result = run_cli("fit --input " + golden_path() +
                                " --fix rho=0.5 --fix rho1=1.2 --format json");
    REQUIRE(result.exit_code == 0);
    const auto j = nlohmann::json::parse(result.output);
    CHECK(j["rss"].get<double>() <= 1e-12);
    CHECK(j["delta"].get<double>() == Approx(0.6).epsilon(1e-6));
    CHECK(j["delta1"].get<double>() == Approx(0.4).epsilon(1e-6));
    CHECK(j["A"].get<double>() == Approx(2.0).epsilon(1e-6));
    CHECK(j["convergence"] == "Achieved");
}

TEST_CASE("fit input errors exit with 1", "[cli]") {
    const auto missing = run_cli("fit --input /nonexistent/input.csv", true);
    CHECK(missing.exit_code == 1);
    CHECK(missing.output.find("/nonexistent/input.csv") != std::string::npos);

    const auto no_free = run_cli(
        "fit --input " + golden_path() +
            " --fix A=2 --fix delta=0.6 --fix delta1=0.4 --fix rho=0.5 --fix rho1=1.2",
        true);
    CHECK(no_free.exit_code == 1);
    CHECK(no_free.output.find("no free parameters") != std::string::npos);
}

TEST_CASE("unconverged fits still print but exit with 2", "[cli]") {
    const auto result = run_cli("fit --input " + golden_path() +
                                    " --fix rho=0.5 --fix rho1=1.2 --max-iterations 1 "
                                    "--rss-rel-tol 1e-300 --grad-tol 1e-300 "
                                    "--step-tol 1e-300 --format json",
                                false);
    CHECK(result.exit_code == 2);
    const auto j = nlohmann::json::parse(result.output);
    CHECK(j["convergence"] == "MaxIterations");
}

TEST_CASE("degenerate grid equals a plain fit", "[cli]") {
    const auto grid = run_cli("grid --input " + golden_path() +
                              " --rho 0.5:0.5:1 --rho1 1.2:1.2:1 --format json");
    const auto fit = run_cli("fit --input " + golden_path() +
                             " --fix rho=0.5 --fix rho1=1.2 --format json");
    REQUIRE(grid.exit_code == 0);
    REQUIRE(fit.exit_code == 0);
    const auto jg = nlohmann::json::parse(grid.output);
    const auto jf = nlohmann::json::parse(fit.output);
    for (const char* field :
         {"r2", "std_error", "sigma_outer", "sigma_inner", "delta", "delta1", "A", "rss"})
        CHECK(jg[field].get<double>() == jf[field].get<double>());
    CHECK(jg["rho_set"] == "custom");
}

TEST_CASE("grid writes a surface with one row per cell", "[cli]") {
    const std::string surface_path = "/tmp/cesfit_test_surface.csv";
    std::remove(surface_path.c_str());
    const auto result = run_cli("grid --input " + golden_path() +
                                " --rho 0.26:0.74:0.24 --rho1 0.96:1.44:0.24 --surface " +
                                surface_path + " --format json");
    REQUIRE(result.exit_code == 0);
    const auto j = nlohmann::json::parse(result.output);
    CHECK(j["sigma_outer"].get<double>() == Approx(1.0 / 1.5));   // rho = 0.5 selected
    CHECK(j["sigma_inner"].get<double>() == Approx(1.0 / 2.2));   // rho1 = 1.2 selected
    CHECK(j["rss"].get<double>() <= 1e-12);

    const auto lines = cesfit::detail::split_lines(slurp(surface_path));
    CHECK(lines.size() == 1 + 3 * 3);
    std::remove(surface_path.c_str());
}

TEST_CASE("preset grid finds truth generated on its lattice", "[cli]") {
    // 0.38 and 1.02 are members of the rhoVec1 expansion
    const std::string csv_path = "/tmp/cesfit_test_lattice.csv";
    const auto sim = run_cli("simulate --n 40 --seed 23 --rho 0.38 --rho1 1.02 --noise 0 "
                             "--output " + csv_path);
    REQUIRE(sim.exit_code == 0);
    const auto grid = run_cli("grid --input " + csv_path + " --preset rhoVec1 --format json");
    REQUIRE(grid.exit_code == 0);
    const auto j = nlohmann::json::parse(grid.output);
    CHECK(j["sigma_outer"].get<double>() == Approx(1.0 / 1.38).epsilon(1e-9));
    CHECK(j["sigma_inner"].get<double>() == Approx(1.0 / 2.02).epsilon(1e-9));
    CHECK(j["rss"].get<double>() <= 1e-12);
    CHECK(j["rho_set"] == "rhoVec1");
    std::remove(csv_path.c_str());
}

TEST_CASE("parallel grid output matches the independent sequential run", "[cli]") {
    const std::string base = "grid --input " + golden_path() +
                             " --rho 0.26:0.74:0.24 --rho1 0.96:1.44:0.24 --format csv";
    const auto sequential = run_cli(base + " --no-warm-start");
    const auto parallel = run_cli(base + " --parallel --threads 4");
    REQUIRE(sequential.exit_code == 0);
    REQUIRE(parallel.exit_code == 0);
    CHECK(sequential.output == parallel.output);
}

TEST_CASE("grid help names the presets", "[cli]") {
    const auto help = run_cli("grid --help", true);
    CHECK(help.output.find("rhoVec1") != std::string::npos);
    CHECK(help.output.find("rhoVec2") != std::string::npos);
    CHECK(help.output.find("--preset") != std::string::npos);
}

TEST_CASE("simulate is deterministic and reproduces the golden fixture", "[cli]") {
    const std::string flags =
        "simulate --n 200 --seed 7 --A 2 --delta 0.6 --delta1 0.4 --rho 0.5 --rho1 1.2 "
        "--k-range 0.5:50 --l-range 0.5:50 --noise 0";
    const auto once = run_cli(flags);
    const auto twice = run_cli(flags);
    REQUIRE(once.exit_code == 0);
    CHECK(once.output == twice.output);
    CHECK(once.output == slurp(golden_path()));
}

TEST_CASE("simulate then fit with the truth fixed is a perfect fit", "[cli]") {
    const std::string csv_path = "/tmp/cesfit_test_sim.csv";
    const auto sim = run_cli("simulate --n 60 --seed 17 --noise 0 --output " + csv_path);
    REQUIRE(sim.exit_code == 0);
    const auto fit = run_cli("fit --input " + csv_path +
                             " --fix rho=0.5 --fix rho1=1.2 --format json");
    REQUIRE(fit.exit_code == 0);
    const auto j = nlohmann::json::parse(fit.output);
    CHECK(j["rss"].get<double>() <= 1e-18);
    std::remove(csv_path.c_str());
}

TEST_CASE("aggregate end to end", "[cli]") {
    const std::string csv_path = "/tmp/cesfit_test_agg.csv";
    write_file(csv_path,
               "output,capital,labor,state\n"
               "3,1,1,WB\n"
               "4,1,1,WB\n"
               "10,1,1,MH\n");
    const auto text = run_cli("aggregate --input " + csv_path + " --by state");
    REQUIRE(text.exit_code == 0);
    CHECK(text.output.find("WB") != std::string::npos);
    CHECK(text.output.find("7") != std::string::npos);

    const auto csv = run_cli("aggregate --input " + csv_path + " --by state --format csv");
    CHECK(csv.output == "state,total_output\nMH,10\nWB,7\n");

    const auto json = run_cli("aggregate --input " + csv_path + " --by state --format json");
    const auto j = nlohmann::json::parse(json.output);
    REQUIRE(j.size() == 2);
    CHECK(j[0]["state"] == "MH");
    CHECK(j[0]["total_output"].get<double>() == 10.0);

    const auto missing = run_cli("aggregate --input " + csv_path + " --by industry", true);
    CHECK(missing.exit_code == 1);
    std::remove(csv_path.c_str());
}

TEST_CASE("aggregate by state and industry end to end", "[cli]") {
    const std::string csv_path = "/tmp/cesfit_test_agg2.csv";
    write_file(csv_path,
               "output,capital,labor,state,industry\n"
               "1,1,1,AA,151\n2,1,1,AA,251\n3,1,1,BB,151\n"
               "4,1,1,BB,251\n5,1,1,CC,151\n6,1,1,CC,251\n");
    const auto csv =
        run_cli("aggregate --input " + csv_path + " --by state-industry --format csv");
    REQUIRE(csv.exit_code == 0);
    CHECK(csv.output ==
          "state,industry,total_output\n"
          "AA,151,1\nAA,251,2\nBB,151,3\nBB,251,4\nCC,151,5\nCC,251,6\n");
    std::remove(csv_path.c_str());
}

TEST_CASE("usage errors exit with 1", "[cli]") {
    CHECK(run_cli("fit", true).exit_code == 1);               // missing required --input
    CHECK(run_cli("unknown-subcommand", true).exit_code == 1);
    CHECK(run_cli("", true).exit_code == 1);                  // subcommand required
    const auto help = run_cli("--help", true);
    CHECK(help.exit_code == 0);
}
