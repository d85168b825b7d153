#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"

namespace fs = std::filesystem;
using cubesounder::cli::ExitCode;

namespace {

const std::string kDir = CUBESOUNDER_CONFIG_DIR;

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "cubesounder");
    std::ostringstream out, err;
    const int code = cubesounder::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void spit(const fs::path& p, const std::string& s) {
    std::ofstream o(p, std::ios::binary);
    o << s;
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

const std::string kShortScenario = R"({
  "schema_version": 1,
  "duration_s": 20,
  "n_channels": 3,
  "scene": {"kind": "constant", "kelvin": 250},
  "chain": {"preset": "G", "optical_efficiency": 0.2},
  "noise_net_mk": 200,
  "seed": 11
})";

}  // namespace

TEST_CASE("version and help") {
    const auto v = run({"--version"});
    CHECK(v.code == ExitCode::ok);
    CHECK(v.out.find(cubesounder::cli::version()) != std::string::npos);
    CHECK(run({"--help"}).code == ExitCode::ok);
    CHECK(run({"design"}).code == ExitCode::failure);
    CHECK(run({"frobnicate"}).code == ExitCode::failure);
}

TEST_CASE("design: G band exports a seven-port file and a tap sweep") {
    TempDir t("cubesounder_cli_design");
    const auto r = run({"design", "--band", kDir + "/gband.json", "--out", t / "a"});
    REQUIRE(r.code == ExitCode::ok);
    CHECK(fs::exists(t.path / "a" / "bank.s7p"));
    const auto sweep = slurp(t.path / "a" / "sweep.csv");
    CHECK(first_line(sweep) == "frequency_ghz,tap00_db,tap01_db,tap02_db,tap03_db,tap04_db,thru_db");
    CHECK(std::count(sweep.begin(), sweep.end(), '\n') == 2602);

    const auto j = nlohmann::json::parse(slurp(t.path / "a" / "design.json"));
    CHECK(j["schema_version"] == 1);
    CHECK(j["cubesounder_version"] == cubesounder::cli::version());
    REQUIRE(j["channels"].size() == 5);
    for (const auto& c : j["channels"]) CHECK(c["converged"] == true);

    // Reruns are byte-identical.
    REQUIRE(run({"design", "--band", kDir + "/gband.json", "--out", t / "b"}).code == ExitCode::ok);
    for (const char* f : {"bank.s7p", "sweep.csv", "design.json"})
        CHECK(slurp(t.path / "a" / f) == slurp(t.path / "b" / f));
}

TEST_CASE("design: failures map to exit codes") {
    TempDir t("cubesounder_cli_design_fail");
    spit(t.path / "empty.json", R"({"schema_version": 1, "band": "G", "main_guide": "WR-5", "channels": []})");
    const auto e = run({"design", "--band", t / "empty.json", "--out", t / "e"});
    CHECK(e.code == ExitCode::failure);
    CHECK_FALSE(e.err.empty());

    spit(t.path / "tight.json", R"({"schema_version": 1, "band": "G", "main_guide": "WR-5",
        "channels": [{"f0_ghz": 183.31, "hpbw_ghz": 2.0}], "tolerances": {"max_iterations": 1}})");
    const auto n = run({"design", "--band", t / "tight.json", "--out", t / "n"});
    CHECK(n.code == ExitCode::not_converged);
    const auto j = nlohmann::json::parse(slurp(t.path / "n" / "design.json"));
    CHECK(j["channels"][0]["converged"] == false);

    spit(t.path / "typo.json", R"({"schema_version": 1, "band": "G", "main_guide": "WR-5",
        "channels": [{"f0_ghz": 183.31, "hpbw_ghz": 2.0}], "sweeep": {}})");
    const auto k = run({"design", "--band", t / "typo.json", "--out", t / "k"});
    CHECK(k.code == ExitCode::failure);
    CHECK(k.err.find("sweeep") != std::string::npos);
}

TEST_CASE("budget names the dominant source") {
    TempDir t("cubesounder_cli_budget");
    const auto r = run({"budget", "--chain", kDir + "/gband_chain.json", "--out", t.path.string()});
    REQUIRE(r.code == ExitCode::ok);
    CHECK(r.out.find("detector") != std::string::npos);
    const auto csv = slurp(t.path / "budget.csv");
    CHECK(first_line(csv) == "channel,source,net_mk_rts");
}

TEST_CASE("simulate then process") {
    TempDir t("cubesounder_cli_process");
    spit(t.path / "scenario.json", kShortScenario);
    REQUIRE(run({"simulate", "--scenario", t / "scenario.json", "--out", t / "sim"}).code == ExitCode::ok);
    for (const char* f : {"timestream.csv", "truth.csv", "calibration.json", "simulation.json"})
        CHECK(fs::exists(t.path / "sim" / f));

    const std::vector<std::string> args{"process",   "--input",   t / "sim/timestream.csv", "--cal",
                                        t / "sim/calibration.json", "--config", kDir + "/pipeline.json"};
    auto a = args, b = args;
    a.insert(a.end(), {"--out", t / "p1"});
    b.insert(b.end(), {"--out", t / "p2"});
    REQUIRE(run(a).code == ExitCode::ok);
    REQUIRE(run(b).code == ExitCode::ok);
    for (const char* f : {"cycles.csv", "glitches.csv", "report.json"})
        CHECK(slurp(t.path / "p1" / f) == slurp(t.path / "p2" / f));
    CHECK(slurp(t.path / "p1" / "glitches.csv") ==
          "start_index,end_index,start_unix_time_s,end_unix_time_s,peak_deviation_mad\n");
    CHECK(first_line(slurp(t.path / "p1" / "cycles.csv")) == "unix_time_s,ch_00_tb_k,ch_01_tb_k,ch_02_tb_k");

    const auto rep = nlohmann::json::parse(slurp(t.path / "p1" / "report.json"));
    for (const auto& c : rep["channels"]) {
        CHECK(c["mean_tb_k"].get<double>() == doctest::Approx(250.0).epsilon(0.01));
        CHECK(c["net_mk_rts"].get<double>() == doctest::Approx(200.0).epsilon(0.35));
    }
}

TEST_CASE("process: input problems") {
    TempDir t("cubesounder_cli_bad_input");
    spit(t.path / "cal.json", R"({"schema_version": 1, "responsivity_v": [0.2]})");

    std::string flat = "unix_time_s,chopper_pos,ref_temp_k,ch_00\n";
    for (int i = 0; i < 400; ++i) flat += std::to_string(i * 0.005) + ",1000,290," + std::to_string(0.001 * (i % 7)) + "\n";
    spit(t.path / "flat.csv", flat);
    const auto f = run({"process", "--input", t / "flat.csv", "--cal", t / "cal.json", "--out", t / "f"});
    CHECK(f.code == ExitCode::no_cycles);
    CHECK_FALSE(f.err.empty());

    spit(t.path / "bad.csv", "unix_time_s,chopper_pos,ref_temp_k,ch_00\n0,0,290,0\n0.005,0,290,zero\n");
    const auto b = run({"process", "--input", t / "bad.csv", "--cal", t / "cal.json", "--out", t / "b"});
    CHECK(b.code == ExitCode::failure);
    CHECK(b.err.find("row 3") != std::string::npos);

    const auto m = run({"process", "--input", t / "missing.csv", "--cal", t / "cal.json", "--out", t / "m"});
    CHECK(m.code == ExitCode::failure);
}
