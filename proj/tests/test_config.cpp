#include <doctest.h>

#include <string>

#include "cubesounder/config.hpp"

using namespace cubesounder;
using namespace cubesounder::config;

namespace {

const std::string kDir = CUBESOUNDER_CONFIG_DIR;

std::string file(const std::string& name) { return read_text(kDir + "/" + name); }

template <class F>
std::string error_of(F&& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("shipped configurations parse strictly") {
    const auto g = parse_band(file("gband.json"), "gband.json");
    CHECK(g.band == "G");
    CHECK(g.channels.size() == 5);
    CHECK(g.channels[2].f0_hz == doctest::Approx(183.31e9));
    CHECK(g.channels[2].hpbw_hz == doctest::Approx(2e9));
    CHECK(g.main_guide.width_a == doctest::Approx(1.2954e-3));
    CHECK(g.sweep.points == 2601);
    CHECK(*g.sweep.start_hz == doctest::Approx(170e9));

    const auto v = parse_band(file("vband.json"), "vband.json");
    CHECK(v.channels.size() == 5);
    CHECK(v.main_guide.width_a == doctest::Approx(3.7592e-3));

    CHECK(parse_chain(file("gband_chain.json"), "c").chain.n_channels() == 5);
    CHECK(parse_chain(file("vband_chain.json"), "c").chain.dicke_factor == 2.0);

    const auto sc = parse_scenario(file("closure_scenario.json"), "s");
    CHECK(sc.duration_s == 1800.0);
    CHECK(sc.channel_count() == 6);
    REQUIRE(sc.glitches.has_value());
    CHECK(sc.glitches->period_s == 5.0);
    CHECK_NOTHROW(sc.validate());

    const auto p = parse_pipeline(file("pipeline.json"), "p");
    CHECK(p.deglitch.k == 6.0);
    CHECK(p.deglitch.buffer == 3);
    CHECK(p.demod.max_masked_fraction == 0.25);
    CHECK_FALSE(p.load.sample_rate_hz.has_value());
}

TEST_CASE("unknown keys: strict error with a line, lenient warning") {
    const std::string text = "{\n  \"schema_version\": 1,\n  \"deglitch\": {\n    \"k\": 5,\n    \"buffr\": 2\n  }\n}\n";
    try {
        parse_pipeline(text, "p.json");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        REQUIRE(e.line().has_value());
        CHECK(*e.line() == 5);
        CHECK(std::string(e.what()).find("p.json:5:") == 0);
        CHECK(std::string(e.what()).find("buffr") != std::string::npos);
    }

    std::vector<std::string> warnings;
    const auto p = parse_pipeline(text, "p.json", {true, &warnings});
    CHECK(p.deglitch.k == 5.0);
    CHECK(p.deglitch.buffer == 3);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("buffr") != std::string::npos);
}

TEST_CASE("schema version") {
    CHECK(error_of([] { parse_pipeline("{\"schema_version\": 2}", "p"); }).find("schema_version") != std::string::npos);
    CHECK_FALSE(error_of([] { parse_pipeline("{}", "p"); }).empty());
    CHECK(error_of([] { parse_pipeline("{\"schema_version\": 1, \"cubesounder_version\": \"0.0.1\"}", "p"); }).empty());
}

TEST_CASE("malformed JSON reports the line") {
    try {
        parse_pipeline("{\n \"schema_version\": 1,\n \"demod\": {,}\n}", "bad.json");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.line() == std::optional<std::size_t>(3));
    }
}

TEST_CASE("band validation") {
    CHECK_FALSE(error_of([] {
                    parse_band(R"({"schema_version": 1, "band": "G", "main_guide": "WR-5", "channels": []})", "b");
                }).empty());
    CHECK_FALSE(error_of([] {
                    parse_band(R"({"schema_version": 1, "band": "G", "main_guide": "WR-9", "channels": [{"f0_ghz": 180, "hpbw_ghz": 2}]})",
                               "b");
                }).empty());
    CHECK_FALSE(error_of([] {
                    parse_band(R"({"schema_version": 1, "band": "G", "main_guide": "WR-5", "channels": [{"f0_ghz": "x", "hpbw_ghz": 2}]})",
                               "b");
                }).empty());
    const auto custom = parse_band(
        R"({"schema_version": 1, "band": "X", "channels": [{"f0_ghz": 180, "hpbw_ghz": 2}],
            "main_guide": {"name": "odd", "width_mm": 1.3, "height_mm": 0.65, "perfect_conductor": true}})",
        "b");
    CHECK(custom.main_guide.perfect_conductor);
    CHECK(custom.main_guide.width_a == doctest::Approx(1.3e-3));
}

TEST_CASE("calibration round trip") {
    CalibrationTable cal;
    cal.responsivity = {0.216, 0.1, 0.3};
    cal.enabled = {true, false, true};
    cal.band = "G";
    cal.date = "2026-01-02";
    const auto back = parse_calibration(calibration_to_json(cal).dump(2), "cal");
    CHECK(back.responsivity == cal.responsivity);
    CHECK(back.enabled == cal.enabled);
    CHECK(back.band == "G");
    CHECK(back.contrast() == 216.0);
    CHECK_FALSE(error_of([] {
                    parse_calibration(R"({"schema_version": 1, "responsivity_v": [0.1], "enabled": [true, false]})", "c");
                }).empty());
}

TEST_CASE("scenario variants") {
    const auto ramp = parse_scenario(
        R"({"schema_version": 1, "chain": {"preset": "G"}, "scene": {"kind": "ramp", "start_k": 200, "rate_k_per_s": 0.5},
            "duration_s": 10})",
        "s");
    CHECK(ramp.scene.at(4.0) == doctest::Approx(202.0));
    const auto pw = parse_scenario(
        R"({"schema_version": 1, "duration_s": 10, "chain": {"preset": "V"}, "scene": {"kind": "piecewise", "times_s": [0, 5], "kelvin": [250, 260]}})",
        "s");
    CHECK(pw.scene.at(2.5) == doctest::Approx(255.0));
    CHECK(pw.chain.dicke_factor == 2.0);
    CHECK_FALSE(error_of([] {
                    parse_scenario(R"({"schema_version": 1, "duration_s": 10, "chain": {"preset": "G"}, "scene": {"kind": "spiral"}})", "s");
                }).empty());
}
