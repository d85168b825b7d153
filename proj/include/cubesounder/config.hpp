#pragma once

// JSON configuration files for the command-line tool. Every file carries
// "schema_version": 1. Unknown keys are errors unless lenient parsing is
// requested, in which case they are logged and ignored.

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cubesounder/filterbank.hpp"
#include "cubesounder/pipeline.hpp"
#include "cubesounder/radiometry.hpp"
#include "cubesounder/synth.hpp"

namespace cubesounder::config {

inline constexpr int kSchemaVersion = 1;

/// Message carries the source name and, when known, the 1-based line.
class ConfigError : public std::runtime_error {
  public:
    ConfigError(const std::string& source, std::optional<std::size_t> line, const std::string& what);
    std::optional<std::size_t> line() const noexcept { return line_; }

  private:
    std::optional<std::size_t> line_;
};

struct ParseOptions {
    bool lenient = false;
    std::vector<std::string>* warnings = nullptr;  // receives lenient-mode notices
};

struct ChannelRequest {
    double f0_hz = 0.0;
    double hpbw_hz = 0.0;
};

struct SweepConfig {
    std::optional<double> start_hz;
    std::optional<double> stop_hz;
    std::size_t points = 2001;
};

struct BandConfig {
    std::string band;
    WaveguideSpec main_guide;
    std::vector<ChannelRequest> channels;
    SynthesisTolerances tolerances;
    SpacingOptions spacing;
    SweepConfig sweep;
};

struct BudgetConfig {
    RadiometerChain chain;
    double scene_temperature_k = 290.0;
};

/// Parsers take the file text and a source name used in messages.
BandConfig parse_band(const std::string& text, const std::string& source, const ParseOptions& opts = {});
BudgetConfig parse_chain(const std::string& text, const std::string& source, const ParseOptions& opts = {});
synth::Scenario parse_scenario(const std::string& text, const std::string& source, const ParseOptions& opts = {});
PipelineOptions parse_pipeline(const std::string& text, const std::string& source, const ParseOptions& opts = {});
CalibrationTable parse_calibration(const std::string& text, const std::string& source, const ParseOptions& opts = {});

nlohmann::ordered_json calibration_to_json(const CalibrationTable& cal);

std::string read_text(const std::filesystem::path& path);

}  // namespace cubesounder::config
