#pragma once

// Synthetic flight timestreams with known truth: chopped scene/reference
// temperatures through a radiometer chain, white noise, linear drift and a
// periodic train of negative-going glitches.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cubesounder/pipeline.hpp"
#include "cubesounder/radiometry.hpp"

namespace cubesounder::synth {

inline constexpr double kSceneChopperCounts = 1000.0;
inline constexpr double kReferenceChopperCounts = 0.0;

/// Piecewise-linear temperature profile over scenario time (seconds from
/// the start), held constant outside the knots.
struct SceneProfile {
    enum class Kind { constant, ramp, piecewise };
    Kind kind = Kind::constant;
    std::vector<double> times_s{0.0};
    std::vector<double> kelvin{250.0};

    static SceneProfile constant(double t_k);
    static SceneProfile ramp(double t_start_k, double rate_k_per_s, double duration_s);
    static SceneProfile piecewise(std::vector<double> times_s, std::vector<double> kelvin);

    double at(double t_s) const;
    void validate() const;
};

struct GlitchTrain {
    double period_s = 1.0;
    std::size_t width = 3;                 // samples
    std::optional<double> depth_v;         // negative; overrides depth_sigma
    double depth_sigma = 20.0;             // multiples of the per-sample noise
    double first_s = 0.5;                  // onset of the first glitch
};

struct Scenario {
    double duration_s = 60.0;
    double sample_rate_hz = 200.0;
    double chop_rate_hz = 17.0;
    double start_unix_s = 1.7e9;
    std::size_t n_channels = 0;  // 0: the chain's channel count
    SceneProfile scene;
    double t_ref_k = 290.0;
    double t_ref_drift_k_per_s = 0.0;
    RadiometerChain chain;
    double noise_net_mk = 0.0;  // demodulated NET, mK*sqrt(s)
    double drift_v_per_s = 0.0;
    std::optional<GlitchTrain> glitches;
    std::uint64_t seed = 0;

    std::size_t channel_count() const noexcept;
    std::size_t sample_count() const;
    void validate() const;
};

struct Truth {
    std::vector<ChopPhase> phase;
    std::vector<std::uint8_t> glitch;
    std::vector<double> scene_k;
    std::vector<std::vector<double>> clean_v;  // [channel][sample], no noise and no glitches
};

struct Flight {
    Timestream stream;
    Truth truth;
    std::vector<double> volts_per_kelvin;  // per channel
    std::vector<double> noise_sigma_v;     // per-sample noise, per channel
    CalibrationTable calibration;
};

/// Per-sample voltage noise that yields the requested NET after chopper
/// demodulation (scene mean minus reference mean, one cycle per chop period).
double sample_sigma_v(double net_mk, double volts_per_kelvin, double sample_rate_hz);

Flight generate(const Scenario& s);

/// timestream.csv in the pipeline contract plus truth.csv with matching rows.
void write_flight(const Flight& f, const std::filesystem::path& dir);
void write_truth(std::ostream& os, const Flight& f);

}  // namespace cubesounder::synth
