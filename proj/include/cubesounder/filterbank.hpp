#pragma once

// Resonant-cavity channel filters and the filter bank built from them.
//
// A channel is a half-wave cavity (main-guide cross-section) between two
// evanescent coupling sections whose width puts their TE10 cutoff at 1.5x
// the channel's target center frequency. The cavity length sets the center
// frequency and the coupling-section length sets the bandwidth. Channels
// hang off the main guide through an ideal symmetric tee and are chained
// with plain main-guide sections in between.

#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "cubesounder/network.hpp"
#include "cubesounder/waveguide.hpp"

namespace cubesounder {

/// Ratio of coupling-section cutoff to target center frequency.
inline constexpr double kNarrowCutoffRatio = 1.5;

struct ChannelDesign {
    double f0_target = 0.0;    // Hz
    double hpbw_target = 0.0;  // Hz
    WaveguideSpec main_guide;
    WaveguideSpec narrow_guide;
    WaveguideSpec cavity_guide;
    double narrow_length = 0.0;  // m, each of the two coupling sections
    double cavity_length = 0.0;  // m
    std::optional<double> achieved_f0;
    std::optional<double> achieved_hpbw;
    int iterations = 0;

    bool converged() const noexcept { return achieved_f0.has_value() && achieved_hpbw.has_value(); }
};

/// Channel geometry derived from the design rules, lengths as given.
ChannelDesign make_channel(double f0_target, double hpbw_target, const WaveguideSpec& main_guide,
                           double narrow_length, double cavity_length);

struct SynthesisTolerances {
    double freq_rel = 1e-4;  // |achieved_f0 - f0| <= f0 * freq_rel
    double bw_rel = 0.05;    // |achieved_hpbw - hpbw| <= hpbw * bw_rel
    int max_iterations = 100;
};

class SynthesisError : public std::runtime_error {
  public:
    SynthesisError(const std::string& what, ChannelDesign last_iterate)
        : std::runtime_error(what), last_(std::move(last_iterate)) {}
    const ChannelDesign& last_iterate() const noexcept { return last_; }

  private:
    ChannelDesign last_;
};

/// The requested bandwidth cannot be realized (degenerate request or wall loss).
class UnachievableBandwidthError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Passband of an isolated channel two-port, measured on the continuous
/// frequency axis (peak by Brent search, crossings by bracketed root find).
struct ResonanceMeasurement {
    double f_peak = 0.0;
    double peak_power = 0.0;
    std::optional<double> hpbw;  // unset if a half-power crossing leaves the band
};

/// Frequency window where the channel is evaluated: single-mode band of
/// the main guide, below the coupling-section cutoff, guard-banded.
std::pair<double, double> channel_window(const ChannelDesign& design);

/// Measures the transmission resonance closest to `near_hz` (default f0_target).
std::optional<ResonanceMeasurement> measure_channel(const ChannelDesign& design,
                                                    std::optional<double> near_hz = std::nullopt);

/// |S21|^2 of the isolated channel at one frequency.
double channel_power(const ChannelDesign& design, double f_hz);

/// Two-port referenced to the main guide's modal impedance.
SMatrix channel_twoport(const ChannelDesign& design, const FrequencyGrid& grid);

ChannelDesign synthesize_channel(double f0, double hpbw, const WaveguideSpec& main_guide,
                                 const SynthesisTolerances& tol = {});

/// Ideal lossless symmetric tee, ports (upstream, downstream, branch).
Eigen::Matrix3cd shunt_tee();

/// Ports: 0 upstream main, 1 downstream main, 2 tap (channel output).
SMatrix channel_threeport(const ChannelDesign& design, const FrequencyGrid& grid);

struct BankLayout {
    std::vector<ChannelDesign> channels;  // descending f0 along the guide
    std::vector<double> spacings;         // m, main-guide section before each channel
    WaveguideSpec main_guide;

    std::size_t input_port() const noexcept { return 0; }
    std::size_t tap_port(std::size_t channel) const noexcept { return 1 + channel; }
    std::size_t thru_port() const noexcept { return channels.size() + 1; }
    std::size_t port_count() const noexcept { return channels.size() + 2; }
    double total_length() const;

    void validate() const;
};

/// Sorts channels by descending target frequency (stable).
void sort_channels_descending(std::vector<ChannelDesign>& channels);

/// Ports: input, one tap per channel in layout order, thru.
SMatrix assemble_bank(const BankLayout& layout, const FrequencyGrid& grid);

/// Chain used by assemble_bank, exposed for oracle checks.
std::vector<ChainLink> bank_chain(const BankLayout& layout, const FrequencyGrid& grid);

using SpacingObjective = std::function<double(const BankLayout&)>;

/// Mean over channels of the tap through power |S_tap,in|^2 at each
/// channel's achieved center (target center if synthesis did not converge).
double mean_tap_power(const BankLayout& layout);

struct SpacingOptions {
    std::vector<double> multipliers = {1.00, 1.25, 1.50, 1.75, 2.00, 2.25, 2.50, 2.75, 3.00};
    std::optional<double> reference_frequency_hz;  // default: middle of the channel span
    SpacingObjective objective;                    // default: mean_tap_power
    int max_sweeps = 20;
    double tie_tolerance = 1e-12;  // relative; ties go to the shorter bank
};

struct SpacingResult {
    BankLayout layout;
    std::vector<double> multipliers;  // per link, in guided wavelengths
    double guided_wavelength = 0.0;   // m, at the reference frequency
    double objective = 0.0;
    double initial_objective = 0.0;
    int sweeps = 0;
    int evaluations = 0;
};

/// Discrete coordinate descent over per-link spacing multipliers, starting
/// from one guided wavelength per link (or the smallest candidate when 1
/// is not offered).
SpacingResult optimize_spacings(std::vector<ChannelDesign> channels, const WaveguideSpec& main_guide,
                                const SpacingOptions& options = {});

/// Layout with spacing[i] = multipliers[i] * guided wavelength at `reference_hz`.
BankLayout layout_from_multipliers(std::vector<ChannelDesign> channels, const WaveguideSpec& main_guide,
                                   std::span<const double> multipliers, double reference_hz);

/// Midpoint of the span of channel target frequencies.
double band_center(std::span<const ChannelDesign> channels);

class BandEdgeError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct PassbandMetrics {
    double f_peak = 0.0;
    double hpbw = 0.0;
    double peak_efficiency = 0.0;
};

/// Peak by parabolic interpolation around the grid maximum, half-power
/// crossings by linear interpolation. Throws BandEdgeError when a crossing
/// is not inside the grid.
PassbandMetrics passband_metrics(std::span<const double> power, const FrequencyGrid& grid);
PassbandMetrics passband_metrics(const SMatrix& bank, std::size_t tap_index, const FrequencyGrid& grid);

}  // namespace cubesounder
