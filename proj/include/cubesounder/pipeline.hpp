#pragma once

// Flight-data reduction: timestream ingest, summed-channel deglitching,
// chopper demodulation, two-point calibration and quality statistics.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cubesounder/radiometry.hpp"

namespace cubesounder {

enum class ChopPhase : std::uint8_t { scene = 0, reference = 1 };

struct Timestream {
    std::vector<double> timestamps;             // UNIX seconds, strictly increasing
    std::vector<std::vector<double>> channels;  // [channel][sample], volts
    std::vector<double> chopper_pos;            // raw position column
    std::vector<ChopPhase> phase;
    std::vector<double> ref_temp;     // K
    std::vector<std::uint8_t> valid;  // 1 = usable sample
    double sample_rate = 0.0;         // Hz, nominal
    bool cadence_warning = false;     // median interval more than 10% off 1/sample_rate

    std::size_t size() const noexcept { return timestamps.size(); }
    std::size_t n_channels() const noexcept { return channels.size(); }
    std::size_t valid_count() const noexcept;
    double masked_fraction() const noexcept;

    void validate() const;
};

/// A malformed input row; `row` is the 1-based line number in the file.
class TimestreamFormatError : public std::runtime_error {
  public:
    TimestreamFormatError(const std::string& what, std::size_t row)
        : std::runtime_error("row " + std::to_string(row) + ": " + what), row_(row) {}
    std::size_t row() const noexcept { return row_; }

  private:
    std::size_t row_;
};

struct ChopperMapping {
    double threshold = 500.0;
    bool scene_above_threshold = true;

    ChopPhase classify(double pos) const noexcept {
        return (pos > threshold) == scene_above_threshold ? ChopPhase::scene : ChopPhase::reference;
    }
};

struct LoadOptions {
    ChopperMapping chopper;
    std::optional<double> sample_rate_hz;  // default: inferred from the median interval
};

/// CSV header: unix_time_s,chopper_pos,ref_temp_k,ch_00,...,ch_NN
Timestream load_timestream(std::istream& is, const LoadOptions& opts = {});
Timestream load_timestream(const std::filesystem::path& path, const LoadOptions& opts = {});

/// Writes the same CSV contract with 17 significant digits.
void write_timestream(std::ostream& os, const Timestream& ts);

std::string channel_column(std::size_t channel);

enum class DeglitchBaseline { global, per_phase };

struct DeglitchOptions {
    std::string detector = "summed_median";
    double k = 6.0;
    std::size_t buffer = 3;
    DeglitchBaseline baseline = DeglitchBaseline::per_phase;
    double absolute_floor = 1e-12;  // V, threshold used when the MAD is zero
};

struct GlitchInterval {
    std::size_t begin = 0;  // first masked sample
    std::size_t end = 0;    // one past the last masked sample
    double peak_deviation = 0.0;  // in MAD units (floor units under the fallback)
};

struct GlitchReport {
    std::vector<GlitchInterval> intervals;
    std::size_t flagged_samples = 0;  // samples over threshold, before buffering
    double masked_fraction = 0.0;     // of the whole stream, after this pass
    bool mad_fallback = false;
};

struct DeglitchResult {
    Timestream stream;
    GlitchReport report;
};

/// Sums all channels into one diagnostic series and masks samples whose
/// deviation from the median exceeds k * 1.4826 * MAD, plus `buffer`
/// samples either side. With the per-phase baseline the median and MAD are
/// taken separately over scene and reference samples. Only the mask changes.
DeglitchResult deglitch(Timestream ts, const DeglitchOptions& opts = {});

struct DemodOptions {
    std::size_t min_phase_samples = 2;
    double max_masked_fraction = 0.25;
};

struct DemodCycle {
    double time = 0.0;  // midpoint of the cycle
    std::size_t scene_begin = 0, scene_end = 0;
    std::size_t ref_begin = 0, ref_end = 0;
    std::vector<double> delta_v;  // per channel, scene minus reference
    double ref_temp = 0.0;        // mean over the cycle's valid samples
};

struct DemodResult {
    std::vector<DemodCycle> cycles;  // kept cycles only
    std::size_t complete_cycles = 0;
    std::size_t dropped_cycles = 0;
    std::string diagnostic;  // set when nothing could be demodulated
};

/// Pairs each scene run with the reference run that follows it. Runs that
/// touch either end of the stream are not used.
DemodResult demodulate(const Timestream& ts, const DemodOptions& opts = {});

/// (t_hot - t_cold) * v / r + t_ref
double brightness_temperature(double delta_v, double responsivity, double t_ref, double contrast_k);

struct CalibratedSeries {
    std::vector<double> time;
    std::vector<double> t_ref;
    std::vector<std::vector<double>> tb;  // [channel][cycle]; empty for disabled channels
    std::vector<bool> enabled;
    std::vector<std::string> notices;
};

CalibratedSeries calibrate(const DemodResult& demod, const CalibrationTable& cal);

struct ChannelQuality {
    std::size_t channel = 0;
    bool enabled = true;
    std::optional<double> net_mk;  // mK*sqrt(s) at the achieved cycle rate
    double masked_fraction = 0.0;
    double cycle_yield = 0.0;
    std::size_t cycles = 0;
    std::optional<double> mean_tb;
};

struct QualityReport {
    std::vector<ChannelQuality> channels;
    std::optional<double> cycle_rate_hz;
    std::size_t complete_cycles = 0;
};

QualityReport quality_report(const CalibratedSeries& series, std::size_t complete_cycles, double masked_fraction);

struct PipelineOptions {
    LoadOptions load;
    DeglitchOptions deglitch;
    DemodOptions demod;
};

struct PipelineResult {
    DeglitchResult deglitched;
    DemodResult demod;
    CalibratedSeries calibrated;
    QualityReport quality;

    bool any_cycles() const noexcept;
};

PipelineResult run_pipeline(Timestream ts, const CalibrationTable& cal, const PipelineOptions& opts = {});

void write_cycles_csv(std::ostream& os, const CalibratedSeries& series);
void write_glitch_csv(std::ostream& os, const Timestream& ts, const GlitchReport& report);

}  // namespace cubesounder
