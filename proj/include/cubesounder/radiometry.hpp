#pragma once

// Radiometer sensitivity: radiometer-equation limits, a per-source noise
// budget for the LNA -> filter -> diode -> instrumentation amp -> ADC chain,
// and the hot/cold two-point responsivity table.

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace cubesounder {

/// Load temperatures of the two-point calibration, K.
inline constexpr double kHotLoadK = 293.0;
inline constexpr double kColdLoadK = 77.0;
/// Physical temperature used for noise-figure conversion, K.
inline constexpr double kReferenceTemperatureK = 290.0;

struct RadiometerChain {
    std::string band;
    double rf_gain_db = 0.0;  // total pre-detector gain
    double noise_figure_db = 0.0;
    double front_loss_db = 0.0;              // switch / window insertion loss
    std::vector<double> optical_efficiency;  // per channel; one value broadcasts
    std::vector<double> bandwidth_hz;        // per channel; one value broadcasts
    double detector_responsivity = 0.0;      // V/W
    double detector_nep = 0.0;               // W/sqrt(Hz)
    double audio_gain_db = 0.0;              // voltage gain, 20 log10
    double audio_input_noise = 0.0;          // V/sqrt(Hz)
    int adc_bits = 18;
    double adc_fullscale = 10.0;       // V, converter input range is +/- fullscale
    double adc_sample_rate_hz = 1000.0;
    double dicke_factor = 1.0;

    void validate() const;
    std::size_t n_channels() const noexcept;
    double efficiency(std::size_t channel) const;
    double bandwidth(std::size_t channel) const;

    /// dP/dT at the diode, W/K.
    double detector_watts_per_kelvin(std::size_t channel) const;
    /// End-to-end output voltage per kelvin of scene temperature, V/K.
    double volts_per_kelvin(std::size_t channel) const;
    double receiver_temperature() const;

    /// 5 channels, two 20 dB LNAs, 6 dB NF, 2 GHz channels at 20% efficiency.
    static RadiometerChain g_band();
    /// Switch front end, single LNA, 0.5 GHz channels.
    static RadiometerChain v_band();
};

double noise_figure_to_temperature(double nf_db);

/// kappa * T_sys / sqrt(B * 1 s), in mK*sqrt(s).
double radiometer_net(double t_sys_k, double bandwidth_hz, double kappa = 1.0);

enum class NoiseSource : std::size_t { radiometric = 0, detector, audio_amp, adc_quantization };
inline constexpr std::size_t kNoiseSourceCount = 4;
const char* to_string(NoiseSource s) noexcept;

struct NoiseBudget {
    std::size_t channel = 0;
    double t_scene = 0.0;
    double t_sys = 0.0;
    double detector_power_w = 0.0;
    std::array<double, kNoiseSourceCount> contributions{};  // mK*sqrt(s), indexed by NoiseSource
    double total = 0.0;                                     // quadrature sum
    NoiseSource dominant = NoiseSource::radiometric;

    double operator[](NoiseSource s) const { return contributions[static_cast<std::size_t>(s)]; }
};

/// Every contribution is referred to scene temperature at the antenna.
NoiseBudget noise_budget(const RadiometerChain& chain, double t_scene_k, std::size_t channel = 0);

struct CalibrationTable {
    std::vector<double> responsivity;  // V per (t_hot - t_cold) contrast
    std::vector<bool> enabled;
    double t_hot = kHotLoadK;
    double t_cold = kColdLoadK;
    std::string band;
    std::string date;

    std::size_t n_channels() const noexcept { return responsivity.size(); }
    double contrast() const noexcept { return t_hot - t_cold; }
    void validate() const;
};

/// R_i = v_hot_i - v_cold_i; channels with |R_i| < floor are disabled.
CalibrationTable two_point_fit(std::span<const double> v_hot, std::span<const double> v_cold,
                               double floor_v = 1e-12);

/// White-noise NET referred to 1 s: stddev / sqrt(rate * 1 s), in mK*sqrt(s)
/// for kelvin input. Non-finite samples are treated as masked.
double net_from_samples(std::span<const double> kelvin, double sample_rate_hz);

}  // namespace cubesounder
