#include "cubesounder/radiometry.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cubesounder/waveguide.hpp"

namespace cubesounder {

namespace {

double db_to_power(double db) { return std::pow(10.0, db / 10.0); }
double db_to_voltage(double db) { return std::pow(10.0, db / 20.0); }

double per_channel(const std::vector<double>& v, std::size_t channel, const char* what) {
    if (v.size() == 1) return v.front();
    if (channel >= v.size()) throw std::out_of_range(fmt::format("{}: channel {} out of range", what, channel));
    return v[channel];
}

}  // namespace

void RadiometerChain::validate() const {
    auto finite = [](double x) { return std::isfinite(x); };
    if (!finite(rf_gain_db) || !finite(noise_figure_db) || !finite(front_loss_db) || !finite(audio_gain_db))
        throw std::invalid_argument("radiometer chain: gains and losses must be finite");
    if (optical_efficiency.empty() || bandwidth_hz.empty())
        throw std::invalid_argument("radiometer chain: optical_efficiency and bandwidth_hz need at least one value");
    if (optical_efficiency.size() > 1 && bandwidth_hz.size() > 1 && optical_efficiency.size() != bandwidth_hz.size())
        throw std::invalid_argument("radiometer chain: per-channel lists differ in length");
    for (double e : optical_efficiency)
        if (!(e > 0.0 && e <= 1.0))
            throw std::invalid_argument("radiometer chain: optical efficiency must be in (0, 1] (non-physical chain)");
    for (double b : bandwidth_hz)
        if (!(b > 0.0 && finite(b))) throw std::invalid_argument("radiometer chain: bandwidth must be positive");
    if (noise_figure_db < 0.0) throw std::invalid_argument("radiometer chain: noise figure must be >= 0 dB");
    if (!(detector_responsivity > 0.0)) throw std::invalid_argument("radiometer chain: responsivity must be positive");
    if (!(detector_nep >= 0.0) || !(audio_input_noise >= 0.0))
        throw std::invalid_argument("radiometer chain: noise densities must be non-negative");
    if (adc_bits < 1 || adc_bits > 32) throw std::invalid_argument("radiometer chain: adc_bits must be in [1, 32]");
    if (!(adc_fullscale > 0.0) || !(adc_sample_rate_hz > 0.0))
        throw std::invalid_argument("radiometer chain: ADC range and sample rate must be positive");
    if (!(dicke_factor >= 1.0)) throw std::invalid_argument("radiometer chain: dicke_factor must be >= 1");
}

std::size_t RadiometerChain::n_channels() const noexcept {
    return std::max(optical_efficiency.size(), bandwidth_hz.size());
}

double RadiometerChain::efficiency(std::size_t channel) const {
    return per_channel(optical_efficiency, channel, "optical_efficiency");
}

double RadiometerChain::bandwidth(std::size_t channel) const {
    return per_channel(bandwidth_hz, channel, "bandwidth_hz");
}

double RadiometerChain::detector_watts_per_kelvin(std::size_t channel) const {
    return constants::boltzmann * bandwidth(channel) * db_to_power(rf_gain_db) * efficiency(channel) /
           db_to_power(front_loss_db);
}

double RadiometerChain::volts_per_kelvin(std::size_t channel) const {
    return detector_watts_per_kelvin(channel) * detector_responsivity * db_to_voltage(audio_gain_db);
}

double RadiometerChain::receiver_temperature() const {
    return noise_figure_to_temperature(noise_figure_db);
}

RadiometerChain RadiometerChain::g_band() {
    RadiometerChain c;
    c.band = "G";
    c.rf_gain_db = 40.0;
    c.noise_figure_db = 6.0;
    c.front_loss_db = 0.0;
    c.optical_efficiency = {0.20, 0.20, 0.20, 0.20, 0.20};
    c.bandwidth_hz = {2e9};
    c.detector_responsivity = 450.0;  // 450 mV/mW
    c.detector_nep = 50e-12;
    c.audio_gain_db = 34.0;
    c.audio_input_noise = 1e-9;
    return c;
}

RadiometerChain RadiometerChain::v_band() {
    RadiometerChain c;
    c.band = "V";
    c.rf_gain_db = 40.0;
    c.noise_figure_db = 5.0;
    c.front_loss_db = 3.0;
    c.optical_efficiency = {0.55};
    c.bandwidth_hz = {0.5e9};
    c.detector_responsivity = 450.0;
    c.detector_nep = 50e-12;
    c.audio_gain_db = 34.0;
    c.audio_input_noise = 1e-9;
    c.dicke_factor = 2.0;
    return c;
}

double noise_figure_to_temperature(double nf_db) {
    if (!(nf_db >= 0.0)) throw std::invalid_argument("noise figure must be >= 0 dB");
    return (db_to_power(nf_db) - 1.0) * kReferenceTemperatureK;
}

double radiometer_net(double t_sys_k, double bandwidth_hz, double kappa) {
    if (!(t_sys_k > 0.0) || !(bandwidth_hz > 0.0))
        throw std::invalid_argument("radiometer_net: T_sys and bandwidth must be positive");
    return 1e3 * kappa * t_sys_k / std::sqrt(bandwidth_hz * 1.0);
}

const char* to_string(NoiseSource s) noexcept {
    switch (s) {
        case NoiseSource::radiometric: return "radiometric";
        case NoiseSource::detector: return "detector";
        case NoiseSource::audio_amp: return "audio_amp";
        case NoiseSource::adc_quantization: return "adc_quantization";
    }
    return "unknown";
}

NoiseBudget noise_budget(const RadiometerChain& chain, double t_scene_k, std::size_t channel) {
    chain.validate();
    if (channel >= chain.n_channels()) throw std::out_of_range("noise_budget: channel out of range");
    if (!(t_scene_k >= 0.0)) throw std::invalid_argument("noise_budget: scene temperature must be >= 0 K");

    NoiseBudget b;
    b.channel = channel;
    b.t_scene = t_scene_k;
    b.t_sys = t_scene_k + chain.receiver_temperature();
    const double dp_dt = chain.detector_watts_per_kelvin(channel);
    b.detector_power_w = dp_dt * b.t_sys;

    // Quantization noise spread over the Nyquist band of the converter.
    const double lsb = 2.0 * chain.adc_fullscale / std::ldexp(1.0, chain.adc_bits);
    const double adc_density = lsb / std::sqrt(12.0) * std::sqrt(2.0 / chain.adc_sample_rate_hz);

    auto& c = b.contributions;
    c[static_cast<std::size_t>(NoiseSource::radiometric)] =
        radiometer_net(b.t_sys, chain.bandwidth(channel), chain.dicke_factor);
    c[static_cast<std::size_t>(NoiseSource::detector)] = 1e3 * chain.detector_nep / dp_dt;
    c[static_cast<std::size_t>(NoiseSource::audio_amp)] =
        1e3 * chain.audio_input_noise / (chain.detector_responsivity * dp_dt);
    c[static_cast<std::size_t>(NoiseSource::adc_quantization)] = 1e3 * adc_density / chain.volts_per_kelvin(channel);

    double sq = 0.0;
    for (double x : c) sq += x * x;
    b.total = std::sqrt(sq);
    b.dominant = static_cast<NoiseSource>(std::max_element(c.begin(), c.end()) - c.begin());
    return b;
}

void CalibrationTable::validate() const {
    if (enabled.size() != responsivity.size())
        throw std::invalid_argument("calibration table: enabled flags do not match channel count");
    if (!(t_hot > t_cold)) throw std::invalid_argument("calibration table: t_hot must exceed t_cold");
    for (std::size_t i = 0; i < responsivity.size(); ++i)
        if (enabled[i] && (!(responsivity[i] != 0.0) || !std::isfinite(responsivity[i])))
            throw std::invalid_argument(fmt::format("calibration table: channel {} enabled with zero responsivity", i));
}

CalibrationTable two_point_fit(std::span<const double> v_hot, std::span<const double> v_cold, double floor_v) {
    if (v_hot.size() != v_cold.size()) throw std::invalid_argument("two_point_fit: hot/cold channel counts differ");
    CalibrationTable t;
    t.responsivity.resize(v_hot.size());
    t.enabled.resize(v_hot.size());
    for (std::size_t i = 0; i < v_hot.size(); ++i) {
        t.responsivity[i] = v_hot[i] - v_cold[i];
        t.enabled[i] = std::isfinite(t.responsivity[i]) && std::abs(t.responsivity[i]) >= floor_v;
    }
    return t;
}

double net_from_samples(std::span<const double> kelvin, double sample_rate_hz) {
    if (!(sample_rate_hz > 0.0)) throw std::invalid_argument("net_from_samples: sample rate must be positive");
    std::size_t n = 0;
    double mean = 0.0;
    for (double x : kelvin)
        if (std::isfinite(x)) mean += (x - mean) / static_cast<double>(++n);
    if (n < 2) throw std::invalid_argument("net_from_samples: fewer than two valid samples");
    double ss = 0.0;
    for (double x : kelvin)
        if (std::isfinite(x)) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    return 1e3 * sd / std::sqrt(sample_rate_hz * 1.0);
}

}  // namespace cubesounder
