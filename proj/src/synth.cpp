#include "cubesounder/synth.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "cubesounder/io.hpp"

namespace cubesounder::synth {

SceneProfile SceneProfile::constant(double t_k) {
    return {Kind::constant, {0.0}, {t_k}};
}

SceneProfile SceneProfile::ramp(double t_start_k, double rate_k_per_s, double duration_s) {
    return {Kind::ramp, {0.0, duration_s}, {t_start_k, t_start_k + rate_k_per_s * duration_s}};
}

SceneProfile SceneProfile::piecewise(std::vector<double> times_s, std::vector<double> kelvin) {
    return {Kind::piecewise, std::move(times_s), std::move(kelvin)};
}

void SceneProfile::validate() const {
    if (times_s.empty() || times_s.size() != kelvin.size())
        throw std::invalid_argument("scene profile: need matching, non-empty knot lists");
    for (std::size_t i = 1; i < times_s.size(); ++i)
        if (!(times_s[i] > times_s[i - 1])) throw std::invalid_argument("scene profile: knot times must increase");
    for (double k : kelvin)
        if (!(k >= 0.0) || !std::isfinite(k)) throw std::invalid_argument("scene profile: temperatures must be >= 0 K");
}

double SceneProfile::at(double t) const {
    if (t <= times_s.front()) return kelvin.front();
    if (t >= times_s.back()) return kelvin.back();
    const auto hi = static_cast<std::size_t>(std::upper_bound(times_s.begin(), times_s.end(), t) - times_s.begin());
    const std::size_t lo = hi - 1;
    const double w = (t - times_s[lo]) / (times_s[hi] - times_s[lo]);
    return kelvin[lo] + w * (kelvin[hi] - kelvin[lo]);
}

std::size_t Scenario::channel_count() const noexcept {
    return n_channels != 0 ? n_channels : chain.n_channels();
}

std::size_t Scenario::sample_count() const {
    return static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
}

void Scenario::validate() const {
    chain.validate();
    if (!(duration_s > 0.0) || !(sample_rate_hz > 0.0) || !(chop_rate_hz > 0.0))
        throw std::invalid_argument("scenario: duration, sample rate and chop rate must be positive");
    if (!(chop_rate_hz < sample_rate_hz / 4.0))
        throw std::invalid_argument("scenario: chop rate must be below a quarter of the sample rate");
    if (sample_count() < 2) throw std::invalid_argument("scenario: fewer than two samples");
    if (!std::isfinite(start_unix_s)) throw std::invalid_argument("scenario: start time must be finite");
    const std::size_t nc = channel_count();
    if (nc == 0) throw std::invalid_argument("scenario: no channels");
    for (const auto* v : {&chain.optical_efficiency, &chain.bandwidth_hz})
        if (v->size() != 1 && v->size() != nc)
            throw std::invalid_argument(
                fmt::format("scenario: {} channels but the chain lists {} per-channel values", nc, v->size()));
    scene.validate();
    if (!(t_ref_k >= 0.0)) throw std::invalid_argument("scenario: t_ref must be >= 0 K");
    if (!(noise_net_mk >= 0.0)) throw std::invalid_argument("scenario: noise NET must be >= 0");
    if (!std::isfinite(drift_v_per_s) || !std::isfinite(t_ref_drift_k_per_s))
        throw std::invalid_argument("scenario: drift rates must be finite");
    if (glitches) {
        const auto& g = *glitches;
        if (g.width < 1) throw std::invalid_argument("scenario: glitch width must be >= 1 sample");
        if (std::llround(g.period_s * sample_rate_hz) < static_cast<long long>(g.width))
            throw std::invalid_argument("scenario: glitch period shorter than the glitch width");
        if (!(g.first_s >= 0.0)) throw std::invalid_argument("scenario: first glitch time must be >= 0");
        if (g.depth_v && !(*g.depth_v < 0.0)) throw std::invalid_argument("scenario: glitch depth must be negative");
        if (!g.depth_v && !(g.depth_sigma > 0.0 && noise_net_mk > 0.0))
            throw std::invalid_argument("scenario: glitch depth in sigma needs depth_sigma > 0 and nonzero noise");
    }
}

double sample_sigma_v(double net_mk, double volts_per_kelvin, double sample_rate_hz) {
    // Scene and reference halves of a cycle each average fs/(2 f_chop)
    // samples, so the cycle difference has variance 4 sigma^2 f_chop / fs.
    return 1e-3 * net_mk * volts_per_kelvin * std::sqrt(sample_rate_hz) / 2.0;
}

Flight generate(const Scenario& s) {
    s.validate();
    const std::size_t n = s.sample_count();
    const std::size_t nc = s.channel_count();

    Flight f;
    auto& ts = f.stream;
    auto& tr = f.truth;
    ts.sample_rate = s.sample_rate_hz;
    ts.timestamps.resize(n);
    ts.chopper_pos.resize(n);
    ts.phase.resize(n);
    ts.ref_temp.resize(n);
    ts.valid.assign(n, 1);
    tr.phase.resize(n);
    tr.glitch.assign(n, 0);
    tr.scene_k.resize(n);

    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / s.sample_rate_hz;
        ts.timestamps[i] = s.start_unix_s + t;
        const double cyc = t * s.chop_rate_hz;
        const bool scene = cyc - std::floor(cyc) < 0.5;
        ts.phase[i] = tr.phase[i] = scene ? ChopPhase::scene : ChopPhase::reference;
        ts.chopper_pos[i] = scene ? kSceneChopperCounts : kReferenceChopperCounts;
        ts.ref_temp[i] = s.t_ref_k + s.t_ref_drift_k_per_s * t;
        tr.scene_k[i] = s.scene.at(t);
    }

    if (s.glitches) {
        const auto& g = *s.glitches;
        const auto step = static_cast<std::size_t>(std::llround(g.period_s * s.sample_rate_hz));
        for (auto i = static_cast<std::size_t>(std::llround(g.first_s * s.sample_rate_hz)); i < n; i += step)
            for (std::size_t j = i; j < std::min(n, i + g.width); ++j) tr.glitch[j] = 1;
    }

    ts.channels.assign(nc, std::vector<double>(n));
    tr.clean_v.assign(nc, std::vector<double>(n));
    f.volts_per_kelvin.resize(nc);
    f.noise_sigma_v.resize(nc);
    for (std::size_t c = 0; c < nc; ++c) {
        const double r = s.chain.volts_per_kelvin(c);
        const double sigma = sample_sigma_v(s.noise_net_mk, r, s.sample_rate_hz);
        f.volts_per_kelvin[c] = r;
        f.noise_sigma_v[c] = sigma;
        double depth = 0.0;
        if (s.glitches) depth = s.glitches->depth_v ? *s.glitches->depth_v : -s.glitches->depth_sigma * sigma;

        std::seed_seq seq{static_cast<std::uint64_t>(s.seed), static_cast<std::uint64_t>(c)};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> noise(0.0, 1.0);
        auto& v = ts.channels[c];
        auto& clean = tr.clean_v[c];
        for (std::size_t i = 0; i < n; ++i) {
            const double t = static_cast<double>(i) / s.sample_rate_hz;
            const double temp = tr.phase[i] == ChopPhase::scene ? tr.scene_k[i] : ts.ref_temp[i];
            clean[i] = r * temp + s.drift_v_per_s * t;
            const double w = noise(rng);
            v[i] = clean[i] + (sigma > 0.0 ? sigma * w : 0.0) + (tr.glitch[i] ? depth : 0.0);
        }
    }

    std::vector<double> hot(nc), cold(nc);
    for (std::size_t c = 0; c < nc; ++c) {
        hot[c] = f.volts_per_kelvin[c] * kHotLoadK;
        cold[c] = f.volts_per_kelvin[c] * kColdLoadK;
    }
    f.calibration = two_point_fit(hot, cold);
    f.calibration.band = s.chain.band;
    return f;
}

void write_truth(std::ostream& os, const Flight& f) {
    os << "unix_time_s,phase,glitch,scene_temp_k";
    for (std::size_t c = 0; c < f.truth.clean_v.size(); ++c) os << ",clean_" << channel_column(c);
    os << '\n';
    for (std::size_t i = 0; i < f.stream.size(); ++i) {
        os << fmt::format("{:.17g},{},{},{:.17g}", f.stream.timestamps[i],
                          f.truth.phase[i] == ChopPhase::scene ? "scene" : "reference", int{f.truth.glitch[i]},
                          f.truth.scene_k[i]);
        for (const auto& ch : f.truth.clean_v) os << fmt::format(",{:.17g}", ch[i]);
        os << '\n';
    }
}

void write_flight(const Flight& f, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    io::write_atomic(dir / "timestream.csv", [&](std::ostream& os) { write_timestream(os, f.stream); });
    io::write_atomic(dir / "truth.csv", [&](std::ostream& os) { write_truth(os, f); });
}

}  // namespace cubesounder::synth
