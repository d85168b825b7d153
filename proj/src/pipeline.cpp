#include "cubesounder/pipeline.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <string_view>

namespace cubesounder {

namespace {

constexpr double kMadToSigma = 1.4826;

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

double median_of(std::vector<double> v) {
    const std::size_t n = v.size();
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(v.begin(), mid, v.end());
    const double hi = *mid;
    if (n % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

double median_interval(const std::vector<double>& t) {
    std::vector<double> dt(t.size() - 1);
    for (std::size_t i = 1; i < t.size(); ++i) dt[i - 1] = t[i] - t[i - 1];
    return median_of(std::move(dt));
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

}  // namespace

std::string channel_column(std::size_t channel) {
    return fmt::format("ch_{:02d}", channel);
}

std::size_t Timestream::valid_count() const noexcept {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

double Timestream::masked_fraction() const noexcept {
    return size() == 0 ? 0.0 : 1.0 - static_cast<double>(valid_count()) / static_cast<double>(size());
}

void Timestream::validate() const {
    const std::size_t n = size();
    if (n == 0) throw std::invalid_argument("timestream: no samples");
    if (channels.empty()) throw std::invalid_argument("timestream: no channels");
    for (const auto& c : channels)
        if (c.size() != n) throw std::invalid_argument("timestream: channel length differs from timestamps");
    if (chopper_pos.size() != n || phase.size() != n || ref_temp.size() != n || valid.size() != n)
        throw std::invalid_argument("timestream: column lengths differ");
    for (std::size_t i = 1; i < n; ++i)
        if (!(timestamps[i] > timestamps[i - 1]))
            throw std::invalid_argument(fmt::format("timestream: timestamps not strictly increasing at sample {}", i));
    if (!(sample_rate > 0.0)) throw std::invalid_argument("timestream: sample rate must be positive");
}

Timestream load_timestream(std::istream& is, const LoadOptions& opts) {
    std::string line;
    std::size_t row = 1;
    if (!std::getline(is, line)) throw TimestreamFormatError("empty file (missing header)", row);
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = split_csv(line);
    const char* fixed[] = {"unix_time_s", "chopper_pos", "ref_temp_k"};
    for (std::size_t i = 0; i < 3; ++i)
        if (header.size() <= i || header[i] != fixed[i])
            throw TimestreamFormatError(fmt::format("missing column '{}' at position {}", fixed[i], i + 1), row);
    const std::size_t n_ch = header.size() - 3;
    if (n_ch == 0) throw TimestreamFormatError("missing detector columns (ch_00, ...)", row);
    for (std::size_t c = 0; c < n_ch; ++c)
        if (header[3 + c] != channel_column(c))
            throw TimestreamFormatError(
                fmt::format("expected column '{}', found '{}'", channel_column(c), header[3 + c]), row);

    Timestream ts;
    ts.channels.assign(n_ch, {});
    while (std::getline(is, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto fields = split_csv(line);
        if (fields.size() != header.size())
            throw TimestreamFormatError(
                fmt::format("expected {} fields, found {}", header.size(), fields.size()), row);
        std::vector<double> v(fields.size());
        for (std::size_t i = 0; i < fields.size(); ++i) {
            const auto f = fields[i];
            auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v[i]);
            if (ec != std::errc{} || ptr != f.data() + f.size())
                throw TimestreamFormatError(fmt::format("column '{}': malformed number '{}'", header[i], f), row);
            if (!std::isfinite(v[i]))
                throw TimestreamFormatError(fmt::format("column '{}': non-finite value", header[i]), row);
        }
        if (!ts.timestamps.empty() && !(v[0] > ts.timestamps.back()))
            throw TimestreamFormatError(
                v[0] == ts.timestamps.back() ? "duplicated timestamp" : "timestamp goes backwards", row);
        ts.timestamps.push_back(v[0]);
        ts.chopper_pos.push_back(v[1]);
        ts.phase.push_back(opts.chopper.classify(v[1]));
        ts.ref_temp.push_back(v[2]);
        for (std::size_t c = 0; c < n_ch; ++c) ts.channels[c].push_back(v[3 + c]);
    }
    if (ts.timestamps.empty()) throw TimestreamFormatError("no data rows", row);
    ts.valid.assign(ts.size(), 1);

    if (opts.sample_rate_hz) {
        ts.sample_rate = *opts.sample_rate_hz;
    } else if (ts.size() >= 2) {
        ts.sample_rate = 1.0 / median_interval(ts.timestamps);
    } else {
        throw TimestreamFormatError("cannot infer the sample rate from a single row", row);
    }
    if (ts.size() >= 2) {
        const double nominal = 1.0 / ts.sample_rate;
        ts.cadence_warning = std::abs(median_interval(ts.timestamps) - nominal) > 0.1 * nominal;
    }
    ts.validate();
    return ts;
}

Timestream load_timestream(const std::filesystem::path& path, const LoadOptions& opts) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    return load_timestream(is, opts);
}

void write_timestream(std::ostream& os, const Timestream& ts) {
    os << "unix_time_s,chopper_pos,ref_temp_k";
    for (std::size_t c = 0; c < ts.n_channels(); ++c) os << ',' << channel_column(c);
    os << '\n';
    for (std::size_t i = 0; i < ts.size(); ++i) {
        os << num(ts.timestamps[i]) << ',' << num(ts.chopper_pos[i]) << ',' << num(ts.ref_temp[i]);
        for (const auto& ch : ts.channels) os << ',' << num(ch[i]);
        os << '\n';
    }
}

DeglitchResult deglitch(Timestream ts, const DeglitchOptions& opts) {
    ts.validate();
    if (opts.detector != "summed_median")
        throw std::invalid_argument("deglitch: unsupported detector strategy '" + opts.detector + "'");
    if (!(opts.k > 0.0)) throw std::invalid_argument("deglitch: k must be positive");
    if (ts.valid_count() < 16) throw std::invalid_argument("deglitch: need at least 16 valid samples");

    const std::size_t n = ts.size();
    std::vector<double> diag(n, 0.0);
    for (const auto& ch : ts.channels)
        for (std::size_t i = 0; i < n; ++i) diag[i] += ch[i];

    auto group_of = [&](std::size_t i) -> int {
        return opts.baseline == DeglitchBaseline::per_phase ? static_cast<int>(ts.phase[i]) : 0;
    };

    DeglitchResult out;
    std::vector<double> center(2, 0.0), scale(2, 0.0), threshold(2, 0.0);
    std::vector<bool> fallback(2, false);
    for (int g = 0; g < 2; ++g) {
        std::vector<double> vals;
        for (std::size_t i = 0; i < n; ++i)
            if (ts.valid[i] && group_of(i) == g) vals.push_back(diag[i]);
        if (vals.empty()) continue;
        center[g] = median_of(vals);
        for (double& v : vals) v = std::abs(v - center[g]);
        scale[g] = median_of(std::move(vals));
        if (scale[g] > 0.0) {
            threshold[g] = opts.k * kMadToSigma * scale[g];
        } else {
            fallback[g] = true;
            out.report.mad_fallback = true;
            threshold[g] = opts.absolute_floor;
            scale[g] = opts.absolute_floor;
        }
    }

    std::vector<std::pair<std::size_t, double>> flagged;  // sample, deviation in scale units
    for (std::size_t i = 0; i < n; ++i) {
        if (!ts.valid[i]) continue;
        const int g = group_of(i);
        const double dev = std::abs(diag[i] - center[g]);
        if (dev > threshold[g]) flagged.emplace_back(i, dev / scale[g]);
    }
    out.report.flagged_samples = flagged.size();

    auto& iv = out.report.intervals;
    for (const auto& [i, dev] : flagged) {
        const std::size_t b = i >= opts.buffer ? i - opts.buffer : 0;
        const std::size_t e = std::min(n, i + 1 + opts.buffer);
        if (!iv.empty() && b <= iv.back().end) {
            iv.back().end = std::max(iv.back().end, e);
            iv.back().peak_deviation = std::max(iv.back().peak_deviation, dev);
        } else {
            iv.push_back({b, e, dev});
        }
    }
    for (const auto& g : iv)
        for (std::size_t i = g.begin; i < g.end; ++i) ts.valid[i] = 0;

    out.report.masked_fraction = ts.masked_fraction();
    out.stream = std::move(ts);
    return out;
}

DemodResult demodulate(const Timestream& ts, const DemodOptions& opts) {
    ts.validate();
    struct Run {
        ChopPhase phase;
        std::size_t begin, end;
    };
    std::vector<Run> runs;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        if (runs.empty() || runs.back().phase != ts.phase[i]) runs.push_back({ts.phase[i], i, i + 1});
        else runs.back().end = i + 1;
    }

    DemodResult out;
    const std::size_t n_ch = ts.n_channels();
    // Runs touching either end of the stream may be truncated; skip them.
    for (std::size_t r = 1; r + 2 < runs.size(); ++r) {
        const Run& sc = runs[r];
        const Run& rf = runs[r + 1];
        if (sc.phase != ChopPhase::scene) continue;
        ++out.complete_cycles;

        std::size_t n_scene = 0, n_ref = 0;
        for (std::size_t i = sc.begin; i < sc.end; ++i) n_scene += ts.valid[i];
        for (std::size_t i = rf.begin; i < rf.end; ++i) n_ref += ts.valid[i];
        const std::size_t total = rf.end - sc.begin;
        const double masked = static_cast<double>(total - n_scene - n_ref) / static_cast<double>(total);
        if (n_scene < opts.min_phase_samples || n_ref < opts.min_phase_samples || masked > opts.max_masked_fraction) {
            ++out.dropped_cycles;
            continue;
        }

        DemodCycle cyc;
        cyc.scene_begin = sc.begin;
        cyc.scene_end = sc.end;
        cyc.ref_begin = rf.begin;
        cyc.ref_end = rf.end;
        cyc.time = 0.5 * (ts.timestamps[sc.begin] + ts.timestamps[rf.end - 1]);
        cyc.delta_v.resize(n_ch);
        for (std::size_t c = 0; c < n_ch; ++c) {
            const auto& v = ts.channels[c];
            double s = 0.0, q = 0.0;
            for (std::size_t i = sc.begin; i < sc.end; ++i)
                if (ts.valid[i]) s += v[i];
            for (std::size_t i = rf.begin; i < rf.end; ++i)
                if (ts.valid[i]) q += v[i];
            cyc.delta_v[c] = s / static_cast<double>(n_scene) - q / static_cast<double>(n_ref);
        }
        double tr = 0.0;
        for (std::size_t i = sc.begin; i < rf.end; ++i)
            if (ts.valid[i]) tr += ts.ref_temp[i];
        cyc.ref_temp = tr / static_cast<double>(n_scene + n_ref);
        out.cycles.push_back(std::move(cyc));
    }

    if (out.complete_cycles == 0)
        out.diagnostic = "no complete chop cycles: the chopper phase never alternates scene -> reference "
                         "away from the stream edges";
    else if (out.cycles.empty())
        out.diagnostic = fmt::format("all {} complete cycles were dropped by the mask", out.complete_cycles);
    return out;
}

double brightness_temperature(double delta_v, double responsivity, double t_ref, double contrast_k) {
    return contrast_k * (delta_v / responsivity) + t_ref;
}

CalibratedSeries calibrate(const DemodResult& demod, const CalibrationTable& cal) {
    cal.validate();
    CalibratedSeries out;
    for (const auto& c : demod.cycles) {
        if (c.delta_v.size() != cal.n_channels())
            throw std::invalid_argument(fmt::format("calibrate: data has {} channels, calibration table has {}",
                                                    c.delta_v.size(), cal.n_channels()));
        out.time.push_back(c.time);
        out.t_ref.push_back(c.ref_temp);
    }
    out.tb.assign(cal.n_channels(), {});
    out.enabled = cal.enabled;
    for (std::size_t ch = 0; ch < cal.n_channels(); ++ch) {
        if (!cal.enabled[ch]) {
            out.notices.push_back(fmt::format("{} disabled in calibration table; omitted", channel_column(ch)));
            continue;
        }
        auto& tb = out.tb[ch];
        tb.reserve(demod.cycles.size());
        for (const auto& c : demod.cycles)
            tb.push_back(brightness_temperature(c.delta_v[ch], cal.responsivity[ch], c.ref_temp, cal.contrast()));
    }
    return out;
}

QualityReport quality_report(const CalibratedSeries& series, std::size_t complete_cycles, double masked_fraction) {
    QualityReport q;
    q.complete_cycles = complete_cycles;
    if (series.time.size() >= 2) q.cycle_rate_hz = 1.0 / median_interval(series.time);
    for (std::size_t ch = 0; ch < series.tb.size(); ++ch) {
        ChannelQuality c;
        c.channel = ch;
        c.enabled = ch < series.enabled.size() ? static_cast<bool>(series.enabled[ch]) : true;
        c.masked_fraction = masked_fraction;
        const auto& tb = series.tb[ch];
        c.cycles = tb.size();
        c.cycle_yield = complete_cycles == 0 ? 0.0 : static_cast<double>(tb.size()) / static_cast<double>(complete_cycles);
        if (!tb.empty()) c.mean_tb = std::accumulate(tb.begin(), tb.end(), 0.0) / static_cast<double>(tb.size());
        if (tb.size() >= 2 && q.cycle_rate_hz) c.net_mk = net_from_samples(tb, *q.cycle_rate_hz);
        q.channels.push_back(c);
    }
    return q;
}

bool PipelineResult::any_cycles() const noexcept {
    for (const auto& c : quality.channels)
        if (c.cycles > 0) return true;
    return false;
}

PipelineResult run_pipeline(Timestream ts, const CalibrationTable& cal, const PipelineOptions& opts) {
    if (cal.n_channels() != ts.n_channels())
        throw std::invalid_argument(fmt::format("calibration table has {} channels, timestream has {}",
                                                cal.n_channels(), ts.n_channels()));
    PipelineResult r;
    r.deglitched = deglitch(std::move(ts), opts.deglitch);
    r.demod = demodulate(r.deglitched.stream, opts.demod);
    r.calibrated = calibrate(r.demod, cal);
    r.quality = quality_report(r.calibrated, r.demod.complete_cycles, r.deglitched.report.masked_fraction);
    return r;
}

void write_cycles_csv(std::ostream& os, const CalibratedSeries& series) {
    os << "unix_time_s";
    for (std::size_t ch = 0; ch < series.tb.size(); ++ch)
        if (series.enabled[ch]) os << ',' << channel_column(ch) << "_tb_k";
    os << '\n';
    for (std::size_t k = 0; k < series.time.size(); ++k) {
        os << num(series.time[k]);
        for (std::size_t ch = 0; ch < series.tb.size(); ++ch)
            if (series.enabled[ch]) os << ',' << num(series.tb[ch][k]);
        os << '\n';
    }
}

void write_glitch_csv(std::ostream& os, const Timestream& ts, const GlitchReport& report) {
    os << "start_index,end_index,start_unix_time_s,end_unix_time_s,peak_deviation_mad\n";
    for (const auto& g : report.intervals)
        os << g.begin << ',' << g.end - 1 << ',' << num(ts.timestamps[g.begin]) << ','
           << num(ts.timestamps[g.end - 1]) << ',' << num(g.peak_deviation) << '\n';
}

}  // namespace cubesounder
