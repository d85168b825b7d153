#include "cubesounder/filterbank.hpp"

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace cubesounder {

namespace {

using Mat2 = Eigen::Matrix2cd;

Mat2 section_abcd(cplx gamma, cplx z, double length) {
    const cplx gl = gamma * length;
    const cplx ch = std::cosh(gl);
    const cplx sh = std::sinh(gl);
    Mat2 m;
    m << ch, z * sh, sh / z, ch;
    return m;
}

// narrow - cavity - narrow transfer matrix at one frequency.
Mat2 channel_abcd(const ChannelDesign& d, double f) {
    const Mat2 narrow = section_abcd(propagation_constant(d.narrow_guide, f),
                                     wave_impedance(d.narrow_guide, f), d.narrow_length);
    const Mat2 cavity = section_abcd(propagation_constant(d.cavity_guide, f),
                                     wave_impedance(d.cavity_guide, f), d.cavity_length);
    return narrow * cavity * narrow;
}

Mat2 abcd_to_s(const Mat2& t, cplx z0) {
    const cplx a = t(0, 0), b = t(0, 1), c = t(1, 0), d = t(1, 1);
    const cplx den = a + b / z0 + c * z0 + d;
    Mat2 s;
    s(0, 0) = (a + b / z0 - c * z0 - d) / den;
    s(0, 1) = 2.0 * (a * d - b * c) / den;
    s(1, 0) = 2.0 / den;
    s(1, 1) = (-a + b / z0 - c * z0 + d) / den;
    return s;
}

Mat2 channel_s(const ChannelDesign& d, double f) {
    return abcd_to_s(channel_abcd(d, f), wave_impedance(d.main_guide, f));
}

}  // namespace

ChannelDesign make_channel(double f0_target, double hpbw_target, const WaveguideSpec& main_guide,
                           double narrow_length, double cavity_length) {
    main_guide.validate();
    if (!(f0_target > 0.0)) throw std::invalid_argument("channel center frequency must be positive");
    if (!(narrow_length >= 0.0) || !(cavity_length > 0.0))
        throw std::invalid_argument("channel lengths must be non-negative (cavity positive)");

    ChannelDesign d;
    d.f0_target = f0_target;
    d.hpbw_target = hpbw_target;
    d.main_guide = main_guide;
    d.cavity_guide = main_guide;
    d.cavity_guide.name = main_guide.name + "-cavity";
    d.narrow_guide = main_guide;
    d.narrow_guide.name = main_guide.name + "-narrow";
    d.narrow_guide.width_a = constants::c0 / (2.0 * kNarrowCutoffRatio * f0_target);
    // The coupling section may end up narrower than it is tall (WR-5 near
    // 183 GHz). Its TE10 field keeps the main guide's polarization, so the
    // broad-wall ordering is not required here.
    d.narrow_length = narrow_length;
    d.cavity_length = cavity_length;
    return d;
}

std::pair<double, double> channel_window(const ChannelDesign& d) {
    const double fc = te10_cutoff(d.main_guide);
    const double lo = fc * 1.01;
    const double hi = std::min(2.0 * fc, te10_cutoff(d.narrow_guide)) * 0.99;
    return {lo, hi};
}

double channel_power(const ChannelDesign& d, double f_hz) {
    return std::norm(channel_s(d, f_hz)(1, 0));
}

SMatrix channel_twoport(const ChannelDesign& d, const FrequencyGrid& grid) {
    std::vector<Eigen::MatrixXcd> entries;
    entries.reserve(grid.size());
    for (double f : grid.points()) entries.emplace_back(channel_s(d, f));
    return SMatrix(grid, std::move(entries), {"in", "out"});
}

std::optional<ResonanceMeasurement> measure_channel(const ChannelDesign& d, std::optional<double> near_hz) {
    const auto [lo, hi] = channel_window(d);
    const double near = near_hz.value_or(d.f0_target);
    const double bw_hint = d.hpbw_target > 0.0 ? d.hpbw_target : (hi - lo) / 100.0;
    const auto n = static_cast<std::size_t>(std::clamp(16.0 * (hi - lo) / bw_hint, 801.0, 200001.0));

    std::vector<double> f(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
        f[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
        p[i] = channel_power(d, f[i]);
    }
    const double pmax = *std::max_element(p.begin(), p.end());
    std::optional<std::size_t> pick;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (!(p[i] > p[i - 1] && p[i] >= p[i + 1]) || p[i] < 0.5 * pmax) continue;
        if (!pick || std::abs(f[i] - near) < std::abs(f[*pick] - near)) pick = i;
    }
    if (!pick) return std::nullopt;

    const std::size_t i = *pick;
    auto neg_power = [&](double x) { return -channel_power(d, x); };
    const auto [fp, negp] = boost::math::tools::brent_find_minima(neg_power, f[i - 1], f[i + 1],
                                                                  std::numeric_limits<double>::digits / 2);
    ResonanceMeasurement m;
    m.f_peak = fp;
    m.peak_power = -negp;

    const double half = 0.5 * m.peak_power;
    auto g = [&](double x) { return channel_power(d, x) - half; };
    boost::math::tools::eps_tolerance<double> tol(std::numeric_limits<double>::digits - 4);

    std::optional<double> left, right;
    for (std::size_t j = i; j-- > 0;) {
        if (p[j] < half) {
            std::uintmax_t iters = 200;
            auto r = boost::math::tools::toms748_solve(g, f[j], fp, tol, iters);
            left = 0.5 * (r.first + r.second);
            break;
        }
    }
    for (std::size_t j = i + 1; j < n; ++j) {
        if (p[j] < half) {
            std::uintmax_t iters = 200;
            auto r = boost::math::tools::toms748_solve(g, fp, f[j], tol, iters);
            right = 0.5 * (r.first + r.second);
            break;
        }
    }
    if (left && right) m.hpbw = *right - *left;
    return m;
}

ChannelDesign synthesize_channel(double f0, double hpbw, const WaveguideSpec& main_guide,
                                 const SynthesisTolerances& tol) {
    if (!(hpbw > 0.0)) throw std::invalid_argument("target bandwidth must be positive");
    ChannelDesign start = make_channel(f0, hpbw, main_guide, 0.0, 1.0);
    const auto [lo, hi] = channel_window(start);
    if (!(f0 > lo && f0 < hi))
        throw std::invalid_argument(fmt::format("{:.6g} GHz is outside the single-mode band of {}", f0 / 1e9,
                                                main_guide.name));
    if (f0 - 0.5 * hpbw <= lo || f0 + 0.5 * hpbw >= hi)
        throw UnachievableBandwidthError(fmt::format(
            "half-power band {:.6g} GHz around {:.6g} GHz does not fit in the single-mode band of {}", hpbw / 1e9,
            f0 / 1e9, main_guide.name));

    const double decay = 1.0 / propagation_constant(start.narrow_guide, f0).real();
    const double max_narrow = 60.0 * decay;

    // Unknowns: cavity length and log of the coupling-section length.
    double cav = 0.5 * guided_wavelength(start.cavity_guide, f0);
    double log_narrow = std::log(0.25 * decay);
    auto design_at = [&](double c, double ln) { return make_channel(f0, hpbw, main_guide, std::exp(ln), c); };

    struct Eval {
        bool ok = false;
        double r_f = 0.0, r_bw = 0.0;
        ResonanceMeasurement m;
    };
    auto evaluate = [&](double c, double ln) {
        Eval e;
        auto m = measure_channel(design_at(c, ln));
        if (!m || !m->hpbw) return e;
        e.ok = true;
        e.m = *m;
        e.r_f = (m->f_peak - f0) / f0;
        e.r_bw = std::log(*m->hpbw / hpbw);
        return e;
    };
    // Merit scaled so that 1 is the edge of the acceptance box.
    const double bw_scale = std::log1p(tol.bw_rel);
    auto merit = [&](const Eval& e) { return std::hypot(e.r_f / tol.freq_rel, e.r_bw / bw_scale); };
    auto done = [&](const Eval& e) {
        return std::abs(e.m.f_peak - f0) <= tol.freq_rel * f0 && std::abs(*e.m.hpbw - hpbw) <= tol.bw_rel * hpbw;
    };

    int iter = 0;
    Eval cur = evaluate(cav, log_narrow);
    // Weak coupling keeps the resonance inside the band; lengthen until measurable.
    while (!cur.ok) {
        if (++iter > tol.max_iterations || std::exp(log_narrow) > max_narrow) {
            auto last = design_at(cav, log_narrow);
            last.iterations = iter;
            throw SynthesisError("no measurable resonance for the starting geometry", last);
        }
        log_narrow += std::log(2.0);
        cur = evaluate(cav, log_narrow);
    }

    // Once inside the tolerance box, a few extra steps pull the design
    // towards the exact target while they keep improving.
    constexpr int kPolishSteps = 3;
    int polish = 0;
    while (true) {
        if (done(cur)) {
            if (merit(cur) < 1e-2 || polish++ >= kPolishSteps) break;
        }
        if (++iter > tol.max_iterations) {
            if (done(cur)) break;
            auto last = design_at(cav, log_narrow);
            last.iterations = iter;
            throw SynthesisError(fmt::format("channel synthesis at {:.6g} GHz did not converge in {} iterations "
                                             "(center error {:.3g} Hz, bandwidth {:.6g} GHz)",
                                             f0 / 1e9, tol.max_iterations, cur.m.f_peak - f0, *cur.m.hpbw / 1e9),
                                 last);
        }
        const double hc = 1e-6 * cav;
        const double hn = 1e-4;
        const Eval ec = evaluate(cav + hc, log_narrow);
        const Eval en = evaluate(cav, log_narrow + hn);
        if (!ec.ok || !en.ok) {
            auto last = design_at(cav, log_narrow);
            last.iterations = iter;
            throw SynthesisError("resonance lost while estimating the Jacobian", last);
        }
        Eigen::Matrix2d jac;
        jac << (ec.r_f - cur.r_f) / hc, (en.r_f - cur.r_f) / hn, (ec.r_bw - cur.r_bw) / hc,
            (en.r_bw - cur.r_bw) / hn;

        if (cur.r_bw > 0.0 && jac(1, 1) > -1e-3) {
            throw UnachievableBandwidthError(fmt::format(
                "bandwidth {:.6g} GHz at {:.6g} GHz is loss-limited in {}: lengthening the coupling sections "
                "no longer narrows the passband (currently {:.6g} GHz)",
                hpbw / 1e9, f0 / 1e9, main_guide.name, *cur.m.hpbw / 1e9));
        }

        Eigen::Vector2d step = -jac.partialPivLu().solve(Eigen::Vector2d(cur.r_f, cur.r_bw));
        // Trust region: at most 20% of the cavity and a factor e on the coupling length.
        const double shrink = std::max({1.0, std::abs(step(0)) / (0.2 * cav), std::abs(step(1)) / 1.0});
        step /= shrink;

        const double m0 = merit(cur);
        Eval trial;
        double t = 1.0;
        bool accepted = false;
        for (int halving = 0; halving < 12; ++halving, t *= 0.5) {
            const double c = cav + t * step(0);
            const double ln = log_narrow + t * step(1);
            if (!(c > 0.0) || std::exp(ln) > max_narrow) continue;
            trial = evaluate(c, ln);
            if (trial.ok && merit(trial) < m0) {
                cav = c;
                log_narrow = ln;
                cur = trial;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (done(cur)) break;
            auto last = design_at(cav, log_narrow);
            last.iterations = iter;
            throw SynthesisError(fmt::format("channel synthesis at {:.6g} GHz stalled (no damped step improves)",
                                             f0 / 1e9),
                                 last);
        }
    }

    ChannelDesign out = design_at(cav, log_narrow);
    out.achieved_f0 = cur.m.f_peak;
    out.achieved_hpbw = cur.m.hpbw;
    out.iterations = iter;
    return out;
}

Eigen::Matrix3cd shunt_tee() {
    Eigen::Matrix3cd t;
    t << -1.0, 2.0, 2.0, 2.0, -1.0, 2.0, 2.0, 2.0, -1.0;
    return t / 3.0;
}

SMatrix channel_threeport(const ChannelDesign& d, const FrequencyGrid& grid) {
    const std::vector<Eigen::MatrixXcd> tee(grid.size(), Eigen::MatrixXcd(shunt_tee()));
    const SMatrix junction(grid, tee, {"up", "down", "branch"});
    return cascade_pair(junction, channel_twoport(d, grid), 2, 0);
}

double BankLayout::total_length() const {
    return std::accumulate(spacings.begin(), spacings.end(), 0.0);
}

void BankLayout::validate() const {
    if (channels.empty()) throw std::invalid_argument("bank layout has no channels");
    if (spacings.size() != channels.size())
        throw std::invalid_argument(
            fmt::format("bank layout: {} spacings for {} channels", spacings.size(), channels.size()));
    for (double s : spacings)
        if (!(s >= 0.0)) throw std::invalid_argument("bank layout: spacings must be non-negative");
    for (std::size_t i = 1; i < channels.size(); ++i)
        if (channels[i].f0_target > channels[i - 1].f0_target)
            throw std::invalid_argument("bank layout: channels must be in descending center-frequency order");
}

void sort_channels_descending(std::vector<ChannelDesign>& channels) {
    std::stable_sort(channels.begin(), channels.end(),
                     [](const ChannelDesign& a, const ChannelDesign& b) { return a.f0_target > b.f0_target; });
}

std::vector<ChainLink> bank_chain(const BankLayout& layout, const FrequencyGrid& grid) {
    layout.validate();
    std::vector<ChainLink> chain;
    chain.reserve(2 * layout.channels.size());
    for (std::size_t i = 0; i < layout.channels.size(); ++i) {
        chain.push_back({section_smatrix(layout.main_guide, layout.spacings[i], grid), 0, 1});
        chain.push_back({channel_threeport(layout.channels[i], grid), 0, 1});
    }
    return chain;
}

SMatrix assemble_bank(const BankLayout& layout, const FrequencyGrid& grid) {
    SMatrix bank = cascade_chain(bank_chain(layout, grid));
    std::vector<std::string> labels{"in"};
    for (std::size_t i = 0; i < layout.channels.size(); ++i) labels.push_back(fmt::format("tap{:02d}", i));
    labels.push_back("thru");
    bank.set_port_labels(std::move(labels));
    return bank;
}

double mean_tap_power(const BankLayout& layout) {
    std::vector<double> freqs;
    for (const auto& c : layout.channels) freqs.push_back(c.achieved_f0.value_or(c.f0_target));
    std::vector<double> grid_pts = freqs;
    std::sort(grid_pts.begin(), grid_pts.end());
    grid_pts.erase(std::unique(grid_pts.begin(), grid_pts.end()), grid_pts.end());
    const FrequencyGrid grid(grid_pts);
    const SMatrix bank = assemble_bank(layout, grid);

    double sum = 0.0;
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        const auto k = static_cast<std::size_t>(std::lower_bound(grid_pts.begin(), grid_pts.end(), freqs[i]) -
                                                grid_pts.begin());
        sum += std::norm(bank(k, layout.tap_port(i), layout.input_port()));
    }
    return sum / static_cast<double>(freqs.size());
}

double band_center(std::span<const ChannelDesign> channels) {
    if (channels.empty()) throw std::invalid_argument("band_center: no channels");
    auto [lo, hi] = std::minmax_element(channels.begin(), channels.end(), [](const auto& a, const auto& b) {
        return a.f0_target < b.f0_target;
    });
    return 0.5 * (lo->f0_target + hi->f0_target);
}

BankLayout layout_from_multipliers(std::vector<ChannelDesign> channels, const WaveguideSpec& main_guide,
                                   std::span<const double> multipliers, double reference_hz) {
    if (multipliers.size() != channels.size())
        throw std::invalid_argument("layout_from_multipliers: one multiplier per channel required");
    BankLayout layout;
    layout.main_guide = main_guide;
    const double lg = guided_wavelength(main_guide, reference_hz);
    for (double m : multipliers) layout.spacings.push_back(m * lg);
    layout.channels = std::move(channels);
    sort_channels_descending(layout.channels);
    layout.validate();
    return layout;
}

SpacingResult optimize_spacings(std::vector<ChannelDesign> channels, const WaveguideSpec& main_guide,
                                const SpacingOptions& options) {
    if (options.multipliers.empty()) throw std::invalid_argument("optimize_spacings: empty candidate set");
    if (channels.empty()) throw std::invalid_argument("optimize_spacings: no channels");
    sort_channels_descending(channels);

    std::vector<double> cands = options.multipliers;
    std::sort(cands.begin(), cands.end());
    cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
    if (cands.front() < 0.0) throw std::invalid_argument("optimize_spacings: negative multiplier");

    const double ref = options.reference_frequency_hz.value_or(band_center(channels));
    const SpacingObjective objective = options.objective ? options.objective : SpacingObjective(mean_tap_power);

    SpacingResult res;
    res.guided_wavelength = guided_wavelength(main_guide, ref);
    const double start = std::find(cands.begin(), cands.end(), 1.0) != cands.end() ? 1.0 : cands.front();
    std::vector<double> mult(channels.size(), start);

    auto score = [&](const std::vector<double>& m) {
        ++res.evaluations;
        return objective(layout_from_multipliers(channels, main_guide, m, ref));
    };
    auto length = [](const std::vector<double>& m) { return std::accumulate(m.begin(), m.end(), 0.0); };

    double best = score(mult);
    res.initial_objective = best;
    for (res.sweeps = 1; res.sweeps <= options.max_sweeps; ++res.sweeps) {
        bool changed = false;
        for (std::size_t link = 0; link < mult.size(); ++link) {
            for (double c : cands) {
                if (c == mult[link]) continue;
                auto trial = mult;
                trial[link] = c;
                const double s = score(trial);
                const double band = options.tie_tolerance * std::max(1.0, std::abs(best));
                const bool better = s > best + band;
                const bool tie_shorter = std::abs(s - best) <= band && length(trial) < length(mult);
                if (better || tie_shorter) {
                    mult = std::move(trial);
                    best = s;
                    changed = true;
                }
            }
        }
        if (!changed) break;
    }
    res.sweeps = std::min(res.sweeps, options.max_sweeps);
    res.multipliers = mult;
    res.objective = best;
    res.layout = layout_from_multipliers(std::move(channels), main_guide, mult, ref);
    return res;
}

PassbandMetrics passband_metrics(std::span<const double> power, const FrequencyGrid& grid) {
    if (power.size() != grid.size() || grid.size() < 3)
        throw std::invalid_argument("passband_metrics: need at least three samples matching the grid");
    const auto imax = static_cast<std::size_t>(std::max_element(power.begin(), power.end()) - power.begin());

    PassbandMetrics out;
    out.f_peak = grid[imax];
    out.peak_efficiency = power[imax];
    if (imax > 0 && imax + 1 < grid.size()) {
        // Parabola through the three points around the maximum (non-uniform spacing allowed).
        const double x0 = grid[imax - 1], x1 = grid[imax], x2 = grid[imax + 1];
        const double y0 = power[imax - 1], y1 = power[imax], y2 = power[imax + 1];
        const double d01 = (y1 - y0) / (x1 - x0);
        const double d12 = (y2 - y1) / (x2 - x1);
        const double a = (d12 - d01) / (x2 - x0);
        if (a < 0.0) {
            const double b = d01 - a * (x0 + x1);
            const double xv = -b / (2.0 * a);
            if (xv > x0 && xv < x2) {
                out.f_peak = xv;
                out.peak_efficiency = y1 + d01 * (xv - x1) + a * (xv - x0) * (xv - x1);
            }
        }
    }

    const double half = 0.5 * out.peak_efficiency;
    std::optional<double> left, right;
    for (std::size_t j = imax; j-- > 0;) {
        if (power[j] < half) {
            const double t = (half - power[j]) / (power[j + 1] - power[j]);
            left = grid[j] + t * (grid[j + 1] - grid[j]);
            break;
        }
    }
    for (std::size_t j = imax + 1; j < grid.size(); ++j) {
        if (power[j] < half) {
            const double t = (power[j - 1] - half) / (power[j - 1] - power[j]);
            right = grid[j - 1] + t * (grid[j] - grid[j - 1]);
            break;
        }
    }
    if (!left || !right)
        throw BandEdgeError(fmt::format("no half-power crossing on the {} side of the peak at {:.6g} GHz",
                                        left ? "upper" : "lower", out.f_peak / 1e9));
    out.hpbw = *right - *left;
    return out;
}

PassbandMetrics passband_metrics(const SMatrix& bank, std::size_t tap_index, const FrequencyGrid& grid) {
    if (!(bank.grid() == grid)) throw GridMismatchError("passband_metrics: grid does not match the bank");
    const std::size_t port = 1 + tap_index;
    if (port >= bank.n_ports())
        throw std::out_of_range("passband_metrics: tap index out of range");
    std::vector<double> p(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) p[k] = std::norm(bank(k, port, 0));
    return passband_metrics(p, grid);
}

}  // namespace cubesounder
