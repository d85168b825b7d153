#include "cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <ostream>
#include <sstream>

#include "cubesounder/config.hpp"
#include "cubesounder/filterbank.hpp"
#include "cubesounder/io.hpp"
#include "cubesounder/pipeline.hpp"
#include "cubesounder/radiometry.hpp"
#include "cubesounder/synth.hpp"
#include "cubesounder/touchstone.hpp"

#ifndef CUBESOUNDER_VERSION
#define CUBESOUNDER_VERSION "0.0.0"
#endif

namespace cubesounder::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string version() { return CUBESOUNDER_VERSION; }

namespace {

std::shared_ptr<spdlog::logger> logger() {
    static auto log = [] {
        auto l = std::make_shared<spdlog::logger>("cubesounder", std::make_shared<spdlog::sinks::stderr_sink_mt>());
        l->set_pattern("[%l] %v");
        const char* env = std::getenv("CUBESOUNDER_LOG");
        l->set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
        return l;
    }();
    return log;
}

json stamp() {
    json j;
    j["cubesounder_version"] = version();
    j["schema_version"] = config::kSchemaVersion;
    return j;
}

void write_json(const fs::path& path, const json& j) {
    io::write_atomic(path, j.dump(2) + "\n");
}

std::string g17(double v) { return fmt::format("{:.17g}", v); }

json opt_num(const std::optional<double>& v, double scale = 1.0) {
    return v ? json(*v * scale) : json(nullptr);
}

config::ParseOptions parse_options(bool lenient, std::vector<std::string>& warnings) {
    return {lenient, &warnings};
}

void flush_warnings(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) logger()->warn("{}", w);
}

struct Outcome {
    config::ChannelRequest request;
    std::optional<ChannelDesign> design;
    std::string error;
};

std::pair<double, double> default_sweep(const config::BandConfig& cfg) {
    double lo = cfg.channels.front().f0_hz, hi = lo, bw = 0.0;
    for (const auto& c : cfg.channels) {
        lo = std::min(lo, c.f0_hz);
        hi = std::max(hi, c.f0_hz);
        bw = std::max(bw, c.hpbw_hz);
    }
    const double fc = te10_cutoff(cfg.main_guide);
    return {std::max(1.01 * fc, lo - 3.0 * bw), std::min(0.99 * 2.0 * fc, hi + 3.0 * bw)};
}

double power_db(std::complex<double> s) {
    const double p = std::norm(s);
    return p > 0.0 ? std::max(-400.0, 10.0 * std::log10(p)) : -400.0;
}

int cmd_design(const fs::path& band_path, const fs::path& out, bool optimize, bool lenient) {
    std::vector<std::string> warnings;
    const auto cfg = config::parse_band(config::read_text(band_path), band_path.string(), parse_options(lenient, warnings));
    flush_warnings(warnings);

    std::vector<Outcome> outcomes;
    for (const auto& req : cfg.channels) {
        Outcome o{req, std::nullopt, {}};
        try {
            o.design = synthesize_channel(req.f0_hz, req.hpbw_hz, cfg.main_guide, cfg.tolerances);
            logger()->info("channel {:.4f} GHz converged in {} iterations", req.f0_hz * 1e-9, o.design->iterations);
        } catch (const SynthesisError& e) {
            o.design = e.last_iterate();
            o.error = e.what();
        } catch (const UnachievableBandwidthError& e) {
            o.error = e.what();
        }
        if (!o.error.empty()) logger()->warn("channel {:.4f} GHz: {}", req.f0_hz * 1e-9, o.error);
        outcomes.push_back(std::move(o));
    }
    const bool all_converged =
        std::all_of(outcomes.begin(), outcomes.end(), [](const Outcome& o) { return o.design && o.design->converged(); });

    std::vector<ChannelDesign> usable;
    for (const auto& o : outcomes)
        if (o.design) usable.push_back(*o.design);

    fs::create_directories(out);
    json doc = stamp();
    doc["band"] = cfg.band;
    doc["main_guide"] = {{"name", cfg.main_guide.name},
                         {"width_mm", cfg.main_guide.width_a * 1e3},
                         {"height_mm", cfg.main_guide.height_b * 1e3},
                         {"conductivity_s_per_m", cfg.main_guide.perfect_conductor ? json(nullptr) : json(cfg.main_guide.conductivity)}};
    doc["converged"] = all_converged;
    doc["optimized_spacing"] = optimize;

    json channels = json::array();
    if (!usable.empty()) {
        BankLayout layout;
        std::vector<double> multipliers;
        double lambda_g = 0.0;
        if (optimize) {
            auto res = optimize_spacings(usable, cfg.main_guide, cfg.spacing);
            layout = std::move(res.layout);
            multipliers = res.multipliers;
            lambda_g = res.guided_wavelength;
            doc["spacing_objective"] = res.objective;
            doc["spacing_initial_objective"] = res.initial_objective;
        } else {
            const double ref = cfg.spacing.reference_frequency_hz.value_or(band_center(usable));
            multipliers.assign(usable.size(), 1.0);
            layout = layout_from_multipliers(usable, cfg.main_guide, multipliers, ref);
            lambda_g = guided_wavelength(cfg.main_guide, ref);
        }

        const auto [f_lo, f_hi] = default_sweep(cfg);
        const auto grid = FrequencyGrid::linspace(cfg.sweep.start_hz.value_or(f_lo), cfg.sweep.stop_hz.value_or(f_hi),
                                                  cfg.sweep.points);
        const SMatrix bank = assemble_bank(layout, grid);

        const std::size_t n = layout.channels.size();
        for (std::size_t i = 0; i < n; ++i) {
            const auto& d = layout.channels[i];
            json c;
            c["touchstone_port"] = layout.tap_port(i) + 1;
            c["f0_target_ghz"] = d.f0_target * 1e-9;
            c["hpbw_target_ghz"] = d.hpbw_target * 1e-9;
            c["converged"] = d.converged();
            c["iterations"] = d.iterations;
            c["achieved_f0_ghz"] = opt_num(d.achieved_f0, 1e-9);
            c["achieved_hpbw_ghz"] = opt_num(d.achieved_hpbw, 1e-9);
            c["cavity_length_mm"] = d.cavity_length * 1e3;
            c["coupling_length_mm"] = d.narrow_length * 1e3;
            c["coupling_width_mm"] = d.narrow_guide.width_a * 1e3;
            c["spacing_before_mm"] = layout.spacings[i] * 1e3;
            c["spacing_multiplier"] = multipliers[i];
            try {
                const auto m = passband_metrics(bank, i, grid);
                c["bank_passband"] = {{"f_peak_ghz", m.f_peak * 1e-9},
                                      {"hpbw_ghz", m.hpbw * 1e-9},
                                      {"peak_efficiency", m.peak_efficiency}};
            } catch (const BandEdgeError& e) {
                c["bank_passband"] = nullptr;
                logger()->warn("tap {}: {}", i, e.what());
            }
            const auto hit = std::find_if(outcomes.begin(), outcomes.end(), [&](const Outcome& o) {
                return o.design && o.design->f0_target == d.f0_target && o.design->hpbw_target == d.hpbw_target;
            });
            c["error"] = hit != outcomes.end() && !hit->error.empty() ? json(hit->error) : json(nullptr);
            channels.push_back(c);
        }
        doc["guided_wavelength_mm"] = lambda_g * 1e3;
        doc["total_length_mm"] = layout.total_length() * 1e3;
        doc["sweep"] = {{"start_ghz", grid.front() * 1e-9}, {"stop_ghz", grid.back() * 1e-9}, {"points", grid.size()}};

        io::write_atomic(out / "sweep.csv", [&](std::ostream& os) {
            os << "frequency_ghz";
            for (std::size_t i = 0; i < n; ++i) os << fmt::format(",tap{:02d}_db", i);
            os << ",thru_db\n";
            for (std::size_t k = 0; k < grid.size(); ++k) {
                os << g17(grid[k] * 1e-9);
                for (std::size_t i = 0; i < n; ++i) os << ',' << g17(power_db(bank(k, layout.tap_port(i), 0)));
                os << ',' << g17(power_db(bank(k, layout.thru_port(), 0))) << '\n';
            }
        });
        io::write_atomic(out / fmt::format("bank.s{}p", bank.n_ports()), [&](std::ostream& os) {
            touchstone::write(os, bank, fmt::format("cubesounder {} filter bank, band {}", version(), cfg.band));
        });
    }
    for (const auto& o : outcomes) {
        if (o.design) continue;
        channels.push_back({{"f0_target_ghz", o.request.f0_hz * 1e-9},
                            {"hpbw_target_ghz", o.request.hpbw_hz * 1e-9},
                            {"converged", false},
                            {"error", o.error}});
    }
    doc["channels"] = channels;
    write_json(out / "design.json", doc);
    return all_converged ? ok : not_converged;
}

int cmd_budget(const fs::path& chain_path, const fs::path& out_dir, bool lenient, std::ostream& out) {
    std::vector<std::string> warnings;
    const auto cfg = config::parse_chain(config::read_text(chain_path), chain_path.string(), parse_options(lenient, warnings));
    flush_warnings(warnings);

    std::vector<NoiseBudget> budgets;
    for (std::size_t c = 0; c < cfg.chain.n_channels(); ++c) budgets.push_back(noise_budget(cfg.chain, cfg.scene_temperature_k, c));

    out << fmt::format("band {}  scene {:.1f} K  T_rx {:.1f} K  kappa {:g}\n", cfg.chain.band, cfg.scene_temperature_k,
                       cfg.chain.receiver_temperature(), cfg.chain.dicke_factor);
    out << fmt::format("{:>4} {:>12} {:>12} {:>12} {:>12} {:>12}  {}\n", "ch", "radiometric", "detector", "audio_amp",
                       "adc", "total", "dominant");
    for (const auto& b : budgets)
        out << fmt::format("{:>4} {:>12.2f} {:>12.2f} {:>12.2f} {:>12.2f} {:>12.2f}  {}\n", b.channel,
                           b[NoiseSource::radiometric], b[NoiseSource::detector], b[NoiseSource::audio_amp],
                           b[NoiseSource::adc_quantization], b.total, to_string(b.dominant));
    out << "(mK*sqrt(s), referred to scene temperature)\n";

    fs::create_directories(out_dir);
    io::write_atomic(out_dir / "budget.csv", [&](std::ostream& os) {
        os << "channel,source,net_mk_rts\n";
        for (const auto& b : budgets) {
            for (std::size_t s = 0; s < kNoiseSourceCount; ++s)
                os << b.channel << ',' << to_string(static_cast<NoiseSource>(s)) << ',' << g17(b.contributions[s]) << '\n';
            os << b.channel << ",total," << g17(b.total) << '\n';
        }
    });
    return ok;
}

int cmd_simulate(const fs::path& scenario_path, const fs::path& out_dir, bool lenient) {
    std::vector<std::string> warnings;
    const auto s =
        config::parse_scenario(config::read_text(scenario_path), scenario_path.string(), parse_options(lenient, warnings));
    flush_warnings(warnings);

    const auto flight = synth::generate(s);
    synth::write_flight(flight, out_dir);

    auto cal = config::calibration_to_json(flight.calibration);
    cal["cubesounder_version"] = version();
    write_json(out_dir / "calibration.json", cal);

    json summary = stamp();
    summary["samples"] = flight.stream.size();
    summary["channels"] = flight.stream.n_channels();
    summary["sample_rate_hz"] = s.sample_rate_hz;
    summary["chop_rate_hz"] = s.chop_rate_hz;
    summary["seed"] = s.seed;
    summary["noise_net_mk"] = s.noise_net_mk;
    summary["volts_per_kelvin"] = flight.volts_per_kelvin;
    summary["noise_sigma_v"] = flight.noise_sigma_v;
    summary["glitch_samples"] = std::count(flight.truth.glitch.begin(), flight.truth.glitch.end(), std::uint8_t{1});
    write_json(out_dir / "simulation.json", summary);
    logger()->info("wrote {} samples x {} channels to {}", flight.stream.size(), flight.stream.n_channels(),
                   out_dir.string());
    return ok;
}

int cmd_process(const fs::path& input, const fs::path& cal_path, const std::optional<fs::path>& config_path,
                const fs::path& out_dir, bool lenient, std::ostream& err) {
    std::vector<std::string> warnings;
    const auto popts = config_path ? config::parse_pipeline(config::read_text(*config_path), config_path->string(),
                                                            parse_options(lenient, warnings))
                                   : PipelineOptions{};
    const auto cal =
        config::parse_calibration(config::read_text(cal_path), cal_path.string(), parse_options(lenient, warnings));
    flush_warnings(warnings);

    auto ts = load_timestream(input, popts.load);
    if (ts.cadence_warning) logger()->warn("sample cadence differs from the nominal rate by more than 10%");
    const auto r = run_pipeline(std::move(ts), cal, popts);
    for (const auto& n : r.calibrated.notices) logger()->warn("{}", n);
    if (!r.demod.diagnostic.empty()) logger()->warn("{}", r.demod.diagnostic);

    fs::create_directories(out_dir);
    io::write_atomic(out_dir / "cycles.csv", [&](std::ostream& os) { write_cycles_csv(os, r.calibrated); });
    io::write_atomic(out_dir / "glitches.csv",
                     [&](std::ostream& os) { write_glitch_csv(os, r.deglitched.stream, r.deglitched.report); });

    const auto& s = r.deglitched.stream;
    json rep = stamp();
    rep["input"] = input.filename().string();
    rep["samples"] = s.size();
    rep["sample_rate_hz"] = s.sample_rate;
    rep["cadence_warning"] = s.cadence_warning;
    rep["masked_fraction"] = r.deglitched.report.masked_fraction;
    rep["glitch_intervals"] = r.deglitched.report.intervals.size();
    rep["flagged_samples"] = r.deglitched.report.flagged_samples;
    rep["mad_fallback"] = r.deglitched.report.mad_fallback;
    rep["complete_cycles"] = r.demod.complete_cycles;
    rep["kept_cycles"] = r.demod.cycles.size();
    rep["dropped_cycles"] = r.demod.dropped_cycles;
    rep["cycle_rate_hz"] = opt_num(r.quality.cycle_rate_hz);
    rep["diagnostic"] = r.demod.diagnostic.empty() ? json(nullptr) : json(r.demod.diagnostic);
    rep["notices"] = r.calibrated.notices;
    json chans = json::array();
    for (const auto& c : r.quality.channels)
        chans.push_back({{"channel", c.channel},
                         {"column", channel_column(c.channel)},
                         {"enabled", c.enabled},
                         {"cycles", c.cycles},
                         {"cycle_yield", c.cycle_yield},
                         {"masked_fraction", c.masked_fraction},
                         {"net_mk_rts", opt_num(c.net_mk)},
                         {"mean_tb_k", opt_num(c.mean_tb)}});
    rep["channels"] = chans;
    write_json(out_dir / "report.json", rep);
    if (r.any_cycles()) return ok;
    err << "no calibrated cycles: " << r.demod.diagnostic << '\n';
    return no_cycles;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Filter-bank design, noise budgets and flight-data reduction for the CubeSounder radiometers",
                 "cubesounder"};
    app.set_version_flag("--version", version());
    app.require_subcommand(1);
    bool lenient = false;
    app.add_flag("--lenient", lenient, "Warn about unknown config keys instead of failing");

    fs::path band, design_out;
    bool optimize = false;
    auto* design = app.add_subcommand("design", "Synthesize channels, assemble the bank, export sweeps");
    design->add_option("--band", band, "Band config (JSON)")->required();
    design->add_option("--out", design_out, "Output directory")->required();
    design->add_flag("--optimize", optimize, "Optimize inter-channel spacings");

    fs::path chain, budget_out = ".";
    auto* budget = app.add_subcommand("budget", "Per-source noise budget of a radiometer chain");
    budget->add_option("--chain", chain, "Chain config (JSON)")->required();
    budget->add_option("--out", budget_out, "Output directory for budget.csv");

    fs::path scenario, sim_out;
    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic flight timestream with truth sidecar");
    simulate->add_option("--scenario", scenario, "Scenario config (JSON)")->required();
    simulate->add_option("--out", sim_out, "Output directory")->required();

    fs::path input, cal, proc_out;
    std::optional<fs::path> proc_cfg;
    auto* process = app.add_subcommand("process", "Deglitch, demodulate and calibrate a flight timestream");
    process->add_option("--input", input, "Timestream CSV")->required();
    process->add_option("--cal", cal, "Calibration table (JSON)")->required();
    process->add_option("--config", proc_cfg, "Pipeline config (JSON)");
    process->add_option("--out", proc_out, "Output directory")->required();

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? ok : failure;
    }

    try {
        if (*design) return cmd_design(band, design_out, optimize, lenient);
        if (*budget) return cmd_budget(chain, budget_out, lenient, out);
        if (*simulate) return cmd_simulate(scenario, sim_out, lenient);
        if (*process) return cmd_process(input, cal, proc_cfg, proc_out, lenient, err);
    } catch (const config::ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return failure;
    } catch (const TimestreamFormatError& e) {
        err << "input error: " << input.string() << ": " << e.what() << '\n';
        return failure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return failure;
    }
    return failure;
}

}  // namespace cubesounder::cli
