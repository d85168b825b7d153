#include "cubesounder/config.hpp"

#include <fmt/format.h>

#include <fstream>
#include <set>
#include <sstream>

namespace cubesounder::config {

using json = nlohmann::ordered_json;

ConfigError::ConfigError(const std::string& source, std::optional<std::size_t> line, const std::string& what)
    : std::runtime_error(line ? fmt::format("{}:{}: {}", source, *line, what) : fmt::format("{}: {}", source, what)),
      line_(line) {}

namespace {

struct Context {
    const std::string& text;
    const std::string& source;
    const ParseOptions& opts;

    // Finds the line of a key by walking the quoted path components in
    // document order. Good enough for configs without repeated key names
    // in sibling scopes.
    std::optional<std::size_t> locate(const std::vector<std::string>& keys) const {
        std::size_t pos = 0;
        for (const auto& k : keys) {
            if (k.empty()) continue;
            const auto hit = text.find('"' + k + '"', pos);
            if (hit == std::string::npos) return std::nullopt;
            pos = hit + 1;
        }
        if (pos == 0) return std::nullopt;
        return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
    }

    [[noreturn]] void fail(const std::vector<std::string>& keys, const std::string& what) const {
        throw ConfigError(source, locate(keys), what);
    }
};

class Node {
  public:
    Node(const Context& ctx, const json& j, std::vector<std::string> keys, std::string path)
        : ctx_(ctx), j_(j), keys_(std::move(keys)), path_(std::move(path)) {
        if (!j_.is_object()) ctx_.fail(keys_, fmt::format("'{}' must be an object", display()));
    }

    bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    double num(const std::string& key) {
        const auto& v = take(key);
        if (!v.is_number()) fail(key, "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) fail(key, "expected a finite number");
        return d;
    }
    double num(const std::string& key, double fallback) { return has(key) ? num(key) : (mark(key), fallback); }

    std::size_t count(const std::string& key) {
        const auto& v = take(key);
        if (!v.is_number_unsigned()) fail(key, "expected a non-negative integer");
        return v.get<std::size_t>();
    }
    std::size_t count(const std::string& key, std::size_t fallback) {
        return has(key) ? count(key) : (mark(key), fallback);
    }

    bool flag(const std::string& key, bool fallback) {
        if (!has(key)) return mark(key), fallback;
        const auto& v = take(key);
        if (!v.is_boolean()) fail(key, "expected true or false");
        return v.get<bool>();
    }

    std::string str(const std::string& key) {
        const auto& v = take(key);
        if (!v.is_string()) fail(key, "expected a string");
        return v.get<std::string>();
    }
    std::string str(const std::string& key, const std::string& fallback) {
        return has(key) ? str(key) : (mark(key), fallback);
    }

    std::vector<double> numbers(const std::string& key, bool scalar_ok = false) {
        const auto& v = take(key);
        if (scalar_ok && v.is_number()) return {v.get<double>()};
        if (!v.is_array()) fail(key, "expected an array of numbers");
        std::vector<double> out;
        for (const auto& x : v) {
            if (!x.is_number()) fail(key, "expected an array of numbers");
            out.push_back(x.get<double>());
        }
        return out;
    }

    Node child(const std::string& key) {
        const auto& v = take(key);
        return Node(ctx_, v, extend(key), sub(key));
    }

    std::vector<Node> children(const std::string& key) {
        const auto& v = take(key);
        if (!v.is_array()) fail(key, "expected an array of objects");
        std::vector<Node> out;
        for (std::size_t i = 0; i < v.size(); ++i) out.emplace_back(ctx_, v[i], extend(key), fmt::format("{}[{}]", sub(key), i));
        return out;
    }

    const json& raw(const std::string& key) { return take(key); }

    void mark(const std::string& key) { used_.insert(key); }

    /// Unknown keys: error in strict mode, warning otherwise.
    void finish() {
        for (const auto& [key, value] : j_.items()) {
            if (used_.count(key)) continue;
            const auto msg = fmt::format("unknown key '{}'", sub(key));
            if (!ctx_.opts.lenient) ctx_.fail(extend(key), msg);
            if (ctx_.opts.warnings) {
                const auto line = ctx_.locate(extend(key));
                ctx_.opts.warnings->push_back(line ? fmt::format("{}:{}: {} (ignored)", ctx_.source, *line, msg)
                                                   : fmt::format("{}: {} (ignored)", ctx_.source, msg));
            }
        }
    }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        ctx_.fail(extend(key), fmt::format("'{}': {}", sub(key), what));
    }
    [[noreturn]] void fail(const std::string& what) const { ctx_.fail(keys_, what); }

  private:
    const json& take(const std::string& key) {
        used_.insert(key);
        if (!j_.contains(key)) ctx_.fail(keys_, fmt::format("missing required key '{}'", sub(key)));
        return j_.at(key);
    }
    std::vector<std::string> extend(const std::string& key) const {
        auto k = keys_;
        k.push_back(key);
        return k;
    }
    std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    std::string display() const { return path_.empty() ? "<root>" : path_; }

    const Context& ctx_;
    const json& j_;
    std::vector<std::string> keys_;
    std::string path_;
    std::set<std::string> used_;
};

json parse_json(const std::string& text, const std::string& source) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        // byte offset -> line
        const auto upto = std::min<std::size_t>(e.byte, text.size());
        const auto line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n'));
        throw ConfigError(source, line, "malformed JSON");
    }
}

void check_version(Node& root) {
    if (!root.has("schema_version")) root.fail("missing required key 'schema_version'");
    const auto& v = root.raw("schema_version");
    if (!v.is_number_integer() || v.get<long long>() != kSchemaVersion)
        root.fail("schema_version", fmt::format("unsupported schema version (expected {})", kSchemaVersion));
    root.mark("cubesounder_version");
}

template <class F>
auto guarded(const Node& n, F&& f) {
    try {
        return f();
    } catch (const std::invalid_argument& e) {
        n.fail(e.what());
    }
}

WaveguideSpec parse_guide(Node& parent, const std::string& key) {
    const auto& v = parent.raw(key);
    if (v.is_string()) {
        const auto name = v.get<std::string>();
        if (name == "WR-5" || name == "WR5") return WaveguideSpec::wr5();
        if (name == "WR-15" || name == "WR15") return WaveguideSpec::wr15();
        parent.fail(key, fmt::format("unknown waveguide '{}' (use WR-5, WR-15 or an object)", name));
    }
    Node g = parent.child(key);
    WaveguideSpec w;
    w.name = g.str("name", "custom");
    w.width_a = g.num("width_mm") * 1e-3;
    w.height_b = g.num("height_mm") * 1e-3;
    w.conductivity = g.num("conductivity_s_per_m", kAluminumConductivity);
    w.perfect_conductor = g.flag("perfect_conductor", false);
    g.finish();
    guarded(g, [&] { w.validate(); return 0; });
    return w;
}

RadiometerChain parse_chain_node(Node& c) {
    RadiometerChain ch;
    const auto preset = c.str("preset", "");
    if (preset == "G") ch = RadiometerChain::g_band();
    else if (preset == "V") ch = RadiometerChain::v_band();
    else if (!preset.empty()) c.fail("preset", fmt::format("unknown preset '{}' (use G or V)", preset));

    ch.band = c.str("band", ch.band);
    ch.rf_gain_db = c.num("rf_gain_db", ch.rf_gain_db);
    ch.noise_figure_db = c.num("noise_figure_db", ch.noise_figure_db);
    ch.front_loss_db = c.num("front_loss_db", ch.front_loss_db);
    if (c.has("optical_efficiency")) ch.optical_efficiency = c.numbers("optical_efficiency", true);
    else c.mark("optical_efficiency");
    if (c.has("bandwidth_ghz")) {
        ch.bandwidth_hz = c.numbers("bandwidth_ghz", true);
        for (double& b : ch.bandwidth_hz) b *= 1e9;
    } else {
        c.mark("bandwidth_ghz");
    }
    ch.detector_responsivity = c.num("detector_responsivity_v_per_w", ch.detector_responsivity);
    ch.detector_nep = c.num("detector_nep_w_per_rthz", ch.detector_nep);
    ch.audio_gain_db = c.num("audio_gain_db", ch.audio_gain_db);
    ch.audio_input_noise = c.num("audio_input_noise_v_per_rthz", ch.audio_input_noise);
    ch.adc_bits = static_cast<int>(c.count("adc_bits", static_cast<std::size_t>(ch.adc_bits)));
    ch.adc_fullscale = c.num("adc_fullscale_v", ch.adc_fullscale);
    ch.adc_sample_rate_hz = c.num("adc_sample_rate_hz", ch.adc_sample_rate_hz);
    ch.dicke_factor = c.num("dicke_factor", ch.dicke_factor);
    c.finish();
    guarded(c, [&] { ch.validate(); return 0; });
    return ch;
}

}  // namespace

std::string read_text(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError(path.string(), std::nullopt, "cannot open file");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

BandConfig parse_band(const std::string& text, const std::string& source, const ParseOptions& opts) {
    const json j = parse_json(text, source);
    const Context ctx{text, source, opts};
    Node root(ctx, j, {}, "");
    check_version(root);

    BandConfig b;
    b.band = root.str("band");
    b.main_guide = parse_guide(root, "main_guide");
    for (auto& ch : root.children("channels")) {
        ChannelRequest r;
        r.f0_hz = ch.num("f0_ghz") * 1e9;
        r.hpbw_hz = ch.num("hpbw_ghz") * 1e9;
        ch.finish();
        if (!(r.f0_hz > 0.0) || !(r.hpbw_hz > 0.0)) ch.fail("f0_ghz and hpbw_ghz must be positive");
        b.channels.push_back(r);
    }
    if (b.channels.empty()) root.fail("channels", "channel list is empty");

    if (root.has("tolerances")) {
        Node t = root.child("tolerances");
        b.tolerances.freq_rel = t.num("freq_rel", b.tolerances.freq_rel);
        b.tolerances.bw_rel = t.num("bw_rel", b.tolerances.bw_rel);
        b.tolerances.max_iterations =
            static_cast<int>(t.count("max_iterations", static_cast<std::size_t>(b.tolerances.max_iterations)));
        t.finish();
    } else {
        root.mark("tolerances");
    }
    if (root.has("spacing")) {
        Node s = root.child("spacing");
        if (s.has("multipliers")) b.spacing.multipliers = s.numbers("multipliers");
        else s.mark("multipliers");
        if (s.has("reference_frequency_ghz")) b.spacing.reference_frequency_hz = s.num("reference_frequency_ghz") * 1e9;
        else s.mark("reference_frequency_ghz");
        b.spacing.max_sweeps = static_cast<int>(s.count("max_sweeps", static_cast<std::size_t>(b.spacing.max_sweeps)));
        s.finish();
        if (b.spacing.multipliers.empty()) s.fail("multipliers", "must not be empty");
        for (double m : b.spacing.multipliers)
            if (!(m > 0.0)) s.fail("multipliers", "spacing multipliers must be positive");
    } else {
        root.mark("spacing");
    }
    if (root.has("sweep")) {
        Node s = root.child("sweep");
        if (s.has("start_ghz")) b.sweep.start_hz = s.num("start_ghz") * 1e9;
        else s.mark("start_ghz");
        if (s.has("stop_ghz")) b.sweep.stop_hz = s.num("stop_ghz") * 1e9;
        else s.mark("stop_ghz");
        b.sweep.points = s.count("points", b.sweep.points);
        s.finish();
        if (b.sweep.points < 3) s.fail("points", "need at least 3 sweep points");
        if (b.sweep.start_hz && b.sweep.stop_hz && !(*b.sweep.stop_hz > *b.sweep.start_hz))
            s.fail("stop_ghz", "stop must exceed start");
    } else {
        root.mark("sweep");
    }
    root.finish();
    return b;
}

BudgetConfig parse_chain(const std::string& text, const std::string& source, const ParseOptions& opts) {
    const json j = parse_json(text, source);
    const Context ctx{text, source, opts};
    Node root(ctx, j, {}, "");
    check_version(root);
    BudgetConfig b;
    b.scene_temperature_k = root.num("scene_temperature_k", b.scene_temperature_k);
    Node c = root.child("chain");
    b.chain = parse_chain_node(c);
    root.finish();
    if (!(b.scene_temperature_k >= 0.0)) root.fail("scene_temperature_k", "must be >= 0 K");
    return b;
}

synth::Scenario parse_scenario(const std::string& text, const std::string& source, const ParseOptions& opts) {
    const json j = parse_json(text, source);
    const Context ctx{text, source, opts};
    Node root(ctx, j, {}, "");
    check_version(root);

    synth::Scenario s;
    s.duration_s = root.num("duration_s");
    s.sample_rate_hz = root.num("sample_rate_hz", s.sample_rate_hz);
    s.chop_rate_hz = root.num("chop_rate_hz", s.chop_rate_hz);
    s.start_unix_s = root.num("start_unix_s", s.start_unix_s);
    s.n_channels = root.count("n_channels", 0);
    s.t_ref_k = root.num("t_ref_k", s.t_ref_k);
    s.t_ref_drift_k_per_s = root.num("t_ref_drift_k_per_s", 0.0);
    s.noise_net_mk = root.num("noise_net_mk", 0.0);
    s.drift_v_per_s = root.num("drift_v_per_s", 0.0);
    s.seed = root.count("seed", 0);

    Node sc = root.child("scene");
    const auto kind = sc.str("kind");
    if (kind == "constant") {
        s.scene = synth::SceneProfile::constant(sc.num("kelvin"));
    } else if (kind == "ramp") {
        const double t0 = sc.num("start_k");
        const double rate = sc.num("rate_k_per_s");
        s.scene = synth::SceneProfile::ramp(t0, rate, s.duration_s);
    } else if (kind == "piecewise") {
        s.scene = synth::SceneProfile::piecewise(sc.numbers("times_s"), sc.numbers("kelvin"));
    } else {
        sc.fail("kind", fmt::format("unknown scene kind '{}' (constant, ramp, piecewise)", kind));
    }
    sc.finish();

    Node ch = root.child("chain");
    s.chain = parse_chain_node(ch);

    if (root.has("glitches")) {
        Node g = root.child("glitches");
        synth::GlitchTrain gt;
        gt.period_s = g.num("period_s", gt.period_s);
        gt.width = g.count("width", gt.width);
        if (g.has("depth_v")) gt.depth_v = g.num("depth_v");
        else g.mark("depth_v");
        gt.depth_sigma = g.num("depth_sigma", gt.depth_sigma);
        gt.first_s = g.num("first_s", gt.first_s);
        g.finish();
        s.glitches = gt;
    } else {
        root.mark("glitches");
    }
    root.finish();
    guarded(root, [&] { s.validate(); return 0; });
    return s;
}

PipelineOptions parse_pipeline(const std::string& text, const std::string& source, const ParseOptions& opts) {
    const json j = parse_json(text, source);
    const Context ctx{text, source, opts};
    Node root(ctx, j, {}, "");
    check_version(root);

    PipelineOptions p;
    if (root.has("sample_rate_hz")) {
        p.load.sample_rate_hz = root.num("sample_rate_hz");
        if (!(*p.load.sample_rate_hz > 0.0)) root.fail("sample_rate_hz", "must be positive");
    } else {
        root.mark("sample_rate_hz");
    }
    if (root.has("chopper")) {
        Node c = root.child("chopper");
        p.load.chopper.threshold = c.num("threshold", p.load.chopper.threshold);
        p.load.chopper.scene_above_threshold = c.flag("scene_above_threshold", p.load.chopper.scene_above_threshold);
        c.finish();
    } else {
        root.mark("chopper");
    }
    if (root.has("deglitch")) {
        Node d = root.child("deglitch");
        p.deglitch.detector = d.str("detector", p.deglitch.detector);
        if (p.deglitch.detector != "summed_median")
            d.fail("detector", fmt::format("unknown detector '{}' (summed_median)", p.deglitch.detector));
        p.deglitch.k = d.num("k", p.deglitch.k);
        if (!(p.deglitch.k > 0.0)) d.fail("k", "must be positive");
        p.deglitch.buffer = d.count("buffer", p.deglitch.buffer);
        const auto base = d.str("baseline", "per_phase");
        if (base == "per_phase") p.deglitch.baseline = DeglitchBaseline::per_phase;
        else if (base == "global") p.deglitch.baseline = DeglitchBaseline::global;
        else d.fail("baseline", fmt::format("unknown baseline '{}' (per_phase, global)", base));
        p.deglitch.absolute_floor = d.num("absolute_floor_v", p.deglitch.absolute_floor);
        d.finish();
    } else {
        root.mark("deglitch");
    }
    if (root.has("demod")) {
        Node d = root.child("demod");
        p.demod.min_phase_samples = d.count("min_phase_samples", p.demod.min_phase_samples);
        p.demod.max_masked_fraction = d.num("max_masked_fraction", p.demod.max_masked_fraction);
        if (!(p.demod.max_masked_fraction >= 0.0 && p.demod.max_masked_fraction <= 1.0))
            d.fail("max_masked_fraction", "must be in [0, 1]");
        d.finish();
    } else {
        root.mark("demod");
    }
    root.finish();
    return p;
}

CalibrationTable parse_calibration(const std::string& text, const std::string& source, const ParseOptions& opts) {
    const json j = parse_json(text, source);
    const Context ctx{text, source, opts};
    Node root(ctx, j, {}, "");
    check_version(root);

    CalibrationTable c;
    c.band = root.str("band", "");
    c.date = root.str("date", "");
    c.t_hot = root.num("t_hot_k", c.t_hot);
    c.t_cold = root.num("t_cold_k", c.t_cold);
    c.responsivity = root.numbers("responsivity_v");
    if (root.has("enabled")) {
        const auto& e = root.raw("enabled");
        if (!e.is_array() || e.size() != c.responsivity.size())
            root.fail("enabled", "expected one boolean per responsivity entry");
        for (const auto& x : e) {
            if (!x.is_boolean()) root.fail("enabled", "expected booleans");
            c.enabled.push_back(x.get<bool>());
        }
    } else {
        root.mark("enabled");
        c.enabled.assign(c.responsivity.size(), true);
    }
    root.finish();
    if (c.responsivity.empty()) root.fail("responsivity_v", "no channels");
    guarded(root, [&] { c.validate(); return 0; });
    return c;
}

json calibration_to_json(const CalibrationTable& cal) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["band"] = cal.band;
    j["date"] = cal.date;
    j["t_hot_k"] = cal.t_hot;
    j["t_cold_k"] = cal.t_cold;
    j["responsivity_v"] = cal.responsivity;
    json en = json::array();
    for (bool b : cal.enabled) en.push_back(b);
    j["enabled"] = en;
    return j;
}

}  // namespace cubesounder::config
