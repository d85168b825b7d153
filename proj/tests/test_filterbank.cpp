#include <doctest.h>

#include <random>

#include "cubesounder/filterbank.hpp"
#include "support/oracles.hpp"

using namespace cubesounder;

namespace {

oracle::Channel oracle_channel(const ChannelDesign& d) {
    oracle::Channel c;
    c.a = d.main_guide.width_a;
    c.b = d.main_guide.height_b;
    c.a_narrow = oracle::narrow_width(d.f0_target);
    c.l_narrow = d.narrow_length;
    c.l_cavity = d.cavity_length;
    c.sigma = d.main_guide.conductivity;
    c.pec = d.main_guide.perfect_conductor;
    return c;
}

oracle::Passband oracle_sweep(const ChannelDesign& d, double span_factor = 3.0, std::size_t n = 24001) {
    const auto c = oracle_channel(d);
    const double lo = d.f0_target - span_factor * d.hpbw_target;
    const double hi = d.f0_target + span_factor * d.hpbw_target;
    return oracle::dense_passband([&](double f) { return std::norm(oracle::channel_s21(c, f)); }, lo, hi, n);
}

const ChannelDesign& g_band_design() {
    static const ChannelDesign d = synthesize_channel(183.31e9, 2e9, WaveguideSpec::wr5());
    return d;
}

ChannelDesign lossless_design(double f0, double bw) {
    return synthesize_channel(f0, bw, WaveguideSpec::wr5().lossless());
}

}  // namespace

TEST_CASE("channel geometry rules") {
    const auto d = make_channel(183.31e9, 2e9, WaveguideSpec::wr5(), 4e-4, 6e-4);
    CHECK(std::abs(te10_cutoff(d.narrow_guide) / (1.5 * 183.31e9) - 1.0) < 1e-6);
    CHECK(d.narrow_guide.height_b == d.main_guide.height_b);
    CHECK(d.cavity_guide.width_a == d.main_guide.width_a);
    CHECK_FALSE(d.converged());
    CHECK_THROWS_AS(make_channel(183.31e9, 2e9, WaveguideSpec::wr5(), -1e-4, 6e-4), std::invalid_argument);
    CHECK_THROWS_AS(make_channel(183.31e9, 2e9, WaveguideSpec::wr5(), 1e-4, 0.0), std::invalid_argument);
}

TEST_CASE("channel transmission agrees with the transfer-matrix oracle") {
    const auto d = make_channel(183.31e9, 2e9, WaveguideSpec::wr5(), 4.7e-4, 6.4e-4);
    const auto c = oracle_channel(d);
    const auto grid = FrequencyGrid::linspace(175e9, 192e9, 171);
    const auto s = channel_twoport(d, grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const auto ref = oracle::channel_s21(c, grid[k]);
        CHECK(std::abs(s(k, 1, 0) - ref) <= 1e-10 * std::abs(ref) + 1e-14);
        CHECK(std::abs(s(k, 0, 0) - oracle::channel_s11(c, grid[k])) <= 1e-10);
        CHECK(channel_power(d, grid[k]) == doctest::Approx(std::norm(ref)).epsilon(1e-10));
    }
}

TEST_CASE("perfect-conductor channel is lossless, zero coupling length is all-pass") {
    const auto grid = FrequencyGrid::linspace(175e9, 192e9, 101);
    const auto pec = WaveguideSpec::wr5().lossless();
    const auto d = make_channel(183.31e9, 2e9, pec, 4.7e-4, 6.4e-4);
    const auto s = channel_twoport(d, grid);
    for (std::size_t k = 0; k < grid.size(); ++k)
        CHECK(std::abs(std::norm(s(k, 0, 0)) + std::norm(s(k, 1, 0)) - 1.0) <= 1e-9);

    const auto allpass = channel_twoport(make_channel(183.31e9, 2e9, pec, 0.0, 6.4e-4), grid);
    for (std::size_t k = 0; k < grid.size(); ++k) CHECK(std::abs(std::abs(allpass(k, 1, 0)) - 1.0) <= 1e-12);
}

TEST_CASE("monotone knobs over ladders of designs") {
    const auto main = WaveguideSpec::wr5();
    const auto& base = g_band_design();

    double prev_bw = 1e300;
    for (int i = 0; i < 6; ++i) {
        const double ln = base.narrow_length * (0.85 + 0.06 * i);
        const auto m = measure_channel(make_channel(183.31e9, 2e9, main, ln, base.cavity_length));
        REQUIRE(m.has_value());
        REQUIRE(m->hpbw.has_value());
        CHECK(*m->hpbw < prev_bw);
        prev_bw = *m->hpbw;
    }

    double prev_f = 1e300;
    for (int i = 0; i < 6; ++i) {
        const double lc = base.cavity_length * (0.96 + 0.016 * i);
        const auto m = measure_channel(make_channel(183.31e9, 2e9, main, base.narrow_length, lc), 183.31e9);
        REQUIRE(m.has_value());
        CHECK(m->f_peak < prev_f);
        prev_f = m->f_peak;
    }
}

TEST_CASE("G-band synthesis meets targets under the dense-sweep oracle") {
    const auto& d = g_band_design();
    REQUIRE(d.converged());
    CHECK(std::abs(*d.achieved_f0 - 183.31e9) <= 18e6);
    CHECK(std::abs(*d.achieved_hpbw - 2e9) <= 100e6);

    const auto ref = oracle_sweep(d);
    REQUIRE(ref.hpbw.has_value());
    CHECK(std::abs(ref.f_peak - 183.31e9) <= 183.31e9 * 1e-4);
    CHECK(std::abs(*ref.hpbw - 2e9) <= 0.05 * 2e9);
    CHECK(std::abs(ref.f_peak - *d.achieved_f0) <= 1e6);
    CHECK(std::abs(*ref.hpbw - *d.achieved_hpbw) <= 2e6);
}

TEST_CASE("V-band synthesis meets targets under the dense-sweep oracle") {
    const auto d = synthesize_channel(52.8e9, 0.5e9, WaveguideSpec::wr15());
    REQUIRE(d.converged());
    const auto ref = oracle_sweep(d);
    REQUIRE(ref.hpbw.has_value());
    CHECK(std::abs(ref.f_peak - 52.8e9) <= 52.8e9 * 1e-4);
    CHECK(std::abs(*ref.hpbw - 0.5e9) <= 0.05 * 0.5e9);
}

TEST_CASE("synthesis errors and determinism") {
    CHECK_THROWS_AS(synthesize_channel(183.31e9, 183.31e9, WaveguideSpec::wr5()), UnachievableBandwidthError);
    CHECK_THROWS_AS(synthesize_channel(183.31e9, 0.0, WaveguideSpec::wr5()), std::invalid_argument);
    CHECK_THROWS_AS(synthesize_channel(300e9, 2e9, WaveguideSpec::wr5()), std::invalid_argument);

    SynthesisTolerances tight;
    tight.max_iterations = 1;
    CHECK_THROWS_AS(synthesize_channel(183.31e9, 2e9, WaveguideSpec::wr5(), tight), SynthesisError);

    const auto a = synthesize_channel(183.31e9, 2e9, WaveguideSpec::wr5());
    const auto& b = g_band_design();
    CHECK(a.cavity_length == b.cavity_length);
    CHECK(a.narrow_length == b.narrow_length);
    CHECK(a.narrow_guide.width_a == b.narrow_guide.width_a);
}

TEST_CASE("loss lowers peak transmission, more so for narrow channels") {
    const auto& lossy = g_band_design();
    const auto pec = lossless_design(183.31e9, 2e9);
    const auto narrow = synthesize_channel(183.31e9, 0.5e9, WaveguideSpec::wr5());
    const double p_lossy = measure_channel(lossy)->peak_power;
    const double p_pec = measure_channel(pec)->peak_power;
    const double p_narrow = measure_channel(narrow)->peak_power;
    CHECK(p_lossy < p_pec);
    CHECK(p_narrow < p_lossy);
    CHECK(p_pec == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("three-port: reciprocity, off-resonance through power") {
    const auto d = lossless_design(183.31e9, 2e9);
    const auto grid = FrequencyGrid::linspace(160e9, 205e9, 91);
    const auto s = channel_threeport(d, grid);
    CHECK(validate(s, NetworkProperty::reciprocal, 1e-12).passed);
    CHECK(validate(s, NetworkProperty::lossless, 1e-9).passed);
    // 160 GHz is far below the channel: the tap arm reflects almost totally.
    CHECK(std::norm(s(0, 1, 0)) >= 0.3);

    const Eigen::Matrix3cd tee = shunt_tee();
    CHECK(std::abs(tee(0, 0) - cplx(-1.0 / 3.0)) < 1e-15);
    CHECK(std::abs(tee(0, 1) - cplx(2.0 / 3.0)) < 1e-15);
}

TEST_CASE("tee with a shorted stub matches the brute-force solve") {
    const auto grid = FrequencyGrid::linspace(170e9, 196e9, 53);
    const auto pec = WaveguideSpec::wr5().lossless();
    const SMatrix tee(grid, std::vector<Eigen::MatrixXcd>(grid.size(), Eigen::MatrixXcd(shunt_tee())));
    const double quarter = guided_wavelength(pec, 183.31e9) / 4.0;
    const auto stub = section_smatrix(pec, quarter, grid);
    const SMatrix shorted(grid, std::vector<Eigen::MatrixXcd>(grid.size(), Eigen::MatrixXcd::Constant(1, 1, -1.0)));

    const auto two = cascade_pair(cascade_pair(tee, stub, 2, 0), shorted, 2, 0);
    ConnectionGraph g;
    g.elements = {tee, stub, shorted};
    g.joints = {{{0, 2}, {1, 0}}, {{1, 1}, {2, 0}}};
    g.external_ports = {{0, 0}, {0, 1}};
    CHECK(oracle::max_entry_diff(two, brute_force_smatrix(g)) <= 1e-12);
    // Quarter-wave short is an open at the junction: full transmission at the design frequency.
    const auto k = static_cast<std::size_t>(std::min_element(grid.points().begin(), grid.points().end(),
                                                             [](double x, double y) {
                                                                 return std::abs(x - 183.31e9) < std::abs(y - 183.31e9);
                                                             }) -
                                            grid.points().begin());
    CHECK(std::norm(two(k, 1, 0)) > 0.99);
}

TEST_CASE("bank assembly") {
    const auto main = WaveguideSpec::wr5();
    const auto grid = FrequencyGrid::linspace(176e9, 191e9, 64);

    SUBCASE("single channel with zero spacing is the three-port") {
        BankLayout one{{g_band_design()}, {0.0}, main};
        const auto bank = assemble_bank(one, grid);
        CHECK(bank.n_ports() == 3);
        CHECK(oracle::max_entry_diff(bank, channel_threeport(g_band_design(), grid).permuted({0, 2, 1})) <= 1e-12);
        CHECK(bank.port_labels() == std::vector<std::string>{"in", "tap00", "thru"});
    }
    SUBCASE("three-channel bank equals the brute-force solve") {
        std::vector<ChannelDesign> chans;
        for (double f0 : {186.31e9, 183.31e9, 180.31e9}) chans.push_back(make_channel(f0, 2e9, main, 4.7e-4, 6.4e-4));
        const BankLayout layout{chans, {1.3e-3, 2.1e-3, 2.9e-3}, main};
        const auto chain = bank_chain(layout, grid);
        ConnectionGraph g;
        for (const auto& l : chain) g.elements.push_back(l.element);
        g.external_ports.push_back({0, chain[0].in_port});
        for (std::size_t e = 0; e < chain.size(); ++e) {
            for (std::size_t p = 0; p < chain[e].element.n_ports(); ++p)
                if (p != chain[e].in_port && p != chain[e].out_port) g.external_ports.push_back({e, p});
            if (e > 0) g.joints.push_back({{e - 1, chain[e - 1].out_port}, {e, chain[e].in_port}});
        }
        g.external_ports.push_back({chain.size() - 1, chain.back().out_port});
        CHECK(oracle::max_entry_diff(assemble_bank(layout, grid), brute_force_smatrix(g)) <= 1e-10);
    }
    SUBCASE("layout validation") {
        BankLayout wrong{{make_channel(180e9, 2e9, main, 4e-4, 6e-4), make_channel(185e9, 2e9, main, 4e-4, 6e-4)},
                         {1e-3, 1e-3},
                         main};
        CHECK_THROWS_AS(wrong.validate(), std::invalid_argument);
        sort_channels_descending(wrong.channels);
        CHECK_NOTHROW(wrong.validate());
        wrong.spacings = {1e-3};
        CHECK_THROWS_AS(wrong.validate(), std::invalid_argument);
        wrong.spacings = {1e-3, -1e-3};
        CHECK_THROWS_AS(wrong.validate(), std::invalid_argument);
    }
}

TEST_CASE("perfect-conductor five-channel bank conserves energy") {
    std::vector<ChannelDesign> chans;
    for (double f0 : {189.31e9, 186.31e9, 183.31e9, 180.31e9, 177.31e9}) chans.push_back(lossless_design(f0, 2e9));
    const auto pec = WaveguideSpec::wr5().lossless();
    const auto layout = layout_from_multipliers(chans, pec, std::vector<double>(5, 1.0), band_center(chans));
    const auto grid = FrequencyGrid::linspace(172e9, 194e9, 441);
    const auto bank = assemble_bank(layout, grid);
    CHECK(bank.n_ports() == 7);
    double worst = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k)
        for (Eigen::Index j = 0; j < 7; ++j) worst = std::max(worst, std::abs(bank.at(k).col(j).squaredNorm() - 1.0));
    CHECK(worst <= 1e-9);
}

TEST_CASE("passband metrics") {
    SUBCASE("Lorentzian width recovered within one grid step") {
        const auto grid = FrequencyGrid::linspace(90e9, 110e9, 401);
        std::vector<double> p(grid.size());
        for (std::size_t k = 0; k < grid.size(); ++k) p[k] = 0.8 * oracle::lorentzian(grid[k], 100.013e9, 1.7e9);
        const auto m = passband_metrics(p, grid);
        const double step = grid[1] - grid[0];
        CHECK(std::abs(m.hpbw - 1.7e9) <= step);
        CHECK(std::abs(m.f_peak - 100.013e9) <= step);
        CHECK(m.peak_efficiency == doctest::Approx(0.8).epsilon(1e-3));
    }
    SUBCASE("flat response has no crossing") {
        const auto grid = FrequencyGrid::linspace(1e9, 2e9, 11);
        std::vector<double> p(grid.size(), 1.0);
        CHECK_THROWS_AS(passband_metrics(p, grid), BandEdgeError);
    }
    SUBCASE("single perfect-conductor channel against the tee oracle") {
        const auto d = lossless_design(183.31e9, 2e9);
        const auto grid = FrequencyGrid::linspace(178e9, 189e9, 2201);
        const BankLayout one{{d}, {0.0}, WaveguideSpec::wr5().lossless()};
        const auto m = passband_metrics(assemble_bank(one, grid), 0, grid);
        const auto c = oracle_channel(d);
        const auto ref = oracle::dense_passband([&](double f) { return oracle::single_tap_power(c, f); }, 178e9, 189e9, 22001);
        CHECK(m.peak_efficiency <= 0.5 + 1e-9);
        CHECK(m.peak_efficiency == doctest::Approx(ref.peak).epsilon(1e-4));
        CHECK(std::abs(m.f_peak - ref.f_peak) <= 5e6);
        REQUIRE(ref.hpbw.has_value());
        CHECK(std::abs(m.hpbw - *ref.hpbw) <= 5e6);
    }
}

TEST_CASE("spacing optimization") {
    const auto main = WaveguideSpec::wr5();

    SUBCASE("one channel takes the smallest multiplier") {
        const auto r = optimize_spacings({g_band_design()}, main);
        CHECK(r.multipliers == std::vector<double>{1.0});
        CHECK(r.objective >= r.initial_objective);
    }
    SUBCASE("two identical channels: exhaustive search agrees") {
        const auto d = g_band_design();
        const std::vector<ChannelDesign> chans{d, d};
        SpacingOptions opts;
        const auto r = optimize_spacings(chans, main, opts);

        const double ref_f = band_center(chans);
        double best = -1.0, best_len = 0.0;
        std::vector<double> best_m;
        for (double m1 : opts.multipliers)
            for (double m2 : opts.multipliers) {
                const std::vector<double> m{m1, m2};
                const double obj = mean_tap_power(layout_from_multipliers(chans, main, m, ref_f));
                const double len = m1 + m2;
                if (obj > best * (1.0 + opts.tie_tolerance) ||
                    (std::abs(obj - best) <= opts.tie_tolerance * std::abs(best) && len < best_len)) {
                    best = obj;
                    best_len = len;
                    best_m = m;
                }
            }
        CHECK(r.multipliers == best_m);
        CHECK(r.objective == doctest::Approx(best).epsilon(1e-12));
    }
    SUBCASE("five-channel G-band objective does not decrease") {
        std::vector<ChannelDesign> chans;
        for (double f0 : {177.31e9, 180.31e9, 183.31e9, 186.31e9, 189.31e9})
            chans.push_back(synthesize_channel(f0, 2e9, main));
        const auto r = optimize_spacings(chans, main);
        CHECK(r.objective >= r.initial_objective);
        CHECK(r.layout.channels.front().f0_target == 189.31e9);
        CHECK(r.multipliers.size() == 5);
    }
    SUBCASE("empty candidate set") {
        SpacingOptions opts;
        opts.multipliers.clear();
        CHECK_THROWS_AS(optimize_spacings({g_band_design()}, main, opts), std::invalid_argument);
    }
}
