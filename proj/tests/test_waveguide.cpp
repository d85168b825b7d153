#include <doctest.h>

#include <random>

#include "cubesounder/waveguide.hpp"
#include "support/oracles.hpp"

using namespace cubesounder;

namespace {
// Frozen from oracle::cutoff / oracle::alpha_conductor.
constexpr double kWr15Cutoff = 39874502287.720795;
constexpr double kWr5Cutoff = 115714241932.99368;
constexpr double kWr15Alpha60 = 0.22415009781321102;

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }
}  // namespace

TEST_CASE("te10 cutoff of the standard guides") {
    CHECK(rel(te10_cutoff(WaveguideSpec::wr15()), kWr15Cutoff) < 1e-12);
    CHECK(rel(te10_cutoff(WaveguideSpec::wr5()), kWr5Cutoff) < 1e-12);
    CHECK(te10_cutoff(WaveguideSpec::wr15()) == doctest::Approx(39.875e9).epsilon(1e-4));
    CHECK(te10_cutoff(WaveguideSpec::wr5()) == doctest::Approx(115.71e9).epsilon(1e-4));
    CHECK(rel(kWr15Cutoff, oracle::cutoff(3.7592e-3)) < 1e-15);
}

TEST_CASE("doubling the broad wall halves the cutoff") {
    auto w = WaveguideSpec::wr15();
    const double f1 = te10_cutoff(w);
    w.width_a *= 2.0;
    CHECK(rel(te10_cutoff(w), f1 / 2.0) < 1e-15);
}

TEST_CASE("spec validation") {
    auto w = WaveguideSpec::wr5();
    w.height_b = w.width_a;
    CHECK_THROWS_AS(w.validate(), std::invalid_argument);
    w = WaveguideSpec::wr5();
    w.conductivity = 0.0;
    CHECK_THROWS_AS(w.validate(), std::invalid_argument);
    w.perfect_conductor = true;
    CHECK_NOTHROW(w.validate());
}

TEST_CASE("frequency grid invariants") {
    CHECK_THROWS_AS(FrequencyGrid({1.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(FrequencyGrid({2.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(FrequencyGrid({0.0, 1.0}), std::invalid_argument);
    const auto g = FrequencyGrid::linspace(1e9, 2e9, 11);
    CHECK(g.size() == 11);
    CHECK(g.front() == 1e9);
    CHECK(g.back() == 2e9);
}

TEST_CASE("propagation constant closed forms") {
    const auto w = WaveguideSpec::wr15().lossless();
    const double fc = te10_cutoff(w);

    SUBCASE("lossless at twice cutoff is purely imaginary") {
        const double f = 2.0 * fc;
        const auto g = propagation_constant(w, f);
        CHECK(g.real() == 0.0);
        CHECK(rel(g.imag(), 2.0 * oracle::kPi * f / oracle::kC * std::sqrt(3.0) / 2.0) < 1e-13);
    }
    SUBCASE("half cutoff decays with sqrt(3)") {
        const double f = fc / 2.0;
        const auto g = propagation_constant(w, f);
        CHECK(g.imag() == 0.0);
        CHECK(rel(g.real(), 2.0 * oracle::kPi * f / oracle::kC * std::sqrt(3.0)) < 1e-13);
    }
    SUBCASE("inside the guard band") {
        CHECK_THROWS_AS(propagation_constant(w, fc * (1.0 + 5e-4)), CutoffSingularityError);
        CHECK_THROWS_AS(propagation_constant(w, fc * (1.0 - 5e-4)), CutoffSingularityError);
        CHECK_NOTHROW(propagation_constant(w, fc * (1.0 + 2e-3)));
        try {
            propagation_constant(w, fc);
        } catch (const CutoffSingularityError& e) {
            CHECK(e.frequency_hz() == fc);
        }
    }
}

TEST_CASE("conductor loss of WR-15 aluminum at 60 GHz") {
    const auto g = propagation_constant(WaveguideSpec::wr15(3.5e7), 60e9);
    CHECK(g.real() > 0.1);
    CHECK(g.real() < 1.0);
    CHECK(rel(g.real(), kWr15Alpha60) < 1e-12);
    CHECK(rel(kWr15Alpha60, oracle::alpha_conductor(60e9, 3.7592e-3, 1.8796e-3, 3.5e7)) < 1e-14);
    CHECK(rel(g.imag(), oracle::gamma(60e9, 3.7592e-3, 1.8796e-3, 3.5e7, false).imag()) < 1e-13);
}

TEST_CASE("wave impedance") {
    const auto w = WaveguideSpec::wr5();
    const double fc = te10_cutoff(w);
    CHECK(rel(wave_impedance(w, 1e4 * fc).real(), oracle::kEta0) < 1e-8);
    CHECK(rel(wave_impedance(w, 2.0 * fc).real(), oracle::kEta0 * 2.0 / std::sqrt(3.0)) < 1e-13);
    const auto z = wave_impedance(w, fc / std::sqrt(2.0));
    CHECK(std::abs(z.real()) == 0.0);
    CHECK(rel(z.imag(), oracle::kEta0) < 1e-13);
}

TEST_CASE("section S-matrix") {
    const auto grid = FrequencyGrid::linspace(50e9, 70e9, 9);
    const auto lossless = WaveguideSpec::wr15().lossless();

    SUBCASE("zero length is the identity section") {
        const auto s = section_smatrix(WaveguideSpec::wr15(), 0.0, grid);
        for (std::size_t k = 0; k < grid.size(); ++k) {
            CHECK(s(k, 1, 0) == cplx(1.0, 0.0));
            CHECK(s(k, 0, 0) == cplx(0.0, 0.0));
        }
    }
    SUBCASE("perfect conductor has unit transmission") {
        const auto s = section_smatrix(lossless, 0.0123, grid);
        for (std::size_t k = 0; k < grid.size(); ++k) CHECK(std::abs(std::abs(s(k, 1, 0)) - 1.0) < 1e-15);
    }
    SUBCASE("evanescent decay matches the oracle") {
        const auto below = FrequencyGrid::linspace(20e9, 35e9, 7);
        const double len = 2e-3;
        const auto s = section_smatrix(lossless, len, below);
        for (std::size_t k = 0; k < below.size(); ++k) {
            const double alpha = oracle::gamma(below[k], 3.7592e-3, 1.8796e-3, 0.0, true).real();
            CHECK(rel(std::abs(s(k, 1, 0)), std::exp(-alpha * len)) < 1e-12);
        }
    }
    SUBCASE("negative length rejected") {
        CHECK_THROWS_AS(section_smatrix(lossless, -1e-3, grid), std::invalid_argument);
    }
}

TEST_CASE("property: cutoff scales as 1/a over random guides") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> width(0.5e-3, 30e-3), aspect(0.2, 0.9), scale(0.1, 10.0);
    for (int i = 0; i < 200; ++i) {
        WaveguideSpec w{"r", width(rng), 0.0, 3.5e7, false};
        w.height_b = w.width_a * aspect(rng);
        const double s = scale(rng);
        auto w2 = w;
        w2.width_a *= s;
        w2.height_b *= s;
        CHECK(rel(te10_cutoff(w2) * s, te10_cutoff(w)) < 1e-14);
    }
}

TEST_CASE("property: lossless propagation has unit magnitude for any length") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> fr(1.01, 3.0), len(0.0, 0.5);
    const auto w = WaveguideSpec::wr5().lossless();
    for (int i = 0; i < 200; ++i) {
        const double f = fr(rng) * te10_cutoff(w);
        CHECK(std::abs(std::abs(std::exp(-propagation_constant(w, f) * len(rng))) - 1.0) < 1e-14);
    }
}

TEST_CASE("property: conductor loss decreases with conductivity") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> fr(1.05, 1.95), sig(1e6, 6e7);
    for (int i = 0; i < 200; ++i) {
        const double s1 = sig(rng), s2 = s1 * 1.5;
        const double f = fr(rng) * te10_cutoff(WaveguideSpec::wr15());
        CHECK(propagation_constant(WaveguideSpec::wr15(s2), f).real() <
              propagation_constant(WaveguideSpec::wr15(s1), f).real());
    }
}

TEST_CASE("property: sections compose additively in length") {
    std::mt19937_64 rng(14);
    std::uniform_real_distribution<double> len(0.0, 0.05);
    const auto grid = FrequencyGrid::linspace(45e9, 75e9, 16);
    for (int i = 0; i < 50; ++i) {
        const double l1 = len(rng), l2 = len(rng);
        const auto a = section_smatrix(WaveguideSpec::wr15(), l1, grid);
        const auto b = section_smatrix(WaveguideSpec::wr15(), l2, grid);
        const auto c = section_smatrix(WaveguideSpec::wr15(), l1 + l2, grid);
        for (std::size_t k = 0; k < grid.size(); ++k) {
            const cplx prod = a(k, 1, 0) * b(k, 1, 0);
            CHECK(std::abs(prod - c(k, 1, 0)) <= 1e-12 * std::abs(c(k, 1, 0)));
        }
    }
}
