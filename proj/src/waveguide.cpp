#include "cubesounder/waveguide.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "cubesounder/network.hpp"

namespace cubesounder {

using constants::c0;
using constants::eta0;
using constants::mu0;
using constants::pi;

CutoffSingularityError::CutoffSingularityError(double frequency_hz, double cutoff_hz)
    : std::domain_error(fmt::format("frequency {:.9g} Hz is inside the guard band of TE10 cutoff {:.9g} Hz",
                                    frequency_hz, cutoff_hz)),
      frequency_hz_(frequency_hz) {}

void WaveguideSpec::validate() const {
    if (!(height_b > 0.0) || !(width_a > height_b) || !std::isfinite(width_a))
        throw std::invalid_argument(fmt::format("waveguide '{}': need width_a > height_b > 0 (got a={}, b={})",
                                                name, width_a, height_b));
    if (!perfect_conductor && !(conductivity > 0.0 && std::isfinite(conductivity)))
        throw std::invalid_argument(
            fmt::format("waveguide '{}': conductivity must be positive and finite", name));
}

WaveguideSpec WaveguideSpec::wr5(double conductivity) {
    return {"WR-5", 1.2954e-3, 0.6477e-3, conductivity, false};
}

WaveguideSpec WaveguideSpec::wr15(double conductivity) {
    return {"WR-15", 3.7592e-3, 1.8796e-3, conductivity, false};
}

WaveguideSpec WaveguideSpec::lossless() const {
    WaveguideSpec out = *this;
    out.perfect_conductor = true;
    return out;
}

FrequencyGrid::FrequencyGrid(std::vector<double> points_hz) : points_(std::move(points_hz)) {
    for (std::size_t i = 0; i < points_.size(); ++i) {
        if (!(points_[i] > 0.0) || !std::isfinite(points_[i]))
            throw std::invalid_argument(fmt::format("frequency grid point {} is not positive", i));
        if (i > 0 && !(points_[i] > points_[i - 1]))
            throw std::invalid_argument(fmt::format("frequency grid not strictly increasing at point {}", i));
    }
}

FrequencyGrid FrequencyGrid::linspace(double start_hz, double stop_hz, std::size_t count) {
    if (count == 0) return FrequencyGrid{};
    if (count == 1) return FrequencyGrid{{start_hz}};
    std::vector<double> pts(count);
    const double step = (stop_hz - start_hz) / static_cast<double>(count - 1);
    for (std::size_t i = 0; i < count; ++i) pts[i] = start_hz + step * static_cast<double>(i);
    pts.back() = stop_hz;
    return FrequencyGrid{std::move(pts)};
}

double te10_cutoff(const WaveguideSpec& spec) {
    return c0 / (2.0 * spec.width_a);
}

double guided_wavelength(const WaveguideSpec& spec, double f_hz) {
    const double r = te10_cutoff(spec) / f_hz;
    if (r >= 1.0) throw CutoffSingularityError(f_hz, te10_cutoff(spec));
    return (c0 / f_hz) / std::sqrt(1.0 - r * r);
}

double surface_resistance(double f_hz, double conductivity) {
    return std::sqrt(pi * f_hz * mu0 / conductivity);
}

namespace {

void check_guard(const WaveguideSpec& spec, double f_hz, double guard_fraction) {
    if (!(f_hz > 0.0)) throw std::invalid_argument("frequency must be positive");
    const double fc = te10_cutoff(spec);
    if (std::abs(f_hz - fc) <= guard_fraction * fc) throw CutoffSingularityError(f_hz, fc);
}

}  // namespace

cplx propagation_constant(const WaveguideSpec& spec, double f_hz, double guard_fraction) {
    check_guard(spec, f_hz, guard_fraction);
    const double fc = te10_cutoff(spec);
    const double k0 = 2.0 * pi * f_hz / c0;
    const double r2 = (fc / f_hz) * (fc / f_hz);

    if (f_hz < fc) return {k0 * std::sqrt(r2 - 1.0), 0.0};

    const double root = std::sqrt(1.0 - r2);
    const double beta = k0 * root;
    double alpha = 0.0;
    if (!spec.perfect_conductor) {
        const double rs = surface_resistance(f_hz, spec.conductivity);
        alpha = rs / (spec.height_b * eta0 * root) * (1.0 + 2.0 * spec.height_b / spec.width_a * r2);
    }
    return {alpha, beta};
}

cplx wave_impedance(const WaveguideSpec& spec, double f_hz, double guard_fraction) {
    check_guard(spec, f_hz, guard_fraction);
    const double r2 = std::pow(te10_cutoff(spec) / f_hz, 2);
    if (r2 < 1.0) return {eta0 / std::sqrt(1.0 - r2), 0.0};
    return {0.0, eta0 / std::sqrt(r2 - 1.0)};
}

SMatrix section_smatrix(const WaveguideSpec& spec, double length_m, const FrequencyGrid& grid,
                        double guard_fraction) {
    if (!(length_m >= 0.0)) throw std::invalid_argument("section length must be non-negative");
    std::vector<Eigen::MatrixXcd> entries;
    entries.reserve(grid.size());
    for (double f : grid.points()) {
        const cplx t = std::exp(-propagation_constant(spec, f, guard_fraction) * length_m);
        Eigen::MatrixXcd s(2, 2);
        s << 0.0, t, t, 0.0;
        entries.push_back(std::move(s));
    }
    return SMatrix(grid, std::move(entries));
}

}  // namespace cubesounder
