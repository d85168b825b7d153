#pragma once

// TE10-mode rectangular waveguide: cutoff, dispersion, conductor loss and
// the two-port of a uniform section.
//
// Sign convention: fields vary as exp(-gamma * z), gamma = alpha + j*beta.

#include <complex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cubesounder {

using cplx = std::complex<double>;

namespace constants {
inline constexpr double c0 = 299'792'458.0;               // m/s
inline constexpr double mu0 = 1.25663706212e-6;          // H/m
inline constexpr double eta0 = mu0 * c0;                 // ohm, ~376.73
inline constexpr double pi = 3.14159265358979323846;
inline constexpr double boltzmann = 1.380649e-23;        // J/K
}  // namespace constants

/// Default conductivity of machined aluminum, S/m.
inline constexpr double kAluminumConductivity = 3.5e7;

/// Fractional half-width of the forbidden band around cutoff.
inline constexpr double kDefaultCutoffGuard = 1e-3;

class CutoffSingularityError : public std::domain_error {
  public:
    CutoffSingularityError(double frequency_hz, double cutoff_hz);
    double frequency_hz() const noexcept { return frequency_hz_; }

  private:
    double frequency_hz_;
};

struct WaveguideSpec {
    std::string name;
    double width_a = 0.0;   // m, broad wall
    double height_b = 0.0;  // m, narrow wall
    double conductivity = kAluminumConductivity;  // S/m, ignored if perfect_conductor
    bool perfect_conductor = false;

    /// Throws std::invalid_argument unless a > b > 0 and the wall model is valid.
    void validate() const;

    static WaveguideSpec wr5(double conductivity = kAluminumConductivity);
    static WaveguideSpec wr15(double conductivity = kAluminumConductivity);
    /// Same spec with lossless walls.
    WaveguideSpec lossless() const;
};

/// Strictly increasing list of positive frequencies in hertz.
class FrequencyGrid {
  public:
    FrequencyGrid() = default;
    explicit FrequencyGrid(std::vector<double> points_hz);

    /// `count` evenly spaced points including both ends.
    static FrequencyGrid linspace(double start_hz, double stop_hz, std::size_t count);

    std::span<const double> points() const noexcept { return points_; }
    std::size_t size() const noexcept { return points_.size(); }
    bool empty() const noexcept { return points_.empty(); }
    double operator[](std::size_t i) const { return points_[i]; }
    double front() const { return points_.front(); }
    double back() const { return points_.back(); }

    friend bool operator==(const FrequencyGrid&, const FrequencyGrid&) = default;

  private:
    std::vector<double> points_;
};

class SMatrix;

double te10_cutoff(const WaveguideSpec& spec);

/// Guided wavelength of a propagating TE10 wave; throws below cutoff.
double guided_wavelength(const WaveguideSpec& spec, double f_hz);

/// Surface resistance sqrt(pi f mu0 / sigma).
double surface_resistance(double f_hz, double conductivity);

/// gamma = alpha + j beta in 1/m. Below cutoff the decay is purely reactive.
cplx propagation_constant(const WaveguideSpec& spec, double f_hz,
                          double guard_fraction = kDefaultCutoffGuard);

/// TE10 modal impedance: real above cutoff, +j (inductive) below.
cplx wave_impedance(const WaveguideSpec& spec, double f_hz,
                    double guard_fraction = kDefaultCutoffGuard);

/// Uniform section referenced to its own modal impedance: S11 = S22 = 0,
/// S21 = S12 = exp(-gamma * length).
SMatrix section_smatrix(const WaveguideSpec& spec, double length_m, const FrequencyGrid& grid,
                        double guard_fraction = kDefaultCutoffGuard);

}  // namespace cubesounder
