#pragma once

// Frequency-gridded N-port scattering matrices and the algebra used to
// connect them.

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cubesounder/waveguide.hpp"

namespace cubesounder {

/// Default bound on |1 - A_pp B_qq| below which a connection is treated as singular.
inline constexpr double kSingularConnectionTol = 1e-12;

class GridMismatchError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// A connection (or a full network solve) hit a singular system at one frequency.
class ResonantDivergenceError : public std::runtime_error {
  public:
    ResonantDivergenceError(const std::string& what, double frequency_hz)
        : std::runtime_error(what), frequency_hz_(frequency_hz) {}
    double frequency_hz() const noexcept { return frequency_hz_; }

  private:
    double frequency_hz_;
};

class SMatrix {
  public:
    SMatrix() = default;
    /// All-zero matrices with default labels "1".."n".
    SMatrix(FrequencyGrid grid, std::size_t n_ports);
    SMatrix(FrequencyGrid grid, std::vector<Eigen::MatrixXcd> entries,
            std::vector<std::string> port_labels = {});

    const FrequencyGrid& grid() const noexcept { return grid_; }
    std::size_t n_ports() const noexcept { return n_ports_; }
    std::size_t size() const noexcept { return entries_.size(); }

    const Eigen::MatrixXcd& at(std::size_t k) const { return entries_.at(k); }
    Eigen::MatrixXcd& at(std::size_t k) { return entries_.at(k); }
    cplx operator()(std::size_t k, std::size_t row, std::size_t col) const {
        return entries_[k](static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col));
    }

    const std::vector<std::string>& port_labels() const noexcept { return port_labels_; }
    void set_port_labels(std::vector<std::string> labels);

    /// Reorder ports: new port i is old port order[i].
    SMatrix permuted(const std::vector<std::size_t>& order) const;

    /// Throws std::invalid_argument on a non-finite entry.
    void check_finite() const;

  private:
    FrequencyGrid grid_;
    std::size_t n_ports_ = 0;
    std::vector<Eigen::MatrixXcd> entries_;
    std::vector<std::string> port_labels_;
};

enum class NetworkProperty { reciprocal, passive, lossless };

struct ValidationReport {
    bool passed = true;
    double worst_deviation = 0.0;
    double worst_frequency_hz = 0.0;
    std::vector<double> deviation;  // per grid point
};

/// reciprocal: max|S - S^T|; passive: sigma_max - 1; lossless: max|S^H S - I|.
ValidationReport validate(const SMatrix& s, NetworkProperty kind, double tol);

/// Join port `port_a` of `a` to port `port_b` of `b`. The result lists the
/// remaining ports of `a` followed by the remaining ports of `b`, each in
/// ascending order.
SMatrix cascade_pair(const SMatrix& a, const SMatrix& b, std::size_t port_a, std::size_t port_b,
                     double singular_tol = kSingularConnectionTol);

/// One element of a chain. `in_port` joins the previous element's
/// `out_port`; every other port is a tap.
struct ChainLink {
    SMatrix element;
    std::size_t in_port = 0;
    std::size_t out_port = 1;
};

enum class FoldOrder { left_to_right, right_to_left };

/// Reduces a chain to one network with ports ordered as: first element's
/// in_port, the taps of every element in chain order (ascending within an
/// element), then the last element's out_port. The fold direction only
/// changes the arithmetic, never the port order.
SMatrix cascade_chain(const std::vector<ChainLink>& chain,
                      FoldOrder order = FoldOrder::left_to_right,
                      double singular_tol = kSingularConnectionTol);

struct PortRef {
    std::size_t element = 0;
    std::size_t port = 0;
    friend bool operator==(const PortRef&, const PortRef&) = default;
};

struct Joint {
    PortRef a;
    PortRef b;
};

struct ConnectionGraph {
    std::vector<SMatrix> elements;
    std::vector<Joint> joints;
    std::vector<PortRef> external_ports;

    /// Every element port used exactly once; identical grids.
    void validate() const;
};

/// Direct solve of the full wave-amplitude system. Returns, per grid point,
/// the outgoing waves at the external ports for a unit wave incident on
/// external port `excitation_port`.
std::vector<Eigen::VectorXcd> brute_force_solve(const ConnectionGraph& g,
                                                std::size_t excitation_port);

/// All excitation columns of brute_force_solve assembled into an SMatrix.
SMatrix brute_force_smatrix(const ConnectionGraph& g);

/// The graph corresponding to a chain, with external ports in cascade_chain order.
ConnectionGraph chain_graph(const std::vector<ChainLink>& chain);

}  // namespace cubesounder
