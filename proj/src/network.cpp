#include "cubesounder/network.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cubesounder {

namespace {

using Index = Eigen::Index;

std::vector<std::string> default_labels(std::size_t n) {
    std::vector<std::string> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = std::to_string(i + 1);
    return labels;
}

std::vector<std::size_t> all_but(std::size_t n, std::size_t skip) {
    std::vector<std::size_t> out;
    out.reserve(n - 1);
    for (std::size_t i = 0; i < n; ++i)
        if (i != skip) out.push_back(i);
    return out;
}

}  // namespace

SMatrix::SMatrix(FrequencyGrid grid, std::size_t n_ports)
    : grid_(std::move(grid)), n_ports_(n_ports), port_labels_(default_labels(n_ports)) {
    if (n_ports == 0) throw std::invalid_argument("SMatrix needs at least one port");
    entries_.assign(grid_.size(), Eigen::MatrixXcd::Zero(static_cast<Index>(n_ports),
                                                          static_cast<Index>(n_ports)));
}

SMatrix::SMatrix(FrequencyGrid grid, std::vector<Eigen::MatrixXcd> entries,
                 std::vector<std::string> port_labels)
    : grid_(std::move(grid)), entries_(std::move(entries)) {
    if (entries_.size() != grid_.size())
        throw std::invalid_argument(fmt::format("SMatrix: {} matrices for {} grid points", entries_.size(),
                                                grid_.size()));
    if (entries_.empty()) throw std::invalid_argument("SMatrix: empty frequency grid");
    n_ports_ = static_cast<std::size_t>(entries_.front().rows());
    if (n_ports_ == 0) throw std::invalid_argument("SMatrix needs at least one port");
    for (const auto& m : entries_)
        if (static_cast<std::size_t>(m.rows()) != n_ports_ || static_cast<std::size_t>(m.cols()) != n_ports_)
            throw std::invalid_argument("SMatrix: matrices must all be square with the same port count");
    set_port_labels(port_labels.empty() ? default_labels(n_ports_) : std::move(port_labels));
}

void SMatrix::set_port_labels(std::vector<std::string> labels) {
    if (labels.size() != n_ports_)
        throw std::invalid_argument(fmt::format("SMatrix: {} labels for {} ports", labels.size(), n_ports_));
    port_labels_ = std::move(labels);
}

SMatrix SMatrix::permuted(const std::vector<std::size_t>& order) const {
    if (order.size() != n_ports_) throw std::invalid_argument("permutation size mismatch");
    std::vector<bool> seen(n_ports_, false);
    for (auto o : order) {
        if (o >= n_ports_ || seen[o]) throw std::invalid_argument("not a permutation");
        seen[o] = true;
    }
    std::vector<Eigen::MatrixXcd> out(entries_.size());
    const auto n = static_cast<Index>(n_ports_);
    for (std::size_t k = 0; k < entries_.size(); ++k) {
        out[k].resize(n, n);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j)
                out[k](i, j) = entries_[k](static_cast<Index>(order[i]), static_cast<Index>(order[j]));
    }
    std::vector<std::string> labels(n_ports_);
    for (std::size_t i = 0; i < n_ports_; ++i) labels[i] = port_labels_[order[i]];
    return SMatrix(grid_, std::move(out), std::move(labels));
}

void SMatrix::check_finite() const {
    for (std::size_t k = 0; k < entries_.size(); ++k)
        if (!entries_[k].allFinite())
            throw std::invalid_argument(fmt::format("SMatrix: non-finite entry at {:.9g} Hz", grid_[k]));
}

ValidationReport validate(const SMatrix& s, NetworkProperty kind, double tol) {
    ValidationReport rep;
    rep.deviation.resize(s.size());
    const auto n = static_cast<Index>(s.n_ports());
    for (std::size_t k = 0; k < s.size(); ++k) {
        const auto& m = s.at(k);
        double dev = 0.0;
        switch (kind) {
            case NetworkProperty::reciprocal:
                dev = (m - m.transpose()).cwiseAbs().maxCoeff();
                break;
            case NetworkProperty::passive: {
                Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m);
                dev = svd.singularValues()(0) - 1.0;
                break;
            }
            case NetworkProperty::lossless:
                dev = (m.adjoint() * m - Eigen::MatrixXcd::Identity(n, n)).cwiseAbs().maxCoeff();
                break;
        }
        rep.deviation[k] = dev;
        if (k == 0 || dev > rep.worst_deviation) {
            rep.worst_deviation = dev;
            rep.worst_frequency_hz = s.grid()[k];
        }
    }
    rep.passed = rep.worst_deviation <= tol;
    return rep;
}

SMatrix cascade_pair(const SMatrix& a, const SMatrix& b, std::size_t port_a, std::size_t port_b,
                     double singular_tol) {
    if (!(a.grid() == b.grid())) throw GridMismatchError("cascade_pair: frequency grids differ");
    if (port_a >= a.n_ports() || port_b >= b.n_ports())
        throw std::out_of_range("cascade_pair: port index out of range");
    if (a.n_ports() + b.n_ports() < 3)
        throw std::invalid_argument("cascade_pair: joining two one-ports leaves no external port");

    const auto ea = all_but(a.n_ports(), port_a);
    const auto eb = all_but(b.n_ports(), port_b);
    const auto na = static_cast<Index>(ea.size());
    const auto nb = static_cast<Index>(eb.size());
    const auto p = static_cast<Index>(port_a);
    const auto q = static_cast<Index>(port_b);

    std::vector<Eigen::MatrixXcd> out(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        const auto& A = a.at(k);
        const auto& B = b.at(k);
        const cplx app = A(p, p);
        const cplx bqq = B(q, q);
        const cplx d = 1.0 - app * bqq;
        if (std::abs(d) < singular_tol)
            throw ResonantDivergenceError(
                fmt::format("cascade_pair: singular connection (|1 - Spp*Sqq| = {:.3g}) at {:.9g} Hz",
                            std::abs(d), a.grid()[k]),
                a.grid()[k]);

        Eigen::MatrixXcd s(na + nb, na + nb);
        for (Index i = 0; i < na; ++i) {
            const auto ai = static_cast<Index>(ea[i]);
            for (Index j = 0; j < na; ++j) {
                const auto aj = static_cast<Index>(ea[j]);
                s(i, j) = A(ai, aj) + A(ai, p) * bqq * A(p, aj) / d;
            }
            for (Index j = 0; j < nb; ++j) s(i, na + j) = A(ai, p) * B(q, static_cast<Index>(eb[j])) / d;
        }
        for (Index i = 0; i < nb; ++i) {
            const auto bi = static_cast<Index>(eb[i]);
            for (Index j = 0; j < na; ++j) s(na + i, j) = B(bi, q) * A(p, static_cast<Index>(ea[j])) / d;
            for (Index j = 0; j < nb; ++j) {
                const auto bj = static_cast<Index>(eb[j]);
                s(na + i, na + j) = B(bi, bj) + B(bi, q) * app * B(q, bj) / d;
            }
        }
        out[k] = std::move(s);
    }

    std::vector<std::string> labels;
    labels.reserve(ea.size() + eb.size());
    for (auto i : ea) labels.push_back(a.port_labels()[i]);
    for (auto i : eb) labels.push_back(b.port_labels()[i]);
    return SMatrix(a.grid(), std::move(out), std::move(labels));
}

namespace {

void check_chain(const std::vector<ChainLink>& chain) {
    if (chain.empty()) throw std::invalid_argument("cascade_chain: empty chain");
    for (std::size_t k = 0; k < chain.size(); ++k) {
        const auto& l = chain[k];
        if (l.in_port >= l.element.n_ports() || l.out_port >= l.element.n_ports())
            throw std::out_of_range(fmt::format("cascade_chain: link {} port out of range", k));
        if (l.in_port == l.out_port && l.element.n_ports() > 1)
            throw std::invalid_argument(fmt::format("cascade_chain: link {} uses one port for in and out", k));
    }
}

std::vector<PortRef> chain_external_order(const std::vector<ChainLink>& chain) {
    std::vector<PortRef> order;
    order.push_back({0, chain.front().in_port});
    for (std::size_t k = 0; k < chain.size(); ++k) {
        const auto& l = chain[k];
        for (std::size_t p = 0; p < l.element.n_ports(); ++p)
            if (p != l.in_port && p != l.out_port) order.push_back({k, p});
    }
    order.push_back({chain.size() - 1, chain.back().out_port});
    return order;
}

std::size_t position_of(const std::vector<PortRef>& ports, PortRef ref) {
    auto it = std::find(ports.begin(), ports.end(), ref);
    return static_cast<std::size_t>(it - ports.begin());
}

std::vector<PortRef> element_ports(std::size_t k, std::size_t n) {
    std::vector<PortRef> out(n);
    for (std::size_t p = 0; p < n; ++p) out[p] = {k, p};
    return out;
}

}  // namespace

SMatrix cascade_chain(const std::vector<ChainLink>& chain, FoldOrder order, double singular_tol) {
    check_chain(chain);

    SMatrix acc;
    std::vector<PortRef> acc_ports;
    if (order == FoldOrder::left_to_right) {
        acc = chain.front().element;
        acc_ports = element_ports(0, acc.n_ports());
        for (std::size_t k = 1; k < chain.size(); ++k) {
            const std::size_t pa = position_of(acc_ports, {k - 1, chain[k - 1].out_port});
            acc = cascade_pair(acc, chain[k].element, pa, chain[k].in_port, singular_tol);
            acc_ports.erase(acc_ports.begin() + static_cast<std::ptrdiff_t>(pa));
            for (auto r : element_ports(k, chain[k].element.n_ports()))
                if (r.port != chain[k].in_port) acc_ports.push_back(r);
        }
    } else {
        const std::size_t last = chain.size() - 1;
        acc = chain.back().element;
        acc_ports = element_ports(last, acc.n_ports());
        for (std::size_t k = last; k-- > 0;) {
            const std::size_t pb = position_of(acc_ports, {k + 1, chain[k + 1].in_port});
            acc = cascade_pair(chain[k].element, acc, chain[k].out_port, pb, singular_tol);
            std::vector<PortRef> next;
            for (auto r : element_ports(k, chain[k].element.n_ports()))
                if (r.port != chain[k].out_port) next.push_back(r);
            for (std::size_t i = 0; i < acc_ports.size(); ++i)
                if (i != pb) next.push_back(acc_ports[i]);
            acc_ports = std::move(next);
        }
    }

    const auto want = chain_external_order(chain);
    std::vector<std::size_t> perm(want.size());
    for (std::size_t i = 0; i < want.size(); ++i) perm[i] = position_of(acc_ports, want[i]);
    return acc.permuted(perm);
}

void ConnectionGraph::validate() const {
    if (elements.empty()) throw std::invalid_argument("ConnectionGraph: no elements");
    if (external_ports.empty()) throw std::invalid_argument("ConnectionGraph: no external ports");
    std::vector<std::vector<int>> uses(elements.size());
    for (std::size_t e = 0; e < elements.size(); ++e) {
        uses[e].assign(elements[e].n_ports(), 0);
        if (!(elements[e].grid() == elements.front().grid()))
            throw GridMismatchError(fmt::format("ConnectionGraph: element {} has a different grid", e));
    }
    auto mark = [&](PortRef r) {
        if (r.element >= elements.size() || r.port >= elements[r.element].n_ports())
            throw std::out_of_range(fmt::format("ConnectionGraph: port ({}, {}) does not exist", r.element, r.port));
        ++uses[r.element][r.port];
    };
    for (const auto& j : joints) {
        mark(j.a);
        mark(j.b);
    }
    for (const auto& r : external_ports) mark(r);
    for (std::size_t e = 0; e < elements.size(); ++e)
        for (std::size_t p = 0; p < uses[e].size(); ++p)
            if (uses[e][p] != 1)
                throw std::invalid_argument(
                    fmt::format("ConnectionGraph: port ({}, {}) used {} times", e, p, uses[e][p]));
}

namespace {

// Unknowns are [a; b] over every element port. Rows: element relations
// b - S a = 0, joint constraints a_p = b_q and a_q = b_p, and the incident
// wave at each external port.
std::vector<Eigen::MatrixXcd> solve_all(const ConnectionGraph& g) {
    g.validate();
    std::vector<std::size_t> offset(g.elements.size() + 1, 0);
    for (std::size_t e = 0; e < g.elements.size(); ++e) offset[e + 1] = offset[e] + g.elements[e].n_ports();
    const auto m = static_cast<Index>(offset.back());
    const auto n_ext = static_cast<Index>(g.external_ports.size());
    auto idx = [&](PortRef r) { return static_cast<Index>(offset[r.element] + r.port); };

    const auto& grid = g.elements.front().grid();
    std::vector<Eigen::MatrixXcd> result(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        Eigen::MatrixXcd sys = Eigen::MatrixXcd::Zero(2 * m, 2 * m);
        Eigen::MatrixXcd rhs = Eigen::MatrixXcd::Zero(2 * m, n_ext);
        Index row = 0;
        for (std::size_t e = 0; e < g.elements.size(); ++e) {
            const auto& s = g.elements[e].at(k);
            const auto base = static_cast<Index>(offset[e]);
            for (Index i = 0; i < s.rows(); ++i, ++row) {
                sys(row, m + base + i) = 1.0;
                for (Index j = 0; j < s.cols(); ++j) sys(row, base + j) = -s(i, j);
            }
        }
        for (const auto& j : g.joints) {
            sys(row, idx(j.a)) = 1.0;
            sys(row, m + idx(j.b)) = -1.0;
            ++row;
            sys(row, idx(j.b)) = 1.0;
            sys(row, m + idx(j.a)) = -1.0;
            ++row;
        }
        for (Index e = 0; e < n_ext; ++e, ++row) {
            sys(row, idx(g.external_ports[static_cast<std::size_t>(e)])) = 1.0;
            rhs(row, e) = 1.0;
        }

        Eigen::FullPivLU<Eigen::MatrixXcd> lu(sys);
        if (!lu.isInvertible())
            throw ResonantDivergenceError(
                fmt::format("brute_force_solve: singular network system at {:.9g} Hz", grid[k]), grid[k]);
        const Eigen::MatrixXcd x = lu.solve(rhs);
        Eigen::MatrixXcd out(n_ext, n_ext);
        for (Index i = 0; i < n_ext; ++i) out.row(i) = x.row(m + idx(g.external_ports[static_cast<std::size_t>(i)]));
        result[k] = std::move(out);
    }
    return result;
}

}  // namespace

std::vector<Eigen::VectorXcd> brute_force_solve(const ConnectionGraph& g, std::size_t excitation_port) {
    if (excitation_port >= g.external_ports.size())
        throw std::out_of_range("brute_force_solve: excitation port out of range");
    auto full = solve_all(g);
    std::vector<Eigen::VectorXcd> cols(full.size());
    for (std::size_t k = 0; k < full.size(); ++k) cols[k] = full[k].col(static_cast<Index>(excitation_port));
    return cols;
}

SMatrix brute_force_smatrix(const ConnectionGraph& g) {
    auto full = solve_all(g);
    std::vector<std::string> labels;
    for (const auto& r : g.external_ports) labels.push_back(g.elements[r.element].port_labels()[r.port]);
    return SMatrix(g.elements.front().grid(), std::move(full), std::move(labels));
}

ConnectionGraph chain_graph(const std::vector<ChainLink>& chain) {
    check_chain(chain);
    ConnectionGraph g;
    for (const auto& l : chain) g.elements.push_back(l.element);
    for (std::size_t k = 1; k < chain.size(); ++k)
        g.joints.push_back({{k - 1, chain[k - 1].out_port}, {k, chain[k].in_port}});
    g.external_ports = chain_external_order(chain);
    return g;
}

}  // namespace cubesounder
