#include "cubesounder/touchstone.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

namespace cubesounder::touchstone {

namespace {

using Index = Eigen::Index;

// Touchstone v1 stores 2-port data column-major (S11 S21 S12 S22); every
// other port count is row-major with at most four pairs per line and each
// matrix row starting on a new line.
std::vector<std::pair<Index, Index>> entry_order(std::size_t n) {
    std::vector<std::pair<Index, Index>> order;
    const auto ni = static_cast<Index>(n);
    if (n == 2) return {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
    for (Index i = 0; i < ni; ++i)
        for (Index j = 0; j < ni; ++j) order.emplace_back(i, j);
    return order;
}

std::string fmt_num(double v) {
    return fmt::format("{:.17g}", v);
}

std::string upper(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return s;
}

}  // namespace

void write(std::ostream& os, const SMatrix& s, const std::string& comment) {
    if (!comment.empty()) {
        std::istringstream lines(comment);
        for (std::string line; std::getline(lines, line);) os << "! " << line << '\n';
    }
    os << kOptionLine << '\n';
    const std::size_t n = s.n_ports();
    const auto order = entry_order(n);
    for (std::size_t k = 0; k < s.size(); ++k) {
        const auto& m = s.at(k);
        os << fmt_num(s.grid()[k] / 1e9);
        if (n <= 2) {
            for (auto [i, j] : order) os << ' ' << fmt_num(m(i, j).real()) << ' ' << fmt_num(m(i, j).imag());
            os << '\n';
            continue;
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const cplx v = m(static_cast<Index>(i), static_cast<Index>(j));
                if (j > 0 && j % 4 == 0) os << '\n';
                else if (i > 0 && j == 0) os << '\n';
                os << ' ' << fmt_num(v.real()) << ' ' << fmt_num(v.imag());
            }
        }
        os << '\n';
    }
}

void write(const std::filesystem::path& path, const SMatrix& s, const std::string& comment) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write(os, s, comment);
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

std::optional<std::size_t> ports_from_extension(const std::filesystem::path& path) {
    static const std::regex re(R"(^\.[sS](\d+)[pP]$)");
    std::smatch m;
    const std::string ext = path.extension().string();
    if (!std::regex_match(ext, m, re)) return std::nullopt;
    const auto n = std::stoul(m[1].str());
    if (n == 0) return std::nullopt;
    return n;
}

SMatrix read(std::istream& is, std::size_t n_ports) {
    if (n_ports == 0) throw std::invalid_argument("touchstone: port count must be positive");
    double freq_scale = 1e9;
    enum class Format { ri, ma, db } format = Format::ma;  // v1 defaults: GHz, MA
    bool seen_option = false;

    // Flatten the numeric body into (value, line) tokens.
    std::vector<std::pair<double, std::size_t>> tokens;
    std::size_t line_no = 0;
    for (std::string line; std::getline(is, line);) {
        ++line_no;
        if (auto bang = line.find('!'); bang != std::string::npos) line.erase(bang);
        std::istringstream ls(line);
        std::string first;
        if (!(ls >> first)) continue;
        if (first[0] == '#') {
            if (seen_option) continue;  // v1: only the first option line counts
            seen_option = true;
            std::vector<std::string> words;
            if (first.size() > 1) words.push_back(upper(first.substr(1)));
            for (std::string w; ls >> w;) words.push_back(upper(w));
            for (std::size_t i = 0; i < words.size(); ++i) {
                const auto& w = words[i];
                if (w == "HZ") freq_scale = 1.0;
                else if (w == "KHZ") freq_scale = 1e3;
                else if (w == "MHZ") freq_scale = 1e6;
                else if (w == "GHZ") freq_scale = 1e9;
                else if (w == "RI") format = Format::ri;
                else if (w == "MA") format = Format::ma;
                else if (w == "DB") format = Format::db;
                else if (w == "S") continue;
                else if (w == "Y" || w == "Z" || w == "H" || w == "G")
                    throw FormatError("only S-parameter files are supported", line_no);
                else if (w == "R") {
                    if (i + 1 >= words.size()) throw FormatError("missing reference resistance", line_no);
                    ++i;
                } else
                    throw FormatError("unknown option '" + w + "'", line_no);
            }
            continue;
        }
        std::istringstream body(line);
        for (std::string tok; body >> tok;) {
            double v = 0.0;
            const auto* end = tok.data() + tok.size();
            auto [ptr, ec] = std::from_chars(tok.data(), end, v);
            if (ec != std::errc{} || ptr != end || !std::isfinite(v))
                throw FormatError("malformed number '" + tok + "'", line_no);
            tokens.emplace_back(v, line_no);
        }
    }

    const std::size_t per_point = 1 + 2 * n_ports * n_ports;
    if (tokens.empty()) throw FormatError("no data", line_no);
    if (tokens.size() % per_point != 0)
        throw FormatError(fmt::format("{} values is not a multiple of {} for a {}-port file", tokens.size(),
                                      per_point, n_ports),
                          tokens.back().second);

    const auto order = entry_order(n_ports);
    const auto n = static_cast<Index>(n_ports);
    std::vector<double> freqs;
    std::vector<Eigen::MatrixXcd> entries;
    for (std::size_t base = 0; base < tokens.size(); base += per_point) {
        const double f = tokens[base].first * freq_scale;
        const std::size_t at_line = tokens[base].second;
        if (!freqs.empty() && !(f > freqs.back()))
            throw FormatError("frequency column is not strictly ascending", at_line);
        if (!(f > 0.0)) throw FormatError("frequency must be positive", at_line);
        Eigen::MatrixXcd m(n, n);
        for (std::size_t e = 0; e < order.size(); ++e) {
            const double x = tokens[base + 1 + 2 * e].first;
            const double y = tokens[base + 2 + 2 * e].first;
            cplx v;
            switch (format) {
                case Format::ri: v = {x, y}; break;
                case Format::ma: v = std::polar(x, y * constants::pi / 180.0); break;
                case Format::db: v = std::polar(std::pow(10.0, x / 20.0), y * constants::pi / 180.0); break;
            }
            m(order[e].first, order[e].second) = v;
        }
        freqs.push_back(f);
        entries.push_back(std::move(m));
    }
    return SMatrix(FrequencyGrid(std::move(freqs)), std::move(entries));
}

SMatrix read(const std::filesystem::path& path, std::optional<std::size_t> n_ports) {
    const auto from_ext = ports_from_extension(path);
    if (n_ports && from_ext && *n_ports != *from_ext)
        throw FormatError(fmt::format("file extension implies {} ports, caller expects {}", *from_ext, *n_ports), 0);
    const auto n = n_ports ? n_ports : from_ext;
    if (!n) throw FormatError("cannot infer port count from '" + path.filename().string() + "'", 0);
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    return read(is, *n);
}

}  // namespace cubesounder::touchstone
