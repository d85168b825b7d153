#pragma once

// Touchstone v1 (.sNp) reading and writing.
//
// Files are written with the option line "# GHZ S RI R 50". The matrices
// themselves are referenced to each guide's modal impedance; the option
// line is kept at the conventional value so that standard RF tools load
// the data without renormalization.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>

#include "cubesounder/network.hpp"

namespace cubesounder::touchstone {

inline constexpr const char* kOptionLine = "# GHZ S RI R 50";

class FormatError : public std::runtime_error {
  public:
    FormatError(const std::string& what, std::size_t line)
        : std::runtime_error("touchstone line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

void write(std::ostream& os, const SMatrix& s, const std::string& comment = {});
void write(const std::filesystem::path& path, const SMatrix& s, const std::string& comment = {});

/// Port count taken from the ".sNp" extension unless given explicitly.
SMatrix read(std::istream& is, std::size_t n_ports);
SMatrix read(const std::filesystem::path& path, std::optional<std::size_t> n_ports = std::nullopt);

/// Parses N from a ".sNp" extension; nullopt if the name does not match.
std::optional<std::size_t> ports_from_extension(const std::filesystem::path& path);

}  // namespace cubesounder::touchstone
