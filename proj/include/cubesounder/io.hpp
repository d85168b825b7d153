#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>

namespace cubesounder::io {

/// Writes through a sibling temporary file and renames it over `path`, so
/// readers never see a partial file.
void write_atomic(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body);
void write_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace cubesounder::io
