#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace pai {

/// Writes through a sibling temp file and renames it into place, so readers
/// never observe a half-written output.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

/// Shortest text form that parses back to the same double.
std::string format_double(double v);

}  // namespace pai
