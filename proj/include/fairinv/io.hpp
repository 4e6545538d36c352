#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace fairinv {

/// Writes to a sibling temp file, then renames over `path`, so readers never
/// observe a truncated file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

/// 64-bit FNV-1a; stable across platforms (unlike std::hash).
std::uint64_t fnv1a64(std::string_view bytes);

std::string hex64(std::uint64_t value);

/// Shortest text that parses back to the same double.
std::string format_double(double value);

}  // namespace fairinv
