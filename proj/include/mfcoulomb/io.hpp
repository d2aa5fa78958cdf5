#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace mfc::io {

// Shortest round-trip-safe text form with 17 significant digits.
std::string format_double(double v);
double parse_double(std::string_view text);

// Writes the whole file or throws IoError.
void write_file(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

// Appends one complete line (a trailing newline is added) and flushes.
void append_line(const std::filesystem::path& path, std::string_view line);

// FNV-1a 64-bit digest as 16 hex digits.
std::string fnv1a_hex(std::string_view data);

}  // namespace mfc::io
