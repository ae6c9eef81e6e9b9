#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace capforge {

inline constexpr std::string_view kVersion = "1";

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string_view trim(std::string_view s);
std::vector<std::string> split_ws(std::string_view s);
std::vector<std::string> split_lines(std::string_view text);

// Shortest-roundtrip-safe decimal ("%.17g"); parses back to the same bits.
std::string format_double(double value);
std::string format_fixed(double value, int decimals);

// Strict parsers: the whole token must be consumed. `what` names the
// value in the error message.
double parse_double(std::string_view token, std::string_view what);
std::int64_t parse_int(std::string_view token, std::string_view what);

}  // namespace capforge
