#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "capforge/decoder.hpp"

namespace capforge {

struct Checkpoint {
  DecoderParams params;
  std::uint64_t seed = 0;
};

// Text container: version line, dims, seed, then every tensor as
// `tensor <name> <rows> <cols>` followed by its rows of "%.17g" values,
// closed by `end`. Loading reproduces every coordinate bit for bit.
std::string format_checkpoint(const Checkpoint& checkpoint);

// Throws VersionError, TruncatedError, ShapeError or ParseError.
Checkpoint parse_checkpoint(std::string_view text);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace capforge
