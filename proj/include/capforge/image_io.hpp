#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "capforge/annotation.hpp"

namespace capforge {

// Netpbm images: P2/P5 (grey) and P3/P6 (RGB). Pixel values are kept on
// their stored scale (0..maxval).
ImageBuffer parse_netpbm(std::string_view bytes);
ImageBuffer load_netpbm(const std::filesystem::path& path);
std::string format_netpbm_ascii(const ImageBuffer& image, int maxval = 255);

// `image_id x y w h score` per line; '#' comments and blank lines skipped.
// Coordinates may be decimals and are rounded to whole pixels.
std::map<std::string, std::vector<BoundingBox>> parse_boxes(std::string_view text);
std::map<std::string, std::vector<BoundingBox>> load_boxes(const std::filesystem::path& path);

}  // namespace capforge
