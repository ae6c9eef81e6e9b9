#include "capforge/image_io.hpp"

#include <cctype>
#include <cmath>

#include "capforge/error.hpp"
#include "capforge/text_io.hpp"

namespace capforge {

namespace {

class NetpbmReader {
 public:
  explicit NetpbmReader(std::string_view bytes) : bytes_(bytes) {}

  std::string token() {
    skip_space_and_comments();
    std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    if (start == pos_) throw TruncatedError("netpbm: unexpected end of data");
    return std::string(bytes_.substr(start, pos_ - start));
  }

  long number(std::string_view what) { return static_cast<long>(parse_int(token(), what)); }

  // Binary raster starts after exactly one whitespace byte.
  std::string_view raster(std::size_t n) {
    ++pos_;
    if (pos_ + n > bytes_.size()) throw TruncatedError("netpbm: raster shorter than header declares");
    return bytes_.substr(pos_, n);
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

ImageBuffer parse_netpbm(std::string_view bytes) {
  NetpbmReader in(bytes);
  const std::string magic = in.token();
  int channels = 0;
  bool binary = false;
  if (magic == "P2") {
    channels = 1;
  } else if (magic == "P3") {
    channels = 3;
  } else if (magic == "P5") {
    channels = 1;
    binary = true;
  } else if (magic == "P6") {
    channels = 3;
    binary = true;
  } else {
    throw ParseError("netpbm: unsupported magic '" + magic + "'");
  }
  const long width = in.number("image width");
  const long height = in.number("image height");
  const long maxval = in.number("image maxval");
  if (width < 1 || height < 1 || maxval < 1 || maxval > 65535) throw ParseError("netpbm: bad header values");

  const std::size_t count = static_cast<std::size_t>(width) * height * channels;
  std::vector<double> pixels(count);
  if (binary) {
    const std::size_t bytes_per = maxval > 255 ? 2 : 1;
    const auto raster = in.raster(count * bytes_per);
    for (std::size_t i = 0; i < count; ++i) {
      const auto hi = static_cast<unsigned char>(raster[i * bytes_per]);
      pixels[i] = bytes_per == 1 ? hi : hi * 256.0 + static_cast<unsigned char>(raster[i * bytes_per + 1]);
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) pixels[i] = static_cast<double>(in.number("pixel value"));
  }
  return ImageBuffer(static_cast<int>(height), static_cast<int>(width), channels, std::move(pixels));
}

ImageBuffer load_netpbm(const std::filesystem::path& path) {
  try {
    return parse_netpbm(read_file(path));
  } catch (const Error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string format_netpbm_ascii(const ImageBuffer& image, int maxval) {
  if (image.channels() != 1 && image.channels() != 3) throw InvalidArgument("netpbm supports 1 or 3 channels");
  std::string out = image.channels() == 1 ? "P2\n" : "P3\n";
  out += std::to_string(image.width()) + ' ' + std::to_string(image.height()) + '\n' + std::to_string(maxval) + '\n';
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < image.channels(); ++c) {
        if (x || c) out.push_back(' ');
        out += std::to_string(static_cast<long>(std::lround(image.at(y, x, c))));
      }
    }
    out.push_back('\n');
  }
  return out;
}

std::map<std::string, std::vector<BoundingBox>> parse_boxes(std::string_view text) {
  std::map<std::string, std::vector<BoundingBox>> out;
  std::size_t lineno = 0;
  for (const auto& line : split_lines(text)) {
    ++lineno;
    if (trim(line).empty() || trim(line).front() == '#') continue;
    const auto f = split_ws(line);
    const std::string where = "boxes line " + std::to_string(lineno);
    if (f.size() != 6) throw ParseError(where + ": expected 'image_id x y w h score'");
    auto pixel = [&](const std::string& s, const char* what) {
      const double v = parse_double(s, where + " " + what);
      if (!std::isfinite(v) || v < 0) throw ParseError(where + ": " + what + " must be finite and >= 0");
      return static_cast<int>(std::lround(v));
    };
    BoundingBox b{pixel(f[1], "x"), pixel(f[2], "y"), pixel(f[3], "w"), pixel(f[4], "h"),
                  parse_double(f[5], where + " score")};
    if (!std::isfinite(b.score)) throw ParseError(where + ": score must be finite");
    out[f[0]].push_back(b);
  }
  return out;
}

std::map<std::string, std::vector<BoundingBox>> load_boxes(const std::filesystem::path& path) {
  return parse_boxes(read_file(path));
}

}  // namespace capforge
