#include "capforge/annotation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "capforge/error.hpp"
#include "capforge/text_io.hpp"

namespace capforge {

namespace {

constexpr std::string_view kAnnotMagic = "ANNOT";

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t h, std::uint64_t v) { return splitmix64(h ^ splitmix64(v)); }

void check_finite(const Eigen::VectorXd& v, std::string_view what) {
  if (!v.allFinite()) throw NonFiniteError(std::string(what) + " produced a non-finite value");
}

Eigen::VectorXd run_extractor(const FeatureExtractor& fx, const ImageBuffer& image, std::string_view what) {
  Eigen::VectorXd v = fx.extract(image);
  if (v.size() != fx.out_dim) {
    throw DimensionError(std::string(what) + " returned " + std::to_string(v.size()) + " values, declared " +
                         std::to_string(fx.out_dim));
  }
  check_finite(v, what);
  return v;
}

}  // namespace

ImageBuffer::ImageBuffer(int height, int width, int channels, double fill)
    : ImageBuffer(height, width, channels,
                  std::vector<double>(static_cast<std::size_t>(std::max(0, height)) * std::max(0, width) *
                                          std::max(0, channels),
                                      fill)) {}

ImageBuffer::ImageBuffer(int height, int width, int channels, std::vector<double> pixels)
    : height_(height), width_(width), channels_(channels), pixels_(std::move(pixels)) {
  if (height < 0 || width < 0 || channels < 1) throw InvalidArgument("image dimensions must be non-negative");
  if (pixels_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw DimensionError("pixel buffer size does not match H x W x C");
  }
  for (double p : pixels_) {
    if (!std::isfinite(p)) throw NonFiniteError("image contains a non-finite pixel");
  }
}

BoundingBox clip_box(const BoundingBox& box, int height, int width) {
  const long x0 = std::clamp<long>(box.x, 0, width);
  const long y0 = std::clamp<long>(box.y, 0, height);
  const long x1 = std::clamp<long>(static_cast<long>(box.x) + std::max(0, box.w), 0, width);
  const long y1 = std::clamp<long>(static_cast<long>(box.y) + std::max(0, box.h), 0, height);
  return {static_cast<int>(x0), static_cast<int>(y0), static_cast<int>(std::max(0L, x1 - x0)),
          static_cast<int>(std::max(0L, y1 - y0)), box.score};
}

std::vector<BoundingBox> select_top_boxes(std::span<const BoundingBox> boxes, int n) {
  if (n < 1) throw InvalidArgument("top-n requires n >= 1");
  std::vector<BoundingBox> sorted(boxes.begin(), boxes.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const BoundingBox& a, const BoundingBox& b) { return a.score > b.score; });
  if (sorted.size() > static_cast<std::size_t>(n)) sorted.resize(static_cast<std::size_t>(n));
  return sorted;
}

ImageBuffer mask_to_mean(const ImageBuffer& image, const BoundingBox& box, std::span<const double> mean_pixel) {
  if (mean_pixel.size() != static_cast<std::size_t>(image.channels())) {
    throw DimensionError("mean pixel has " + std::to_string(mean_pixel.size()) + " channels, image has " +
                         std::to_string(image.channels()));
  }
  const BoundingBox b = clip_box(box, image.height(), image.width());
  ImageBuffer out = image;
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const bool inside = x >= b.x && x < b.x + b.w && y >= b.y && y < b.y + b.h;
      if (inside) continue;
      for (int c = 0; c < image.channels(); ++c) out.at(y, x, c) = mean_pixel[static_cast<std::size_t>(c)];
    }
  }
  return out;
}

ImageBuffer crop(const ImageBuffer& image, const BoundingBox& box) {
  const BoundingBox b = clip_box(box, image.height(), image.width());
  if (b.w == 0 || b.h == 0) throw InvalidArgument("box has zero area after clipping; nothing to crop");
  ImageBuffer out(b.h, b.w, image.channels());
  for (int y = 0; y < b.h; ++y) {
    for (int x = 0; x < b.w; ++x) {
      for (int c = 0; c < image.channels(); ++c) out.at(y, x, c) = image.at(b.y + y, b.x + x, c);
    }
  }
  return out;
}

AnnotationSet build_annotation_set(const ImageBuffer& image, std::span<const BoundingBox> boxes, int n,
                                   const FeatureExtractor& obj_extractor, const FeatureExtractor& loc_extractor,
                                   std::span<const double> mean_pixel) {
  if (obj_extractor.out_dim != loc_extractor.out_dim) {
    throw InvalidArgument("object and location feature widths differ (" + std::to_string(obj_extractor.out_dim) +
                          " vs " + std::to_string(loc_extractor.out_dim) + ")");
  }
  if (boxes.empty()) throw InvalidArgument("no boxes: an annotation set needs at least one object");
  const auto top = select_top_boxes(boxes, n);
  const int d = obj_extractor.out_dim;
  const auto k = static_cast<Eigen::Index>(top.size());

  AnnotationSet set;
  set.n_objects = static_cast<int>(k);
  set.rows.resize(k + 1, 2 * d);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& box = top[static_cast<std::size_t>(i)];
    set.rows.row(i).head(d) = run_extractor(obj_extractor, crop(image, box), "object extractor").transpose();
    set.rows.row(i).tail(d) =
        run_extractor(loc_extractor, mask_to_mean(image, box, mean_pixel), "location extractor").transpose();
  }
  const Eigen::VectorXd whole = run_extractor(obj_extractor, image, "object extractor");
  set.rows.row(k).head(d) = whole.transpose();
  set.rows.row(k).tail(d) = whole.transpose();
  return set;
}

FeatureExtractor synthetic_extractor(std::uint64_t seed, int out_dim) {
  if (out_dim < 1) throw InvalidArgument("extractor width must be >= 1");
  FeatureExtractor fx;
  fx.out_dim = out_dim;
  fx.extract = [seed, out_dim](const ImageBuffer& image) {
    std::uint64_t h = splitmix64(seed);
    h = mix(h, static_cast<std::uint64_t>(image.height()));
    h = mix(h, static_cast<std::uint64_t>(image.width()));
    h = mix(h, static_cast<std::uint64_t>(image.channels()));
    for (double p : image.pixels()) {
      h = mix(h, std::bit_cast<std::uint64_t>(p == 0.0 ? 0.0 : p));
    }
    Eigen::VectorXd v(out_dim);
    for (int k = 0; k < out_dim; ++k) {
      const std::uint64_t r = mix(h, static_cast<std::uint64_t>(k));
      v[k] = 2.0 * (static_cast<double>(r >> 11) * 0x1.0p-53) - 1.0;
    }
    return v;
  };
  return fx;
}

FeatureMap parse_feature_file(std::string_view text) {
  const auto lines = split_lines(text);
  std::size_t pos = 0;
  auto skip_blank = [&] {
    while (pos < lines.size() && (trim(lines[pos]).empty() || lines[pos].front() == '#')) ++pos;
  };
  skip_blank();
  if (pos == lines.size()) throw ParseError("feature file: missing ANNOT header");
  const auto header = split_ws(lines[pos]);
  if (header.empty() || header[0] != kAnnotMagic) throw ParseError("feature file: missing ANNOT header");
  if (header.size() != 3 || header[1] != std::string("v") + std::string(kVersion) || !header[2].starts_with("D=")) {
    if (header.size() >= 2 && header[1] != std::string("v") + std::string(kVersion)) {
      throw VersionError("feature file: unsupported version '" + header[1] + "'");
    }
    throw ParseError("feature file: header must be 'ANNOT v1 D=<int>'");
  }
  const auto declared_d = parse_int(std::string_view(header[2]).substr(2), "feature width D");
  if (declared_d < 0) throw ParseError("feature file: negative D");
  ++pos;

  FeatureMap out;
  while (true) {
    skip_blank();
    if (pos == lines.size()) break;
    const auto block = split_ws(lines[pos]);
    if (block.size() != 2) {
      throw ParseError("feature file line " + std::to_string(pos + 1) + ": expected 'image_id L'");
    }
    const std::string& image_id = block[0];
    const auto num_rows = parse_int(block[1], "row count L of image " + image_id);
    if (num_rows < 1) throw ParseError("feature file: image " + image_id + " has L < 1");
    if (out.count(image_id)) throw ParseError("feature file: duplicate image " + image_id);
    ++pos;

    std::vector<std::vector<std::string>> rows;
    for (std::int64_t r = 0; r < num_rows; ++r) {
      if (pos == lines.size()) {
        throw ParseError("feature file: image " + image_id + " ends after " + std::to_string(r) + " of " +
                         std::to_string(num_rows) + " rows");
      }
      rows.push_back(split_ws(lines[pos++]));
      if (rows.back().size() != rows.front().size()) {
        throw ParseError("feature file: row width mismatch in image " + image_id + " (row " + std::to_string(r) +
                         " has " + std::to_string(rows.back().size()) + " values, row 0 has " +
                         std::to_string(rows.front().size()) + ")");
      }
    }
    if (static_cast<std::int64_t>(rows.front().size()) != declared_d) {
      throw DimensionError("feature file: image " + image_id + " has width " + std::to_string(rows.front().size()) +
                           ", header declares D=" + std::to_string(declared_d));
    }
    AnnotationSet set;
    set.rows.resize(num_rows, declared_d);
    for (std::int64_t r = 0; r < num_rows; ++r) {
      for (std::int64_t c = 0; c < declared_d; ++c) {
        const double v = parse_double(rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)],
                                      "feature value of image " + image_id);
        if (!std::isfinite(v)) throw NonFiniteError("feature file: non-finite value in image " + image_id);
        set.rows(r, c) = v;
      }
    }
    set.n_objects = static_cast<int>(num_rows - 1);
    out.emplace(image_id, std::move(set));
  }
  return out;
}

FeatureMap load_feature_file(const std::filesystem::path& path) { return parse_feature_file(read_file(path)); }

std::string format_feature_file(const FeatureMap& features) {
  const Eigen::Index d = features.empty() ? 0 : features.begin()->second.width();
  std::string out = std::string(kAnnotMagic) + " v" + std::string(kVersion) + " D=" + std::to_string(d) + "\n";
  for (const auto& [image_id, set] : features) {
    if (set.width() != d) throw DimensionError("feature map mixes widths; image " + image_id);
    out += image_id + ' ' + std::to_string(set.num_rows()) + '\n';
    for (Eigen::Index r = 0; r < set.num_rows(); ++r) {
      for (Eigen::Index c = 0; c < d; ++c) {
        if (c) out.push_back(' ');
        out += format_double(set.rows(r, c));
      }
      out.push_back('\n');
    }
  }
  return out;
}

void save_feature_file(const FeatureMap& features, const std::filesystem::path& path) {
  write_file_atomic(path, format_feature_file(features));
}

}  // namespace capforge
