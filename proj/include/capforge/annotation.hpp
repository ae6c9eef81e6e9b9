#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace capforge {

// Proposal box in pixel units; (x, y) is the top-left corner.
struct BoundingBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  double score = 0.0;
};

// Dense H x W x C image, row-major with channels innermost.
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int height, int width, int channels, double fill = 0.0);
  ImageBuffer(int height, int width, int channels, std::vector<double> pixels);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::span<const double> pixels() const { return pixels_; }

  double at(int y, int x, int c) const { return pixels_[index(y, x, c)]; }
  double& at(int y, int x, int c) { return pixels_[index(y, x, c)]; }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> pixels_;
};

// Maps an image to a fixed-width feature vector. Implementations must be
// deterministic.
struct FeatureExtractor {
  int out_dim = 0;
  std::function<Eigen::VectorXd(const ImageBuffer&)> extract;
};

// L x D annotation matrix: one row per selected object followed by the
// whole-image row.
struct AnnotationSet {
  Eigen::MatrixXd rows;
  int n_objects = 0;

  Eigen::Index num_rows() const { return rows.rows(); }
  Eigen::Index width() const { return rows.cols(); }
};

// Box intersected with the image; w or h may become zero.
BoundingBox clip_box(const BoundingBox& box, int height, int width);

// Highest score first; equal scores keep input order.
std::vector<BoundingBox> select_top_boxes(std::span<const BoundingBox> boxes, int n);

// Copy of `image` where every pixel outside the clipped box is set to
// `mean_pixel`.
ImageBuffer mask_to_mean(const ImageBuffer& image, const BoundingBox& box, std::span<const double> mean_pixel);

// Pixels inside the clipped box. Throws InvalidArgument for zero area.
ImageBuffer crop(const ImageBuffer& image, const BoundingBox& box);

AnnotationSet build_annotation_set(const ImageBuffer& image, std::span<const BoundingBox> boxes, int n,
                                   const FeatureExtractor& obj_extractor, const FeatureExtractor& loc_extractor,
                                   std::span<const double> mean_pixel);

// Test stand-in for CNN features: a seed-keyed hash of the image contents
// expanded into [-1, 1]^out_dim.
FeatureExtractor synthetic_extractor(std::uint64_t seed, int out_dim);

using FeatureMap = std::map<std::string, AnnotationSet>;

// `ANNOT v1 D=<int>` header, then per image `image_id L` and L rows of D
// decimals.
FeatureMap parse_feature_file(std::string_view text);
FeatureMap load_feature_file(const std::filesystem::path& path);
std::string format_feature_file(const FeatureMap& features);
void save_feature_file(const FeatureMap& features, const std::filesystem::path& path);

}  // namespace capforge
