#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "capforge/annotation.hpp"
#include "capforge/decoder.hpp"
#include "capforge/rng.hpp"
#include "capforge/training.hpp"
#include "capforge/vocab.hpp"

namespace capforge::testing {

// Random integer-valued RGB image.
inline ImageBuffer random_image(Rng& rng, int height, int width, int channels = 3) {
  ImageBuffer img(height, width, channels);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) img.at(y, x, c) = static_cast<double>(rng.below(256));
    }
  }
  return img;
}

inline BoundingBox random_box(Rng& rng, int height, int width) {
  const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(width - 1)));
  const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(height - 1)));
  const int w = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(width - x)));
  const int h = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(height - y)));
  return {x, y, w, h, rng.uniform()};
}

inline AnnotationSet random_annotations(Rng& rng, int num_rows, int width, double scale = 1.0) {
  AnnotationSet set;
  set.rows.resize(num_rows, width);
  for (Eigen::Index i = 0; i < set.rows.size(); ++i) set.rows.data()[i] = rng.uniform(-scale, scale);
  set.n_objects = num_rows - 1;
  return set;
}

inline DecoderParams random_params(const DecoderDims& dims, std::uint64_t seed, double scale = 0.5) {
  DecoderParams p = DecoderParams::zeros(dims);
  Rng rng(seed);
  for (auto t : p.tensors()) {
    for (double& v : t) v = rng.uniform(-scale, scale);
  }
  return p;
}

// Twenty (image features, caption) pairs built through the full annotation
// path: 3 boxes per image (L = 4), synthetic extractors of width 8 (D = 16),
// captions of 3..6 tokens drawn from a 15-word vocabulary.
struct OverfitData {
  std::vector<CaptionRecord> captions;
  std::vector<AnnotationSet> features;
  Vocabulary vocab{std::vector<Vocabulary::Entry>{{"<end>", 0}, {"<unk>", 0}}};
  std::vector<TrainingExample> examples;
};

inline OverfitData make_overfit_data(std::uint64_t seed) {
  static const std::vector<std::string> kWords = {"a",     "dog",  "cat",   "man",  "on",
                                                  "the",   "red",  "ball",  "sits", "table",
                                                  "green", "tree", "under", "runs", "grass"};
  Rng rng(seed);
  const FeatureExtractor obj = synthetic_extractor(seed + 11, 8);
  const FeatureExtractor loc = synthetic_extractor(seed + 12, 8);
  const std::vector<double> mean = {127.5, 127.5, 127.5};
  OverfitData data;
  for (int i = 0; i < 20; ++i) {
    const ImageBuffer img = random_image(rng, 12, 12);
    std::vector<BoundingBox> boxes;
    for (int b = 0; b < 3; ++b) boxes.push_back(random_box(rng, 12, 12));
    data.features.push_back(build_annotation_set(img, boxes, 5, obj, loc, mean));
    const int len = 3 + static_cast<int>(rng.below(4));
    CaptionRecord rec{"img" + std::to_string(i), {}};
    rec.tokens.push_back(kWords[static_cast<std::size_t>(i) % kWords.size()]);
    for (int t = 1; t < len; ++t) rec.tokens.push_back(kWords[rng.below(kWords.size())]);
    data.captions.push_back(std::move(rec));
  }
  data.vocab = build_vocab(data.captions, 1);
  for (std::size_t i = 0; i < data.captions.size(); ++i) {
    data.examples.push_back({data.features[i], encode(data.captions[i].tokens, data.vocab, kDefaultMaxCaptionLen)});
  }
  return data;
}

}  // namespace capforge::testing
