#pragma once

#include <Eigen/Dense>
#include <vector>

#include "capforge/annotation.hpp"
#include "capforge/decoder.hpp"
#include "capforge/vocab.hpp"

namespace capforge {

struct DecodeConfig {
  int beam_width = 4;
  int max_len = kDefaultMaxCaptionLen;
};

struct Hypothesis {
  IdSequence ids;  // includes the final <end> once finished
  double log_prob = 0.0;
  DecoderState state;
  bool finished = false;
};

struct DecodeResult {
  IdSequence ids;         // caption ids, <end> excluded
  double log_prob = 0.0;  // includes the <end> step when one was emitted
};

// Argmax at every step (ties to the smaller id) until <end> or max_len
// generated tokens.
DecodeResult greedy_decode(const AnnotationSet& annotations, const DecoderParams& params, const Vocabulary& vocab,
                           int max_len);

// Beam search over raw summed log-probabilities (no length normalization).
// Equal scores are ordered by lexicographically smaller id sequence.
DecodeResult beam_search(const AnnotationSet& annotations, const DecoderParams& params, const Vocabulary& vocab,
                         const DecodeConfig& config);

// Attention weights used while emitting each id of `caption` (teacher
// forced, <end> step excluded).
std::vector<Eigen::VectorXd> attention_alignment(const AnnotationSet& annotations, const DecoderParams& params,
                                                 const Vocabulary& vocab, const IdSequence& caption);

}  // namespace capforge
