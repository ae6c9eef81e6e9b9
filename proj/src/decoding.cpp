#include "capforge/decoding.hpp"

#include <algorithm>
#include <optional>

#include "capforge/error.hpp"

namespace capforge {

namespace {

void check_vocab(const DecoderParams& params, const Vocabulary& vocab) {
  if (static_cast<std::size_t>(params.dims.vocab) != vocab.size()) {
    throw DimensionError("decoder V=" + std::to_string(params.dims.vocab) + " but vocabulary has " +
                         std::to_string(vocab.size()) + " entries");
  }
}

// a beats b: higher score, then lexicographically smaller ids.
bool better(double lp_a, const IdSequence& a, double lp_b, const IdSequence& b) {
  if (lp_a != lp_b) return lp_a > lp_b;
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

DecodeResult strip_end(const Hypothesis& hyp, TokenId end_id) {
  DecodeResult r{hyp.ids, hyp.log_prob};
  if (!r.ids.empty() && r.ids.back() == end_id) r.ids.pop_back();
  return r;
}

}  // namespace

DecodeResult greedy_decode(const AnnotationSet& annotations, const DecoderParams& params, const Vocabulary& vocab,
                           int max_len) {
  if (max_len < 1) throw InvalidArgument("max_len must be >= 1");
  check_vocab(params, vocab);
  const StepDecoder decoder(params, annotations);
  DecoderState state = decoder.initial_state();
  TokenId prev = start_id(vocab);
  DecodeResult out;
  for (int t = 0; t < max_len; ++t) {
    StepTrace tr = decoder.step(prev, state);
    TokenId best = 0;
    for (Eigen::Index v = 1; v < tr.log_probs.size(); ++v) {
      if (tr.log_probs[v] > tr.log_probs[best]) best = static_cast<TokenId>(v);
    }
    out.log_prob += tr.log_probs[best];
    if (best == vocab.end_id()) break;
    out.ids.push_back(best);
    state = std::move(tr.state);
    prev = best;
  }
  return out;
}

DecodeResult beam_search(const AnnotationSet& annotations, const DecoderParams& params, const Vocabulary& vocab,
                         const DecodeConfig& config) {
  if (config.beam_width < 1) throw InvalidArgument("beam_width must be >= 1");
  if (config.max_len < 1) throw InvalidArgument("max_len must be >= 1");
  check_vocab(params, vocab);
  const StepDecoder decoder(params, annotations);
  const TokenId end_id = vocab.end_id();
  const auto width = static_cast<std::size_t>(config.beam_width);

  std::vector<Hypothesis> live{{{}, 0.0, decoder.initial_state(), false}};
  std::optional<Hypothesis> best_finished;

  struct Candidate {
    double log_prob;
    std::size_t parent;
    TokenId token;
  };

  for (int t = 0; t < config.max_len && !live.empty(); ++t) {
    std::vector<StepTrace> expansions;
    expansions.reserve(live.size());
    std::vector<Candidate> cands;
    for (std::size_t k = 0; k < live.size(); ++k) {
      const TokenId prev = live[k].ids.empty() ? start_id(vocab) : live[k].ids.back();
      expansions.push_back(decoder.step(prev, live[k].state));
      const auto& lp = expansions.back().log_probs;
      for (Eigen::Index v = 0; v < lp.size(); ++v) {
        cands.push_back({live[k].log_prob + lp[v], k, static_cast<TokenId>(v)});
      }
    }
    // Candidates from one parent share a prefix, so ties reduce to
    // comparing parent sequences, then the appended token.
    auto cmp = [&](const Candidate& a, const Candidate& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      if (a.parent != b.parent) {
        const auto& pa = live[a.parent].ids;
        const auto& pb = live[b.parent].ids;
        return std::lexicographical_compare(pa.begin(), pa.end(), pb.begin(), pb.end());
      }
      return a.token < b.token;
    };
    const std::size_t keep = std::min(width, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), cmp);

    std::vector<Hypothesis> next;
    for (std::size_t r = 0; r < keep; ++r) {
      const Candidate& c = cands[r];
      Hypothesis h;
      h.ids = live[c.parent].ids;
      h.ids.push_back(c.token);
      h.log_prob = c.log_prob;
      h.state = expansions[c.parent].state;
      h.finished = c.token == end_id;
      if (h.finished) {
        if (!best_finished || better(h.log_prob, h.ids, best_finished->log_prob, best_finished->ids)) {
          best_finished = std::move(h);
        }
      } else {
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
    // Scores only decrease, so a live prefix at or below the best finished
    // score can never overtake it.
    if (best_finished && !live.empty() && live.front().log_prob <= best_finished->log_prob) break;
  }

  if (best_finished) return strip_end(*best_finished, end_id);
  return strip_end(live.front(), end_id);
}

std::vector<Eigen::VectorXd> attention_alignment(const AnnotationSet& annotations, const DecoderParams& params,
                                                 const Vocabulary& vocab, const IdSequence& caption) {
  check_vocab(params, vocab);
  IdSequence target = caption;
  target.push_back(vocab.end_id());
  auto traces = forward_sequence(annotations, target, params, start_id(vocab));
  std::vector<Eigen::VectorXd> out;
  out.reserve(caption.size());
  for (std::size_t j = 0; j < caption.size(); ++j) out.push_back(std::move(traces[j].alpha));
  return out;
}

}  // namespace capforge
