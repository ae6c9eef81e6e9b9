#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "capforge/decoding.hpp"
#include "capforge/error.hpp"
#include "fixtures.hpp"

namespace capforge {
namespace {

using testing::random_annotations;
using testing::random_params;

Vocabulary vocab_of_size(int v) {
  std::vector<Vocabulary::Entry> entries = {{"<end>", 0}, {"<unk>", 0}};
  for (int i = 2; i < v; ++i) entries.push_back({"w" + std::to_string(i), 1});
  return Vocabulary(entries);
}

double sequence_log_prob(const AnnotationSet& a, const IdSequence& ids, const DecoderParams& p) {
  const auto traces = forward_sequence(a, ids, p, 0);
  double total = 0.0;
  for (std::size_t j = 0; j < ids.size(); ++j) total += traces[j].log_probs(ids[j]);
  return total;
}

struct Best {
  IdSequence ids;  // with the final <end>
  double log_prob = -INFINITY;
};

// Every caption of at most max_len - 1 non-end tokens followed by <end>,
// scored independently by teacher forcing.
Best enumerate_argmax(const AnnotationSet& a, const DecoderParams& p, int max_len) {
  const int v = p.dims.vocab;
  Best best;
  IdSequence prefix;
  std::function<void()> rec = [&]() {
    IdSequence full = prefix;
    full.push_back(0);
    const double lp = sequence_log_prob(a, full, p);
    if (lp > best.log_prob || (lp == best.log_prob && full < best.ids)) best = {full, lp};
    if (static_cast<int>(prefix.size()) + 1 >= max_len) return;
    for (TokenId t = 1; t < v; ++t) {
      prefix.push_back(t);
      rec();
      prefix.pop_back();
    }
  };
  rec();
  best.ids.pop_back();
  return best;
}

TEST(Greedy, EndFirstGivesEmptyCaption) {
  const DecoderDims dims{5, 3, 3, 4, 3};
  DecoderParams p = DecoderParams::zeros(dims);
  p.out_bias(0) = 5.0;
  Rng rng(1);
  const auto r = greedy_decode(random_annotations(rng, 3, 4), p, vocab_of_size(5), 50);
  EXPECT_TRUE(r.ids.empty());
  EXPECT_LT(r.log_prob, 0.0);
}

TEST(Greedy, CapsLengthWhenEndNeverWins) {
  const DecoderDims dims{5, 3, 3, 4, 3};
  DecoderParams p = DecoderParams::zeros(dims);
  p.out_bias(0) = -100.0;
  p.out_bias(3) = 1.0;
  Rng rng(2);
  const auto r = greedy_decode(random_annotations(rng, 3, 4), p, vocab_of_size(5), 3);
  EXPECT_EQ(r.ids, (IdSequence{3, 3, 3}));
}

TEST(Greedy, TiesGoToSmallerId) {
  const DecoderDims dims{4, 2, 2, 2, 2};
  DecoderParams p = DecoderParams::zeros(dims);
  p.out_bias << -9.0, 1.0, 1.0, 1.0;
  Rng rng(3);
  const auto r = greedy_decode(random_annotations(rng, 2, 2), p, vocab_of_size(4), 2);
  EXPECT_EQ(r.ids, (IdSequence{1, 1}));
}

TEST(Greedy, MatchesManualArgmaxTrace) {
  const DecoderDims dims{3, 3, 4, 3, 3};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = random_params(dims, seed, 1.5);
    Rng rng(seed + 1);
    const auto a = random_annotations(rng, 3, 3);
    DecoderState s = init_state(a, p);
    TokenId prev = 0;
    IdSequence want;
    double lp_total = 0.0;
    for (int t = 0; t < 6; ++t) {
      const auto att = attend(a, s.h, p);
      s = lstm_step(prev, s, att.z, p);
      const auto lp = output_log_probs(prev, s, att.z, p);
      Eigen::Index best = 0;
      for (Eigen::Index v = 1; v < 3; ++v)
        if (lp(v) > lp(best)) best = v;
      lp_total += lp(best);
      if (best == 0) break;
      want.push_back(static_cast<TokenId>(best));
      prev = static_cast<TokenId>(best);
    }
    const auto r = greedy_decode(a, p, vocab_of_size(3), 6);
    EXPECT_EQ(r.ids, want);
    EXPECT_NEAR(r.log_prob, lp_total, 1e-12);
  }
}

TEST(Beam, WidthOneIsGreedy) {
  const DecoderDims dims{6, 4, 5, 4, 4};
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto p = random_params(dims, seed, 1.0);
    Rng rng(seed + 7);
    const auto a = random_annotations(rng, 3, 4);
    const auto g = greedy_decode(a, p, vocab_of_size(6), 8);
    const auto b = beam_search(a, p, vocab_of_size(6), {1, 8});
    EXPECT_EQ(b.ids, g.ids) << seed;
    EXPECT_EQ(b.log_prob, g.log_prob) << seed;
  }
}

TEST(Beam, FullWidthMatchesEnumerationV3) {
  const DecoderDims dims{3, 3, 4, 3, 3};
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto p = random_params(dims, seed, 1.5);
    Rng rng(seed + 2);
    const auto a = random_annotations(rng, 3, 3);
    const Best want = enumerate_argmax(a, p, 3);
    const auto got = beam_search(a, p, vocab_of_size(3), {27, 3});
    EXPECT_EQ(got.ids, want.ids) << seed;
    EXPECT_NEAR(got.log_prob, want.log_prob, 1e-12) << seed;
  }
}

TEST(Beam, FullWidthMatchesEnumerationV4) {
  const DecoderDims dims{4, 4, 6, 5, 4};
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto p = random_params(dims, seed, 1.0);
    Rng rng(seed + 3);
    const auto a = random_annotations(rng, 3, 5);
    const Best want = enumerate_argmax(a, p, 4);
    const auto got = beam_search(a, p, vocab_of_size(4), {256, 4});
    EXPECT_EQ(got.ids, want.ids) << seed;
    EXPECT_NEAR(got.log_prob, want.log_prob, 1e-12) << seed;
  }
}

TEST(Beam, ReturnedLogProbMatchesTeacherForcedScore) {
  const DecoderDims dims{8, 4, 5, 4, 4};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = random_params(dims, seed, 1.0);
    Rng rng(seed + 4);
    const auto a = random_annotations(rng, 4, 4);
    const auto r = beam_search(a, p, vocab_of_size(8), {4, 10});
    for (TokenId id : r.ids) EXPECT_NE(id, 0);
    EXPECT_LE(r.log_prob, 0.0);
    if (r.ids.size() < 10) {
      IdSequence full = r.ids;
      full.push_back(0);
      EXPECT_NEAR(r.log_prob, sequence_log_prob(a, full, p), 1e-12);
    }
  }
}

// The random models here are the uniform(-0.5, 0.5) fixture distribution.
TEST(Beam, WidthFourNotWorseThanGreedy) {
  const DecoderDims dims{4, 4, 6, 5, 4};
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto p = random_params(dims, seed);
    Rng rng(seed + 5);
    const auto a = random_annotations(rng, 3, 5);
    const auto g = greedy_decode(a, p, vocab_of_size(4), 4);
    const auto b = beam_search(a, p, vocab_of_size(4), {4, 4});
    EXPECT_GE(b.log_prob, g.log_prob) << seed;
  }
}

// Beam search does not guarantee this: a wider beam can prune the prefix a
// narrower one would have kept. Kept as a plain property check over fixed
// seeds; known counterexamples are seeds 18 and 20 at width 2.
TEST(Beam, WidthMonotone) {
  const DecoderDims dims{4, 4, 6, 5, 4};
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto p = random_params(dims, seed);
    Rng rng(seed + 6);
    const auto a = random_annotations(rng, 3, 5);
    double prev = -INFINITY;
    for (int w = 1; w <= 6; ++w) {
      const double lp = beam_search(a, p, vocab_of_size(4), {w, 4}).log_prob;
      EXPECT_GE(lp, prev) << "seed " << seed << " width " << w;
      prev = lp;
    }
  }
}

TEST(Beam, UniformModelPrefersEmptyCaption) {
  const DecoderDims dims{5, 2, 2, 2, 2};
  Rng rng(8);
  const auto r = beam_search(random_annotations(rng, 2, 2), DecoderParams::zeros(dims), vocab_of_size(5), {4, 5});
  EXPECT_TRUE(r.ids.empty());
  EXPECT_NEAR(r.log_prob, -std::log(5.0), 1e-15);
}

TEST(Beam, RejectsBadConfigAndVocabMismatch) {
  const DecoderDims dims{5, 2, 2, 2, 2};
  Rng rng(9);
  const auto a = random_annotations(rng, 2, 2);
  const auto p = DecoderParams::zeros(dims);
  EXPECT_THROW(beam_search(a, p, vocab_of_size(5), {0, 5}), InvalidArgument);
  EXPECT_THROW(beam_search(a, p, vocab_of_size(5), {4, 0}), InvalidArgument);
  EXPECT_THROW(beam_search(a, p, vocab_of_size(6), {4, 5}), DimensionError);
  EXPECT_THROW(greedy_decode(a, p, vocab_of_size(5), 0), InvalidArgument);
}

TEST(AttentionAlignment, OneNormalizedRowPerWord) {
  const DecoderDims dims{6, 3, 4, 5, 3};
  const auto p = random_params(dims, 10, 1.0);
  Rng rng(11);
  const auto a = random_annotations(rng, 4, 5);
  const IdSequence caption = {3, 2, 5};
  const auto rows = attention_alignment(a, p, vocab_of_size(6), caption);
  ASSERT_EQ(rows.size(), 3u);
  const auto traces = forward_sequence(a, {3, 2, 5, 0}, p, 0);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(rows[j].size(), 4);
    EXPECT_NEAR(rows[j].sum(), 1.0, 1e-10);
    EXPECT_EQ(rows[j], traces[j].alpha);
  }
}

}  // namespace
}  // namespace capforge
