#include <gtest/gtest.h>

#include <cmath>

#include "capforge/error.hpp"
#include "capforge/metrics.hpp"
#include "capforge/rng.hpp"
#include "metric_oracles.hpp"

namespace capforge {
namespace {

using oracle::item;

EvalCorpus random_corpus(Rng& rng, int items, int vocab) {
  EvalCorpus c;
  auto sentence = [&](int max_len) {
    TokenList t;
    const auto len = 1 + rng.below(static_cast<std::uint64_t>(max_len));
    for (std::uint64_t i = 0; i < len; ++i) t.push_back("t" + std::to_string(rng.below(static_cast<std::uint64_t>(vocab))));
    return t;
  };
  for (int i = 0; i < items; ++i) {
    EvalItem it{std::to_string(i), sentence(9), {}};
    const auto refs = 1 + rng.below(4);
    for (std::uint64_t r = 0; r < refs; ++r) it.references.push_back(sentence(11));
    c.items.push_back(std::move(it));
  }
  return c;
}

TEST(NgramCounts, Examples) {
  EXPECT_EQ(ngram_counts({"a", "b", "a"}, 1), (NgramCounts{{{"a"}, 2}, {{"b"}, 1}}));
  EXPECT_EQ(ngram_counts({"a", "b", "a"}, 2), (NgramCounts{{{"a", "b"}, 1}, {{"b", "a"}, 1}}));
  EXPECT_TRUE(ngram_counts({"a"}, 2).empty());
  EXPECT_THROW(ngram_counts({"a"}, 0), InvalidArgument);
}

TEST(Bleu, PerfectMatch) {
  const EvalCorpus c{{item("1", "a cat on a mat today", {"a cat on a mat today"}),
                      item("2", "two dogs play in the park", {"two dogs play in the park"})}};
  for (double b : bleu(c)) EXPECT_DOUBLE_EQ(b, 1.0);
}

TEST(Bleu, ClippedUnigramPrecision) {
  const EvalCorpus c{{item("1", "the the the the the the the", {"the cat is on the mat"})}};
  const BleuStats s = bleu_stats(c);
  EXPECT_EQ(s.clipped[0], 2);
  EXPECT_EQ(s.total[0], 7);
  EXPECT_EQ(static_cast<double>(s.clipped[0]) / static_cast<double>(s.total[0]), 2.0 / 7.0);
  // c = 7 >= r = 6, so no brevity penalty.
  EXPECT_DOUBLE_EQ(bleu(c)[0], 2.0 / 7.0);
}

TEST(Bleu, ClosestReferenceLengthTiesToShorter) {
  const EvalCorpus c{{item("1", "a b c d", {"a b c", "a b c d e"})}};
  EXPECT_EQ(bleu_stats(c).reference_len, 3);
}

TEST(Bleu, BrevityPenalty) {
  const EvalCorpus c{{item("1", "a b", {"a b c d"})}};
  EXPECT_NEAR(bleu(c)[0], std::exp(1.0 - 2.0), 1e-15);
}

TEST(Bleu, TwoItemCorpusMatchesOracle) {
  const EvalCorpus c{{item("1", "a dog sits on the red mat", {"a dog is on the mat", "the dog sits on a red mat"}),
                      item("2", "people walk down a busy street", {"people walking on a busy street"})}};
  const auto got = bleu(c);
  const auto want = oracle::bleu(c);
  for (int n = 0; n < 4; ++n) EXPECT_NEAR(got[n], want[n], 1e-12) << n;
}

TEST(Bleu, RandomCorporaMatchOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = random_corpus(rng, 1 + static_cast<int>(rng.below(6)), 5);
    const auto got = bleu(c);
    const auto want = oracle::bleu(c);
    for (int n = 0; n < 4; ++n) {
      EXPECT_NEAR(got[n], want[n], 1e-12);
      EXPECT_GE(got[n], 0.0);
      EXPECT_LE(got[n], 1.0);
    }
  }
}

TEST(Lcs, Examples) {
  const TokenList x = {"a", "b", "c", "b"};
  EXPECT_EQ(lcs_len(x, x), 4u);
  EXPECT_EQ(lcs_len(x, {}), 0u);
  EXPECT_EQ(lcs_len({"a", "b", "c"}, {"a", "c"}), 2u);
}

TEST(Lcs, MatchesSubsequenceEnumeration) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto c = random_corpus(rng, 1, 4);
    const auto& a = c.items[0].candidate;
    const auto& b = c.items[0].references[0];
    EXPECT_EQ(lcs_len(a, b), oracle::lcs(a, b));
    EXPECT_EQ(lcs_len(a, b), lcs_len(b, a));
  }
}

TEST(RougeL, Examples) {
  EXPECT_DOUBLE_EQ(rouge_l({{item("1", "a b c", {"a b c"})}}), 1.0);
  EXPECT_EQ(rouge_l({{item("1", "a b c", {"x y"})}}), 0.0);
  const double f = rouge_l({{item("1", "a b c d", {"a c d"})}});
  EXPECT_NEAR(f, 2.44 * 0.75 / (1.0 + 1.44 * 0.75), 1e-15);
  EXPECT_NEAR(f, 0.87980, 1e-5);
  // Max over references, mean over items.
  EXPECT_DOUBLE_EQ(rouge_l({{item("1", "a b", {"x", "a b"}), item("2", "q", {"z"})}}), 0.5);
}

TEST(RougeL, RandomCorporaMatchOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = random_corpus(rng, 1 + static_cast<int>(rng.below(5)), 5);
    const double got = rouge_l(c);
    EXPECT_NEAR(got, oracle::rouge_l(c), 1e-12);
    EXPECT_GE(got, 0.0);
    EXPECT_LE(got, 1.0);
  }
}

TEST(MetricProperties, RenamingInvariance) {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const auto c = random_corpus(rng, 3, 6);
    EvalCorpus renamed = c;
    auto rename = [](TokenList& t) {
      for (auto& s : t) s = "zz" + s + "q";
    };
    for (auto& it : renamed.items) {
      rename(it.candidate);
      for (auto& r : it.references) rename(r);
    }
    EXPECT_EQ(bleu(c), bleu(renamed));
    EXPECT_EQ(rouge_l(c), rouge_l(renamed));
  }
}

TEST(MetricProperties, DuplicateReferenceNeverHurts) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto c = random_corpus(rng, 3, 5);
    EvalCorpus dup = c;
    auto& refs = dup.items[trial % 3].references;
    refs.push_back(refs[rng.below(refs.size())]);
    const auto a = bleu_stats(c);
    const auto b = bleu_stats(dup);
    for (int n = 0; n < 4; ++n) EXPECT_GE(b.clipped[n], a.clipped[n]);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_GE(rouge_l_item(dup.items[i].candidate, dup.items[i].references),
                rouge_l_item(c.items[i].candidate, c.items[i].references));
    }
  }
}

TEST(Cider, NoSharedNgramScoresZero) {
  const EvalCorpus c{{item("1", "x y z", {"a b c"}), item("2", "d e", {"d e f"})}};
  EXPECT_EQ(cider_item_scores(c)[0], 0.0);
}

TEST(Cider, SelfMatchIsBestForItsReferences) {
  const EvalCorpus base{{item("1", "a dog on grass", {"a dog on grass"}), item("2", "a cat on a bed", {"a cat on a bed"}),
                         item("3", "red car in the street", {"red car in the street"})}};
  const auto self = cider_item_scores(base);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      if (i == j) continue;
      EvalCorpus swapped = base;
      swapped.items[i].candidate = base.items[j].candidate;
      EXPECT_GT(self[i], cider_item_scores(swapped)[i]) << i << " " << j;
    }
  }
}

TEST(Cider, ThreeItemToyMatchesOracle) {
  const EvalCorpus c{{item("1", "a dog runs", {"a dog runs fast", "dog running"}),
                      item("2", "a cat sleeps", {"a cat is sleeping", "the cat sleeps"}),
                      item("3", "a bird flies", {"a bird in the sky"})}};
  const auto got = cider_item_scores(c);
  const auto want = oracle::cider_items(c);
  ASSERT_EQ(got.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(Cider, RandomCorporaMatchOracleAndNonNegative) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = random_corpus(rng, 2 + static_cast<int>(rng.below(5)), 6);
    const double got = cider(c);
    EXPECT_NEAR(got, oracle::cider(c), 1e-9);
    EXPECT_GE(got, 0.0);
  }
}

TEST(Cider, NeedsTwoItems) { EXPECT_THROW(cider({{item("1", "a", {"a"})}}), InvalidArgument); }

TEST(Evaluate, PerfectAndEmptyCandidates) {
  const EvalCorpus perfect{{item("1", "a cat on a mat today", {"a cat on a mat today", "x"}),
                            item("2", "two dogs play in the park", {"y", "two dogs play in the park"})}};
  const auto r = evaluate(perfect);
  for (double b : r.bleu) EXPECT_DOUBLE_EQ(b, 1.0);
  EXPECT_DOUBLE_EQ(r.rouge_l, 1.0);

  EvalCorpus empty = perfect;
  for (auto& it : empty.items) it.candidate.clear();
  const auto z = evaluate(empty);
  for (double b : z.bleu) EXPECT_EQ(b, 0.0);
  EXPECT_EQ(z.rouge_l, 0.0);
  EXPECT_EQ(z.cider, 0.0);
}

TEST(Evaluate, FrozenFiveItemGolden) {
  // Produced by the oracles in metric_oracles.hpp.
  const auto r = evaluate(oracle::five_item_fixture());
  EXPECT_NEAR(r.bleu[0], 0.8663117027, 1e-6);
  EXPECT_NEAR(r.bleu[1], 0.7804474201, 1e-6);
  EXPECT_NEAR(r.bleu[2], 0.5671241797, 1e-6);
  EXPECT_NEAR(r.bleu[3], 0.3984716205, 1e-6);
  EXPECT_NEAR(r.rouge_l, 0.7447087404, 1e-6);
  EXPECT_NEAR(r.cider, 240.8942535752, 1e-6);
}

TEST(Evaluate, ResultsFormat) {
  EvalResult r;
  r.bleu = {1.0, 0.5, 0.25, 0.125};
  r.rouge_l = 0.87980;
  r.cider = 85.0;
  EXPECT_EQ(format_results(r),
            "# capforge scores v1\nBleu_1\t1.0000\nBleu_2\t0.5000\nBleu_3\t0.2500\nBleu_4\t0.1250\n"
            "ROUGE_L\t0.8798\nCIDEr\t85.0000\n");
}

}  // namespace
}  // namespace capforge
