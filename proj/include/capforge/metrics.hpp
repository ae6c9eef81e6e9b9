#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "capforge/vocab.hpp"

namespace capforge {

using Ngram = std::vector<std::string>;
using NgramCounts = std::map<Ngram, int>;

struct EvalItem {
  std::string image_id;
  TokenList candidate;
  std::vector<TokenList> references;
};

struct EvalCorpus {
  std::vector<EvalItem> items;
};

struct EvalResult {
  std::array<double, 4> bleu{};  // BLEU-1..4 in [0, 1]
  double rouge_l = 0.0;          // [0, 1]
  double cider = 0.0;            // CIDEr-D x 100
};

inline constexpr double kRougeBeta = 1.2;
inline constexpr double kCiderSigma = 6.0;

NgramCounts ngram_counts(const TokenList& tokens, int n);

// Pooled corpus statistics behind BLEU.
struct BleuStats {
  std::array<std::int64_t, 4> clipped{};  // matched n-grams, clipped per item
  std::array<std::int64_t, 4> total{};    // candidate n-grams
  std::int64_t candidate_len = 0;
  std::int64_t reference_len = 0;  // closest reference length, ties to shorter
};

BleuStats bleu_stats(const EvalCorpus& corpus);
std::array<double, 4> bleu(const EvalCorpus& corpus);

std::size_t lcs_len(const TokenList& a, const TokenList& b);
double rouge_l_item(const TokenList& candidate, const std::vector<TokenList>& references);
double rouge_l(const EvalCorpus& corpus);

// Per-item CIDEr-D (including its factor of 10, before the x100 report
// scaling). Requires at least two items.
std::vector<double> cider_item_scores(const EvalCorpus& corpus);
double cider(const EvalCorpus& corpus);

EvalResult evaluate(const EvalCorpus& corpus);

// `metric<TAB>value` lines with four decimals.
std::string format_results(const EvalResult& result);

}  // namespace capforge
