#include "capforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>

#include "capforge/error.hpp"
#include "capforge/text_io.hpp"

namespace capforge {

namespace {

void require_items(const EvalCorpus& corpus, std::size_t min_items, const char* metric) {
  if (corpus.items.size() < min_items) {
    throw InvalidArgument(std::string(metric) + " needs at least " + std::to_string(min_items) + " item(s)");
  }
  for (const auto& item : corpus.items) {
    if (item.references.empty()) throw InvalidArgument("item " + item.image_id + " has no references");
  }
}

struct TfIdf {
  std::array<std::map<Ngram, double>, 4> vec;
  std::array<double, 4> norm{};
  std::size_t length = 0;
};

}  // namespace

NgramCounts ngram_counts(const TokenList& tokens, int n) {
  if (n < 1) throw InvalidArgument("n-gram order must be >= 1");
  NgramCounts counts;
  const auto order = static_cast<std::size_t>(n);
  for (std::size_t i = 0; i + order <= tokens.size(); ++i) {
    ++counts[Ngram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                   tokens.begin() + static_cast<std::ptrdiff_t>(i + order))];
  }
  return counts;
}

BleuStats bleu_stats(const EvalCorpus& corpus) {
  require_items(corpus, 1, "BLEU");
  BleuStats s;
  for (const auto& item : corpus.items) {
    const auto c = static_cast<std::int64_t>(item.candidate.size());
    s.candidate_len += c;
    std::int64_t closest = -1;
    for (const auto& ref : item.references) {
      const auto r = static_cast<std::int64_t>(ref.size());
      if (closest < 0 || std::llabs(r - c) < std::llabs(closest - c) ||
          (std::llabs(r - c) == std::llabs(closest - c) && r < closest)) {
        closest = r;
      }
    }
    s.reference_len += closest;

    for (int n = 1; n <= 4; ++n) {
      NgramCounts max_ref;
      for (const auto& ref : item.references) {
        for (const auto& [gram, cnt] : ngram_counts(ref, n)) max_ref[gram] = std::max(max_ref[gram], cnt);
      }
      for (const auto& [gram, cnt] : ngram_counts(item.candidate, n)) {
        s.total[n - 1] += cnt;
        const auto it = max_ref.find(gram);
        if (it != max_ref.end()) s.clipped[n - 1] += std::min(cnt, it->second);
      }
    }
  }
  return s;
}

std::array<double, 4> bleu(const EvalCorpus& corpus) {
  const BleuStats s = bleu_stats(corpus);
  std::array<double, 4> out{};
  if (s.candidate_len == 0) return out;
  const double bp = s.candidate_len < s.reference_len
                        ? std::exp(1.0 - static_cast<double>(s.reference_len) / static_cast<double>(s.candidate_len))
                        : 1.0;
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (s.clipped[n] == 0) {
      // A zero precision zeroes this and every higher order.
      break;
    }
    log_sum += std::log(static_cast<double>(s.clipped[n]) / static_cast<double>(s.total[n]));
    out[n] = bp * std::exp(log_sum / (n + 1));
  }
  return out;
}

std::size_t lcs_len(const TokenList& a, const TokenList& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l_item(const TokenList& candidate, const std::vector<TokenList>& references) {
  double best = 0.0;
  const double beta2 = kRougeBeta * kRougeBeta;
  for (const auto& ref : references) {
    const std::size_t l = lcs_len(candidate, ref);
    if (l == 0) continue;
    const double p = static_cast<double>(l) / static_cast<double>(candidate.size());
    const double r = static_cast<double>(l) / static_cast<double>(ref.size());
    best = std::max(best, (1.0 + beta2) * p * r / (r + beta2 * p));
  }
  return best;
}

double rouge_l(const EvalCorpus& corpus) {
  require_items(corpus, 1, "ROUGE-L");
  double sum = 0.0;
  for (const auto& item : corpus.items) sum += rouge_l_item(item.candidate, item.references);
  return sum / static_cast<double>(corpus.items.size());
}

std::vector<double> cider_item_scores(const EvalCorpus& corpus) {
  require_items(corpus, 2, "CIDEr");

  std::map<Ngram, int> doc_freq;
  for (const auto& item : corpus.items) {
    std::set<Ngram> present;
    for (const auto& ref : item.references) {
      for (int n = 1; n <= 4; ++n) {
        for (const auto& entry : ngram_counts(ref, n)) present.insert(entry.first);
      }
    }
    for (const auto& gram : present) ++doc_freq[gram];
  }
  const double log_items = std::log(static_cast<double>(corpus.items.size()));

  auto tfidf = [&](const TokenList& tokens) {
    TfIdf t;
    t.length = tokens.size();
    for (int n = 1; n <= 4; ++n) {
      for (const auto& [gram, tf] : ngram_counts(tokens, n)) {
        const auto it = doc_freq.find(gram);
        const double df = it == doc_freq.end() ? 0.0 : it->second;
        const double w = tf * (log_items - std::log(std::max(1.0, df)));
        t.vec[n - 1][gram] = w;
        t.norm[n - 1] += w * w;
      }
    }
    for (double& v : t.norm) v = std::sqrt(v);
    return t;
  };

  std::vector<double> scores;
  scores.reserve(corpus.items.size());
  for (const auto& item : corpus.items) {
    const TfIdf cand = tfidf(item.candidate);
    std::array<double, 4> per_order{};
    for (const auto& ref_tokens : item.references) {
      const TfIdf ref = tfidf(ref_tokens);
      const double delta = static_cast<double>(cand.length) - static_cast<double>(ref.length);
      const double penalty = std::exp(-(delta * delta) / (2.0 * kCiderSigma * kCiderSigma));
      for (int n = 0; n < 4; ++n) {
        double dot = 0.0;
        for (const auto& [gram, w] : cand.vec[n]) {
          const auto it = ref.vec[n].find(gram);
          if (it != ref.vec[n].end()) dot += std::min(w, it->second) * it->second;
        }
        if (cand.norm[n] != 0.0 && ref.norm[n] != 0.0) dot /= cand.norm[n] * ref.norm[n];
        per_order[n] += dot * penalty;
      }
    }
    double mean = 0.0;
    for (double v : per_order) mean += v;
    mean /= 4.0;
    scores.push_back(10.0 * mean / static_cast<double>(item.references.size()));
  }
  return scores;
}

double cider(const EvalCorpus& corpus) {
  const auto scores = cider_item_scores(corpus);
  double sum = 0.0;
  for (double s : scores) sum += s;
  return 100.0 * sum / static_cast<double>(scores.size());
}

EvalResult evaluate(const EvalCorpus& corpus) {
  EvalResult r;
  r.bleu = bleu(corpus);
  r.rouge_l = rouge_l(corpus);
  r.cider = cider(corpus);
  return r;
}

std::string format_results(const EvalResult& result) {
  std::string out = "# capforge scores v" + std::string(kVersion) + "\n";
  for (int n = 0; n < 4; ++n) out += "Bleu_" + std::to_string(n + 1) + '\t' + format_fixed(result.bleu[n], 4) + '\n';
  out += "ROUGE_L\t" + format_fixed(result.rouge_l, 4) + '\n';
  out += "CIDEr\t" + format_fixed(result.cider, 4) + '\n';
  return out;
}

}  // namespace capforge
