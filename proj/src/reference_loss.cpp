#include "capforge/reference_loss.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "capforge/error.hpp"

namespace capforge {

namespace {

using Real = long double;
using Vec = std::vector<Real>;

Real sigmoid(Real x) { return 1.0L / (1.0L + std::exp(-x)); }

// out[r] = bias[r] + sum_k weight(r, k) * x[k], accumulated into `out`.
template <typename M>
void accumulate(const M& weight, const Vec& x, Vec& out) {
  for (Eigen::Index r = 0; r < weight.rows(); ++r) {
    Real s = 0.0L;
    for (Eigen::Index k = 0; k < weight.cols(); ++k) s += static_cast<Real>(weight(r, k)) * x[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(r)] += s;
  }
}

Vec from(const Eigen::VectorXd& v) { return Vec(v.data(), v.data() + v.size()); }

}  // namespace

long double reference_loss(const DecoderParams& p, const TrainingExample& example, double lambda, TokenId start_id) {
  const auto& rows = example.annotations.rows;
  const auto& target = example.target;
  const auto num_rows = static_cast<std::size_t>(rows.rows());
  const auto width = static_cast<std::size_t>(rows.cols());
  if (static_cast<int>(width) != p.dims.annotation) throw DimensionError("annotation width mismatch");

  std::vector<Vec> annot(num_rows, Vec(width));
  Vec mean(width, 0.0L);
  for (std::size_t i = 0; i < num_rows; ++i) {
    for (std::size_t k = 0; k < width; ++k) {
      annot[i][k] = rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
      mean[k] += annot[i][k];
    }
  }
  for (Real& v : mean) v /= static_cast<Real>(num_rows);

  Vec h = from(p.init_h_bias);
  Vec c = from(p.init_c_bias);
  accumulate(p.init_h_weight, mean, h);
  accumulate(p.init_c_weight, mean, c);
  for (Real& v : h) v = std::tanh(v);
  for (Real& v : c) v = std::tanh(v);

  Real nll = 0.0L;
  Vec mass(num_rows, 0.0L);
  for (std::size_t j = 0; j < target.size(); ++j) {
    const TokenId prev = j == 0 ? start_id : target[j - 1];
    if (prev < 0 || prev >= p.dims.vocab || target[j] < 0 || target[j] >= p.dims.vocab) {
      throw CorruptInputError("token id out of range");
    }

    Vec hidden_term(static_cast<std::size_t>(p.dims.attention), 0.0L);
    accumulate(p.att_hidden, h, hidden_term);
    Vec score(num_rows, 0.0L);
    for (std::size_t i = 0; i < num_rows; ++i) {
      Vec u = from(p.att_bias);
      accumulate(p.att_annotation, annot[i], u);
      for (std::size_t q = 0; q < u.size(); ++q) {
        score[i] += static_cast<Real>(p.att_score[static_cast<Eigen::Index>(q)]) * std::tanh(u[q] + hidden_term[q]);
      }
    }
    const Real top = *std::max_element(score.begin(), score.end());
    Real denom = 0.0L;
    for (Real& s : score) denom += (s = std::exp(s - top));
    Vec z(width, 0.0L);
    for (std::size_t i = 0; i < num_rows; ++i) {
      const Real alpha = score[i] / denom;
      mass[i] += alpha;
      for (std::size_t k = 0; k < width; ++k) z[k] += alpha * annot[i][k];
    }

    const Vec x = from(p.embedding.row(prev).transpose());
    std::array<Vec, kNumGates> gate;
    for (int g = 0; g < kNumGates; ++g) {
      gate[g] = from(p.gate_bias[g]);
      accumulate(p.gate_input[g], x, gate[g]);
      accumulate(p.gate_recurrent[g], h, gate[g]);
      accumulate(p.gate_context[g], z, gate[g]);
      for (Real& v : gate[g]) v = g == kCellGate ? std::tanh(v) : sigmoid(v);
    }
    for (std::size_t r = 0; r < h.size(); ++r) {
      c[r] = gate[kForgetGate][r] * c[r] + gate[kInputGate][r] * gate[kCellGate][r];
      h[r] = gate[kOutputGate][r] * std::tanh(c[r]);
    }

    Vec q = x;
    accumulate(p.out_hidden, h, q);
    accumulate(p.out_context, z, q);
    Vec logits = from(p.out_bias);
    accumulate(p.out_embed, q, logits);
    const Real lmax = *std::max_element(logits.begin(), logits.end());
    Real lse = 0.0L;
    for (Real v : logits) lse += std::exp(v - lmax);
    nll -= logits[static_cast<std::size_t>(target[j])] - lmax - std::log(lse);
  }

  Real penalty = 0.0L;
  for (Real m : mass) penalty += (1.0L - m) * (1.0L - m);
  return nll + static_cast<Real>(lambda) * penalty;
}

}  // namespace capforge
