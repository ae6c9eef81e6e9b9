#include "capforge/decoder.hpp"

#include <cmath>

#include "capforge/error.hpp"
#include "capforge/rng.hpp"

namespace capforge {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

VectorXd sigmoid(const VectorXd& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

VectorXd softmax(const VectorXd& x) {
  VectorXd e = (x.array() - x.maxCoeff()).exp().matrix();
  return e / e.sum();
}

VectorXd log_softmax(const VectorXd& x) {
  const double mx = x.maxCoeff();
  const double lse = std::log((x.array() - mx).exp().sum());
  return (x.array() - mx - lse).matrix();
}

void check_token(TokenId id, const DecoderDims& dims) {
  if (id < 0 || id >= dims.vocab) {
    throw CorruptInputError("token id " + std::to_string(id) + " out of range for V=" + std::to_string(dims.vocab));
  }
}

void check_annotations(const AnnotationSet& annotations, const DecoderDims& dims) {
  if (annotations.num_rows() < 1) throw DimensionError("annotation set has no rows");
  if (annotations.width() != dims.annotation) {
    throw DimensionError("annotation width " + std::to_string(annotations.width()) + " does not match decoder D=" +
                         std::to_string(dims.annotation));
  }
}

void check_vector(const VectorXd& v, int expected, const char* what) {
  if (v.size() != expected) {
    throw DimensionError(std::string(what) + " has size " + std::to_string(v.size()) + ", expected " +
                         std::to_string(expected));
  }
}

VectorXd mean_row(const AnnotationSet& annotations) { return annotations.rows.colwise().mean().transpose(); }

VectorXd output_logits(const VectorXd& x, const VectorXd& h, const VectorXd& z, const DecoderParams& p) {
  const VectorXd q = x + p.out_hidden * h + p.out_context * z;
  return p.out_embed * q + p.out_bias;
}

// Gate activations for one LSTM step; index with Gate.
std::array<VectorXd, kNumGates> gate_activations(const VectorXd& x, const VectorXd& h_prev, const VectorXd& z,
                                                 const DecoderParams& p) {
  std::array<VectorXd, kNumGates> act;
  for (int g = 0; g < kNumGates; ++g) {
    const VectorXd pre = p.gate_input[g] * x + p.gate_recurrent[g] * h_prev + p.gate_context[g] * z + p.gate_bias[g];
    act[g] = g == kCellGate ? VectorXd(pre.array().tanh()) : sigmoid(pre);
  }
  return act;
}

Attention attend_projected(const MatrixXd& rows, const MatrixXd& projected, const VectorXd& h_prev,
                           const DecoderParams& p) {
  Attention out;
  const VectorXd hidden_term = p.att_hidden * h_prev;
  out.hidden = (projected.rowwise() + hidden_term.transpose()).array().tanh().matrix();
  const VectorXd scores = out.hidden * p.att_score;
  out.alpha = softmax(scores);
  out.z = rows.transpose() * out.alpha;
  return out;
}

MatrixXd project_rows(const AnnotationSet& annotations, const DecoderParams& p) {
  return (annotations.rows * p.att_annotation.transpose()).rowwise() + p.att_bias.transpose();
}

}  // namespace

void validate(const DecoderDims& dims) {
  if (dims.vocab < 1 || dims.embed < 1 || dims.hidden < 1 || dims.annotation < 1 || dims.attention < 1) {
    throw InvalidArgument("decoder dims must all be >= 1");
  }
}

DecoderParams DecoderParams::zeros(const DecoderDims& d) {
  validate(d);
  DecoderParams p;
  p.dims = d;
  p.embedding = MatrixXd::Zero(d.vocab, d.embed);
  for (int g = 0; g < kNumGates; ++g) {
    p.gate_input[g] = MatrixXd::Zero(d.hidden, d.embed);
    p.gate_recurrent[g] = MatrixXd::Zero(d.hidden, d.hidden);
    p.gate_context[g] = MatrixXd::Zero(d.hidden, d.annotation);
    p.gate_bias[g] = VectorXd::Zero(d.hidden);
  }
  p.att_annotation = MatrixXd::Zero(d.attention, d.annotation);
  p.att_hidden = MatrixXd::Zero(d.attention, d.hidden);
  p.att_bias = VectorXd::Zero(d.attention);
  p.att_score = VectorXd::Zero(d.attention);
  p.init_h_weight = MatrixXd::Zero(d.hidden, d.annotation);
  p.init_h_bias = VectorXd::Zero(d.hidden);
  p.init_c_weight = MatrixXd::Zero(d.hidden, d.annotation);
  p.init_c_bias = VectorXd::Zero(d.hidden);
  p.out_embed = MatrixXd::Zero(d.vocab, d.embed);
  p.out_hidden = MatrixXd::Zero(d.embed, d.hidden);
  p.out_context = MatrixXd::Zero(d.embed, d.annotation);
  p.out_bias = VectorXd::Zero(d.vocab);
  return p;
}

DecoderParams DecoderParams::glorot(const DecoderDims& dims, std::uint64_t seed) {
  DecoderParams p = zeros(dims);
  Rng rng(seed);
  auto fill = [&rng](Eigen::Index fan_in, Eigen::Index fan_out, auto& t) {
    const double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-r, r);
  };
  visit(p, [&](const std::string& name, auto& t) {
    if (name.find("bias") != std::string::npos) return;
    if (name == "att_score") {
      fill(t.size(), 1, t);
    } else {
      fill(t.cols(), t.rows(), t);
    }
  });
  return p;
}

std::vector<std::span<double>> DecoderParams::tensors() {
  std::vector<std::span<double>> out;
  visit(*this, [&](const std::string&, auto& t) { out.emplace_back(t.data(), static_cast<std::size_t>(t.size())); });
  return out;
}

std::vector<std::span<const double>> DecoderParams::tensors() const {
  std::vector<std::span<const double>> out;
  visit(*this, [&](const std::string&, const auto& t) {
    out.emplace_back(t.data(), static_cast<std::size_t>(t.size()));
  });
  return out;
}

std::vector<std::string> DecoderParams::tensor_names() const {
  std::vector<std::string> out;
  visit(*this, [&](const std::string& name, const auto&) { out.push_back(name); });
  return out;
}

std::size_t DecoderParams::num_coordinates() const {
  std::size_t n = 0;
  for (auto t : tensors()) n += t.size();
  return n;
}

bool DecoderParams::all_finite() const {
  for (auto t : tensors()) {
    for (double v : t) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

void DecoderParams::add_scaled(const DecoderParams& other, double s) {
  if (!(dims == other.dims)) throw DimensionError("parameter sets have different dims");
  auto dst = tensors();
  const auto src = other.tensors();
  for (std::size_t k = 0; k < dst.size(); ++k) {
    for (std::size_t i = 0; i < dst[k].size(); ++i) dst[k][i] += s * src[k][i];
  }
}

void DecoderParams::scale(double factor) {
  for (auto t : tensors()) {
    for (double& v : t) v *= factor;
  }
}

bool operator==(const DecoderParams& a, const DecoderParams& b) {
  if (!(a.dims == b.dims)) return false;
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  for (std::size_t k = 0; k < ta.size(); ++k) {
    if (ta[k].size() != tb[k].size()) return false;
    for (std::size_t i = 0; i < ta[k].size(); ++i) {
      if (ta[k][i] != tb[k][i]) return false;
    }
  }
  return true;
}

DecoderState init_state(const AnnotationSet& annotations, const DecoderParams& params) {
  check_annotations(annotations, params.dims);
  const VectorXd mean = mean_row(annotations);
  return {(params.init_h_weight * mean + params.init_h_bias).array().tanh().matrix(),
          (params.init_c_weight * mean + params.init_c_bias).array().tanh().matrix()};
}

Attention attend(const AnnotationSet& annotations, const VectorXd& h_prev, const DecoderParams& params) {
  check_annotations(annotations, params.dims);
  check_vector(h_prev, params.dims.hidden, "hidden state");
  return attend_projected(annotations.rows, project_rows(annotations, params), h_prev, params);
}

DecoderState lstm_step(TokenId w_prev, const DecoderState& prev, const VectorXd& z, const DecoderParams& params) {
  check_token(w_prev, params.dims);
  check_vector(prev.h, params.dims.hidden, "hidden state");
  check_vector(prev.c, params.dims.hidden, "cell state");
  check_vector(z, params.dims.annotation, "context vector");
  const VectorXd x = params.embedding.row(w_prev).transpose();
  const auto act = gate_activations(x, prev.h, z, params);
  DecoderState next;
  next.c = act[kForgetGate].cwiseProduct(prev.c) + act[kInputGate].cwiseProduct(act[kCellGate]);
  next.h = act[kOutputGate].cwiseProduct(VectorXd(next.c.array().tanh()));
  return next;
}

VectorXd output_log_probs(TokenId w_prev, const DecoderState& state, const VectorXd& z, const DecoderParams& params) {
  check_token(w_prev, params.dims);
  check_vector(state.h, params.dims.hidden, "hidden state");
  check_vector(z, params.dims.annotation, "context vector");
  return log_softmax(output_logits(params.embedding.row(w_prev).transpose(), state.h, z, params));
}

StepDecoder::StepDecoder(const DecoderParams& params, const AnnotationSet& annotations)
    : params_(params), annotations_(annotations) {
  check_annotations(annotations, params.dims);
  projected_ = project_rows(annotations, params);
}

DecoderState StepDecoder::initial_state() const { return init_state(annotations_, params_); }

Attention StepDecoder::attend(const VectorXd& h_prev) const {
  return attend_projected(annotations_.rows, projected_, h_prev, params_);
}

StepTrace StepDecoder::step(TokenId w_prev, const DecoderState& prev) const {
  check_token(w_prev, params_.dims);
  StepTrace tr;
  Attention att = attend(prev.h);
  const VectorXd x = params_.embedding.row(w_prev).transpose();
  tr.gates = gate_activations(x, prev.h, att.z, params_);
  tr.state.c = tr.gates[kForgetGate].cwiseProduct(prev.c) + tr.gates[kInputGate].cwiseProduct(tr.gates[kCellGate]);
  tr.state.h = tr.gates[kOutputGate].cwiseProduct(VectorXd(tr.state.c.array().tanh()));
  tr.log_probs = log_softmax(output_logits(x, tr.state.h, att.z, params_));
  tr.alpha = std::move(att.alpha);
  tr.z = std::move(att.z);
  tr.att_hidden = std::move(att.hidden);
  return tr;
}

std::vector<StepTrace> forward_sequence(const AnnotationSet& annotations, const IdSequence& target_ids,
                                        const DecoderParams& params, TokenId start_id) {
  if (target_ids.empty()) throw InvalidArgument("target sequence is empty");
  for (TokenId id : target_ids) check_token(id, params.dims);
  const StepDecoder decoder(params, annotations);
  std::vector<StepTrace> traces;
  traces.reserve(target_ids.size());
  DecoderState state = decoder.initial_state();
  for (std::size_t j = 0; j < target_ids.size(); ++j) {
    traces.push_back(decoder.step(j == 0 ? start_id : target_ids[j - 1], state));
    state = traces.back().state;
  }
  return traces;
}

DecoderGrads backward_sequence(const AnnotationSet& annotations, const IdSequence& target_ids,
                               const DecoderParams& p, const std::vector<StepTrace>& traces, double lambda,
                               TokenId start_id) {
  check_annotations(annotations, p.dims);
  if (traces.size() != target_ids.size()) throw DimensionError("trace count does not match target length");
  const MatrixXd& rows = annotations.rows;
  const Eigen::Index num_rows = rows.rows();
  const int hidden = p.dims.hidden;

  DecoderGrads g = DecoderParams::zeros(p.dims);

  // d penalty / d alpha_{j,i} does not depend on j.
  VectorXd mass = VectorXd::Zero(num_rows);
  for (const auto& tr : traces) mass += tr.alpha;
  const VectorXd penalty_grad = -2.0 * lambda * (VectorXd::Ones(num_rows) - mass);

  const DecoderState init = init_state(annotations, p);
  VectorXd dh_next = VectorXd::Zero(hidden);
  VectorXd dc_next = VectorXd::Zero(hidden);

  for (std::size_t jj = traces.size(); jj-- > 0;) {
    const StepTrace& tr = traces[jj];
    const TokenId w_prev = jj == 0 ? start_id : target_ids[jj - 1];
    check_token(w_prev, p.dims);
    check_token(target_ids[jj], p.dims);
    const VectorXd& h_prev = jj == 0 ? init.h : traces[jj - 1].state.h;
    const VectorXd& c_prev = jj == 0 ? init.c : traces[jj - 1].state.c;
    const VectorXd x = p.embedding.row(w_prev).transpose();
    const VectorXd& h = tr.state.h;
    const VectorXd& z = tr.z;

    // Output layer.
    VectorXd dlogits = tr.log_probs.array().exp().matrix();
    dlogits[target_ids[jj]] -= 1.0;
    const VectorXd q = x + p.out_hidden * h + p.out_context * z;
    g.out_bias += dlogits;
    g.out_embed.noalias() += dlogits * q.transpose();
    const VectorXd dq = p.out_embed.transpose() * dlogits;
    VectorXd dx = dq;
    g.out_hidden.noalias() += dq * h.transpose();
    g.out_context.noalias() += dq * z.transpose();
    const VectorXd dh = p.out_hidden.transpose() * dq + dh_next;
    VectorXd dz = p.out_context.transpose() * dq;

    // LSTM cell.
    const auto& in = tr.gates[kInputGate];
    const auto& fg = tr.gates[kForgetGate];
    const auto& cand = tr.gates[kCellGate];
    const auto& og = tr.gates[kOutputGate];
    const VectorXd tanh_c = tr.state.c.array().tanh().matrix();
    const VectorXd dc = (dh.array() * og.array() * (1.0 - tanh_c.array().square())).matrix() + dc_next;

    std::array<VectorXd, kNumGates> dpre;
    dpre[kInputGate] = (dc.array() * cand.array() * in.array() * (1.0 - in.array())).matrix();
    dpre[kForgetGate] = (dc.array() * c_prev.array() * fg.array() * (1.0 - fg.array())).matrix();
    dpre[kCellGate] = (dc.array() * in.array() * (1.0 - cand.array().square())).matrix();
    dpre[kOutputGate] = (dh.array() * tanh_c.array() * og.array() * (1.0 - og.array())).matrix();
    const VectorXd dc_prev = dc.cwiseProduct(fg);

    VectorXd dh_prev = VectorXd::Zero(hidden);
    for (int k = 0; k < kNumGates; ++k) {
      g.gate_input[k].noalias() += dpre[k] * x.transpose();
      g.gate_recurrent[k].noalias() += dpre[k] * h_prev.transpose();
      g.gate_context[k].noalias() += dpre[k] * z.transpose();
      g.gate_bias[k] += dpre[k];
      dx.noalias() += p.gate_input[k].transpose() * dpre[k];
      dh_prev.noalias() += p.gate_recurrent[k].transpose() * dpre[k];
      dz.noalias() += p.gate_context[k].transpose() * dpre[k];
    }
    g.embedding.row(w_prev) += dx.transpose();

    // Attention: z = rows^T alpha, alpha = softmax(T v), T = tanh(proj + W_ah h_prev).
    const VectorXd dalpha = rows * dz + penalty_grad;
    const VectorXd dscore = tr.alpha.cwiseProduct((dalpha.array() - tr.alpha.dot(dalpha)).matrix());
    const MatrixXd& hid = tr.att_hidden;
    g.att_score.noalias() += hid.transpose() * dscore;
    const MatrixXd dhid_pre =
        ((dscore * p.att_score.transpose()).array() * (1.0 - hid.array().square())).matrix();
    g.att_annotation.noalias() += dhid_pre.transpose() * rows;
    const VectorXd col_sum = dhid_pre.colwise().sum().transpose();
    g.att_hidden.noalias() += col_sum * h_prev.transpose();
    g.att_bias += col_sum;
    dh_prev.noalias() += p.att_hidden.transpose() * col_sum;

    dh_next = std::move(dh_prev);
    dc_next = dc_prev;
  }

  const VectorXd mean = mean_row(annotations);
  const VectorXd dh0 = (dh_next.array() * (1.0 - init.h.array().square())).matrix();
  const VectorXd dc0 = (dc_next.array() * (1.0 - init.c.array().square())).matrix();
  g.init_h_weight.noalias() += dh0 * mean.transpose();
  g.init_h_bias += dh0;
  g.init_c_weight.noalias() += dc0 * mean.transpose();
  g.init_c_bias += dc0;
  return g;
}

}  // namespace capforge
