#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "capforge/annotation.hpp"
#include "capforge/vocab.hpp"

namespace capforge {

struct DecoderDims {
  int vocab = 0;       // V
  int embed = 0;       // m
  int hidden = 0;      // H
  int annotation = 0;  // D
  int attention = 0;   // a, width of the attention MLP hidden layer

  friend bool operator==(const DecoderDims&, const DecoderDims&) = default;
};

void validate(const DecoderDims& dims);

enum Gate : int { kInputGate = 0, kForgetGate = 1, kCellGate = 2, kOutputGate = 3 };
inline constexpr int kNumGates = 4;
inline constexpr std::array<std::string_view, kNumGates> kGateSuffix = {"i", "f", "c", "o"};

// Every learned tensor of the attention decoder. The same type carries
// gradients.
struct DecoderParams {
  DecoderDims dims;

  Eigen::MatrixXd embedding;  // V x m

  // LSTM gates, indexed by Gate.
  std::array<Eigen::MatrixXd, kNumGates> gate_input;      // H x m
  std::array<Eigen::MatrixXd, kNumGates> gate_recurrent;  // H x H
  std::array<Eigen::MatrixXd, kNumGates> gate_context;    // H x D
  std::array<Eigen::VectorXd, kNumGates> gate_bias;       // H

  // Attention MLP: score_i = att_score . tanh(att_annotation A_i + att_hidden h + att_bias)
  Eigen::MatrixXd att_annotation;  // a x D
  Eigen::MatrixXd att_hidden;      // a x H
  Eigen::VectorXd att_bias;        // a
  Eigen::VectorXd att_score;       // a

  // Initial state from the mean annotation row.
  Eigen::MatrixXd init_h_weight;  // H x D
  Eigen::VectorXd init_h_bias;    // H
  Eigen::MatrixXd init_c_weight;  // H x D
  Eigen::VectorXd init_c_bias;    // H

  // logits = out_embed (E w + out_hidden h + out_context z) + out_bias
  Eigen::MatrixXd out_embed;    // V x m
  Eigen::MatrixXd out_hidden;   // m x H
  Eigen::MatrixXd out_context;  // m x D
  Eigen::VectorXd out_bias;     // V

  static DecoderParams zeros(const DecoderDims& dims);

  // Weights uniform in [-r, r], r = sqrt(6 / (fan_in + fan_out)); biases zero.
  static DecoderParams glorot(const DecoderDims& dims, std::uint64_t seed);

  // Calls f(name, tensor) for each tensor in a fixed order. `tensor` is an
  // Eigen::MatrixXd or Eigen::VectorXd, const when `self` is const.
  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f(std::string("embedding"), self.embedding);
    for (int g = 0; g < kNumGates; ++g) f("gate_input_" + std::string(kGateSuffix[g]), self.gate_input[g]);
    for (int g = 0; g < kNumGates; ++g) f("gate_recurrent_" + std::string(kGateSuffix[g]), self.gate_recurrent[g]);
    for (int g = 0; g < kNumGates; ++g) f("gate_context_" + std::string(kGateSuffix[g]), self.gate_context[g]);
    for (int g = 0; g < kNumGates; ++g) f("gate_bias_" + std::string(kGateSuffix[g]), self.gate_bias[g]);
    f(std::string("att_annotation"), self.att_annotation);
    f(std::string("att_hidden"), self.att_hidden);
    f(std::string("att_bias"), self.att_bias);
    f(std::string("att_score"), self.att_score);
    f(std::string("init_h_weight"), self.init_h_weight);
    f(std::string("init_h_bias"), self.init_h_bias);
    f(std::string("init_c_weight"), self.init_c_weight);
    f(std::string("init_c_bias"), self.init_c_bias);
    f(std::string("out_embed"), self.out_embed);
    f(std::string("out_hidden"), self.out_hidden);
    f(std::string("out_context"), self.out_context);
    f(std::string("out_bias"), self.out_bias);
  }

  // Flat storage of each tensor, in visit() order.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;
  std::vector<std::string> tensor_names() const;

  std::size_t num_coordinates() const;
  bool all_finite() const;

  // this += scale * other
  void add_scaled(const DecoderParams& other, double scale);
  void scale(double factor);

  friend bool operator==(const DecoderParams& a, const DecoderParams& b);
};

using DecoderGrads = DecoderParams;

struct DecoderState {
  Eigen::VectorXd h;
  Eigen::VectorXd c;
};

struct Attention {
  Eigen::VectorXd alpha;  // L, sums to 1
  Eigen::VectorXd z;      // D
  Eigen::MatrixXd hidden; // L x a tanh activations of the scoring MLP
};

struct StepTrace {
  Eigen::VectorXd alpha;
  Eigen::VectorXd z;
  DecoderState state;
  Eigen::VectorXd log_probs;

  // Gate activations after their nonlinearity (sigmoid, or tanh for kCellGate).
  std::array<Eigen::VectorXd, kNumGates> gates;
  Eigen::MatrixXd att_hidden;
};

DecoderState init_state(const AnnotationSet& annotations, const DecoderParams& params);
Attention attend(const AnnotationSet& annotations, const Eigen::VectorXd& h_prev, const DecoderParams& params);
DecoderState lstm_step(TokenId w_prev, const DecoderState& prev, const Eigen::VectorXd& z,
                       const DecoderParams& params);
Eigen::VectorXd output_log_probs(TokenId w_prev, const DecoderState& state, const Eigen::VectorXd& z,
                                 const DecoderParams& params);

// Binds parameters to one annotation set and caches the projection of its
// rows into attention space, so repeated steps skip that product.
class StepDecoder {
 public:
  StepDecoder(const DecoderParams& params, const AnnotationSet& annotations);

  DecoderState initial_state() const;
  Attention attend(const Eigen::VectorXd& h_prev) const;
  StepTrace step(TokenId w_prev, const DecoderState& prev) const;

  const DecoderParams& params() const { return params_; }
  const AnnotationSet& annotations() const { return annotations_; }

 private:
  const DecoderParams& params_;
  const AnnotationSet& annotations_;
  Eigen::MatrixXd projected_;  // L x a, rows W_aA A_i + b_a
};

// Teacher-forced pass: step j consumes target[j-1] (start_id at j = 0).
std::vector<StepTrace> forward_sequence(const AnnotationSet& annotations, const IdSequence& target_ids,
                                        const DecoderParams& params, TokenId start_id);

// Exact gradient of the regularized sequence loss (see training.hpp) with
// respect to every parameter. Annotation features receive no gradient.
DecoderGrads backward_sequence(const AnnotationSet& annotations, const IdSequence& target_ids,
                               const DecoderParams& params, const std::vector<StepTrace>& traces, double lambda,
                               TokenId start_id);

}  // namespace capforge
