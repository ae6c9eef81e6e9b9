#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "capforge/annotation.hpp"
#include "capforge/decoder.hpp"
#include "capforge/vocab.hpp"

namespace capforge {

struct TrainConfig {
  double lr0 = 0.01;
  double momentum = 0.9;
  int batch_size = 100;
  std::int64_t halve_every = 20000;
  double lambda = 1.0;
  std::int64_t max_iters = 100000;
  std::uint64_t seed = 1;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void validate(const TrainConfig& config);

// Flat `key = value` lines using exactly the TrainConfig field names.
// Missing keys keep their defaults; unknown or repeated keys are errors.
TrainConfig parse_train_config(std::string_view text);
TrainConfig load_train_config(const std::filesystem::path& path);
std::string format_train_config(const TrainConfig& config);

struct OptimizerState {
  DecoderParams velocity;
  std::int64_t iter = 0;

  static OptimizerState zeros_like(const DecoderParams& params);
};

struct TrainingExample {
  AnnotationSet annotations;
  IdSequence target;  // ends with <end>
};

// sum_i (1 - sum_j alpha_ji)^2 over annotation rows i and steps j.
double attention_penalty(const std::vector<StepTrace>& traces);

// -sum_j log p(w_j) + lambda * attention_penalty(traces)
double loss(const std::vector<StepTrace>& traces, const IdSequence& target_ids, double lambda);

// lr0 * 0.5^floor(iter / halve_every)
double lr_at(std::int64_t iter, const TrainConfig& config);

// Classical momentum: v <- momentum v + g; p <- p - lr v. Throws
// NonFiniteError (leaving everything untouched) on a non-finite gradient.
void sgd_momentum_step(DecoderParams& params, const DecoderGrads& grads, OptimizerState& state, double lr,
                       double momentum);

struct LossAndGrad {
  double loss = 0.0;
  DecoderGrads grads;
};

LossAndGrad example_loss_and_grad(const TrainingExample& example, const DecoderParams& params, double lambda,
                                  TokenId start_id);

struct TrainResult {
  DecoderParams params;
  OptimizerState optimizer;
  std::vector<double> loss_history;  // mean loss per batch
};

// Mini-batch SGD with momentum. Data order is reshuffled each epoch from
// config.seed; the last batch of an epoch may be short.
TrainResult train(const std::vector<TrainingExample>& dataset, const TrainConfig& config, DecoderParams params,
                  TokenId start_id);

// Total target NLL divided by total target tokens.
double mean_token_nll(const std::vector<TrainingExample>& dataset, const DecoderParams& params, TokenId start_id);

std::string format_loss_history(const std::vector<double>& history);

struct GradCheckReport {
  struct TensorError {
    std::string name;
    double max_rel_error = 0.0;
  };
  double max_rel_error = 0.0;
  std::vector<TensorError> per_tensor;
};

// Compares `analytic` with central differences of the loss, coordinate by
// coordinate, using |a - n| / max(1e-8, |a| + |n|). Perturbed losses come
// from reference_loss (long double), not from forward_sequence.
GradCheckReport grad_check_against(const DecoderParams& params, const TrainingExample& example, double lambda,
                                   double epsilon, TokenId start_id, const DecoderGrads& analytic);

GradCheckReport grad_check(const DecoderParams& params, const TrainingExample& example, double lambda,
                           double epsilon, TokenId start_id);

struct GradCheckCase {
  DecoderParams params;
  TrainingExample example;
  TokenId start_id = 0;
};

// Glorot weights plus small random biases, annotation entries uniform in
// [-1, 1], and a num_steps-token target whose last id is 0 (the end token).
GradCheckCase random_gradcheck_case(const DecoderDims& dims, int num_rows, int num_steps, std::uint64_t seed);

}  // namespace capforge
