#include "capforge/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "capforge/error.hpp"
#include "capforge/reference_loss.hpp"
#include "capforge/rng.hpp"
#include "capforge/text_io.hpp"

namespace capforge {

namespace {

// Keeps the shuffle stream distinct from parameter initialization, which
// is seeded with the same config seed.
constexpr std::uint64_t kShuffleStream = 0x5deece66dULL;

}  // namespace

void validate(const TrainConfig& c) {
  if (!(c.lr0 > 0.0) || !std::isfinite(c.lr0)) throw InvalidArgument("lr0 must be > 0");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw InvalidArgument("momentum must be in [0, 1)");
  if (c.batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (c.halve_every < 1) throw InvalidArgument("halve_every must be >= 1");
  if (!(c.lambda >= 0.0) || !std::isfinite(c.lambda)) throw InvalidArgument("lambda must be >= 0");
  if (c.max_iters < 0) throw InvalidArgument("max_iters must be >= 0");
}

TrainConfig parse_train_config(std::string_view text) {
  TrainConfig c;
  std::map<std::string, bool> seen;
  std::size_t lineno = 0;
  for (const auto& raw : split_lines(text)) {
    ++lineno;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(lineno);
    if (eq == std::string_view::npos) throw ParseError(where + ": expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (seen[key]) throw ParseError(where + ": duplicate key '" + key + "'");
    seen[key] = true;
    if (key == "lr0") {
      c.lr0 = parse_double(value, key);
    } else if (key == "momentum") {
      c.momentum = parse_double(value, key);
    } else if (key == "batch_size") {
      c.batch_size = static_cast<int>(parse_int(value, key));
    } else if (key == "halve_every") {
      c.halve_every = parse_int(value, key);
    } else if (key == "lambda") {
      c.lambda = parse_double(value, key);
    } else if (key == "max_iters") {
      c.max_iters = parse_int(value, key);
    } else if (key == "seed") {
      const auto s = parse_int(value, key);
      if (s < 0) throw ParseError(where + ": seed must be >= 0");
      c.seed = static_cast<std::uint64_t>(s);
    } else {
      throw ParseError(where + ": unknown key '" + key + "'");
    }
  }
  try {
    validate(c);
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) { return parse_train_config(read_file(path)); }

std::string format_train_config(const TrainConfig& c) {
  return "lr0 = " + format_double(c.lr0) + "\nmomentum = " + format_double(c.momentum) +
         "\nbatch_size = " + std::to_string(c.batch_size) + "\nhalve_every = " + std::to_string(c.halve_every) +
         "\nlambda = " + format_double(c.lambda) + "\nmax_iters = " + std::to_string(c.max_iters) +
         "\nseed = " + std::to_string(c.seed) + "\n";
}

OptimizerState OptimizerState::zeros_like(const DecoderParams& params) {
  return {DecoderParams::zeros(params.dims), 0};
}

double attention_penalty(const std::vector<StepTrace>& traces) {
  if (traces.empty()) return 0.0;
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(traces.front().alpha.size());
  for (const auto& tr : traces) mass += tr.alpha;
  return (1.0 - mass.array()).square().sum();
}

double loss(const std::vector<StepTrace>& traces, const IdSequence& target_ids, double lambda) {
  if (traces.size() != target_ids.size()) throw DimensionError("trace count does not match target length");
  double nll = 0.0;
  for (std::size_t j = 0; j < traces.size(); ++j) {
    const auto id = target_ids[j];
    if (id < 0 || id >= traces[j].log_probs.size()) throw CorruptInputError("target id out of range");
    nll -= traces[j].log_probs[id];
  }
  return nll + lambda * attention_penalty(traces);
}

double lr_at(std::int64_t iter, const TrainConfig& config) {
  if (iter < 0) throw InvalidArgument("iteration must be >= 0");
  return config.lr0 * std::pow(0.5, static_cast<double>(iter / config.halve_every));
}

void sgd_momentum_step(DecoderParams& params, const DecoderGrads& grads, OptimizerState& state, double lr,
                       double momentum) {
  if (!(params.dims == grads.dims) || !(params.dims == state.velocity.dims)) {
    throw DimensionError("optimizer tensors do not match parameter dims");
  }
  if (!grads.all_finite()) throw NonFiniteError("non-finite gradient at iteration " + std::to_string(state.iter));
  auto p = params.tensors();
  auto v = state.velocity.tensors();
  const auto g = grads.tensors();
  for (std::size_t k = 0; k < p.size(); ++k) {
    for (std::size_t i = 0; i < p[k].size(); ++i) {
      v[k][i] = momentum * v[k][i] + g[k][i];
      p[k][i] -= lr * v[k][i];
    }
  }
  ++state.iter;
}

LossAndGrad example_loss_and_grad(const TrainingExample& example, const DecoderParams& params, double lambda,
                                  TokenId start_id) {
  const auto traces = forward_sequence(example.annotations, example.target, params, start_id);
  return {loss(traces, example.target, lambda),
          backward_sequence(example.annotations, example.target, params, traces, lambda, start_id)};
}

TrainResult train(const std::vector<TrainingExample>& dataset, const TrainConfig& config, DecoderParams params,
                  TokenId start_id) {
  validate(config);
  if (dataset.empty()) throw InvalidArgument("training set is empty");
  TrainResult result{std::move(params), {}, {}};
  result.optimizer = OptimizerState::zeros_like(result.params);

  Rng rng(config.seed ^ kShuffleStream);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  const auto batch_size = static_cast<std::size_t>(config.batch_size);

  for (std::int64_t it = 0; it < config.max_iters; ++it) {
    if (cursor >= order.size()) {
      rng.shuffle(order);
      cursor = 0;
    }
    const std::size_t end = std::min(order.size(), cursor + batch_size);
    const double inv = 1.0 / static_cast<double>(end - cursor);

    DecoderGrads batch_grads = DecoderParams::zeros(result.params.dims);
    double batch_loss = 0.0;
    for (; cursor < end; ++cursor) {
      const auto lg = example_loss_and_grad(dataset[order[cursor]], result.params, config.lambda, start_id);
      batch_loss += lg.loss;
      batch_grads.add_scaled(lg.grads, 1.0);
    }
    batch_grads.scale(inv);
    sgd_momentum_step(result.params, batch_grads, result.optimizer, lr_at(result.optimizer.iter, config),
                      config.momentum);
    result.loss_history.push_back(batch_loss * inv);
  }
  return result;
}

double mean_token_nll(const std::vector<TrainingExample>& dataset, const DecoderParams& params, TokenId start_id) {
  double nll = 0.0;
  std::size_t tokens = 0;
  for (const auto& ex : dataset) {
    nll += loss(forward_sequence(ex.annotations, ex.target, params, start_id), ex.target, 0.0);
    tokens += ex.target.size();
  }
  return tokens == 0 ? 0.0 : nll / static_cast<double>(tokens);
}

std::string format_loss_history(const std::vector<double>& history) {
  std::string out = "# capforge loss-log v" + std::string(kVersion) + "\n";
  for (std::size_t i = 0; i < history.size(); ++i) {
    out += std::to_string(i) + '\t' + format_double(history[i]) + '\n';
  }
  return out;
}

GradCheckReport grad_check_against(const DecoderParams& params, const TrainingExample& example, double lambda,
                                   double epsilon, TokenId start_id, const DecoderGrads& analytic) {
  if (!(analytic.dims == params.dims)) throw DimensionError("analytic gradient dims differ from params");
  DecoderParams probe = params;
  auto probe_tensors = probe.tensors();
  const auto grad_tensors = analytic.tensors();
  const auto names = params.tensor_names();
  auto eval = [&] { return reference_loss(probe, example, lambda, start_id); };

  GradCheckReport report;
  for (std::size_t k = 0; k < probe_tensors.size(); ++k) {
    double worst = 0.0;
    for (std::size_t i = 0; i < probe_tensors[k].size(); ++i) {
      double& coord = probe_tensors[k][i];
      const double saved = coord;
      coord = saved + epsilon;
      const long double plus = eval();
      coord = saved - epsilon;
      const long double minus = eval();
      coord = saved;
      const auto numeric = static_cast<double>((plus - minus) / (2.0L * static_cast<long double>(epsilon)));
      const double a = grad_tensors[k][i];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, rel);
    }
    report.per_tensor.push_back({names[k], worst});
    report.max_rel_error = std::max(report.max_rel_error, worst);
  }
  return report;
}

GradCheckReport grad_check(const DecoderParams& params, const TrainingExample& example, double lambda,
                           double epsilon, TokenId start_id) {
  const auto lg = example_loss_and_grad(example, params, lambda, start_id);
  return grad_check_against(params, example, lambda, epsilon, start_id, lg.grads);
}

}  // namespace capforge

namespace capforge {

GradCheckCase random_gradcheck_case(const DecoderDims& dims, int num_rows, int num_steps, std::uint64_t seed) {
  if (num_rows < 1 || num_steps < 1) throw InvalidArgument("gradient check needs L >= 1 and K >= 1");
  if (dims.vocab < 2) throw InvalidArgument("gradient check needs V >= 2");
  GradCheckCase c;
  c.params = DecoderParams::glorot(dims, seed);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  DecoderParams::visit(c.params, [&](const std::string& name, auto& t) {
    if (name.find("bias") == std::string::npos) return;
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-0.1, 0.1);
  });
  c.example.annotations.rows.resize(num_rows, dims.annotation);
  for (Eigen::Index i = 0; i < c.example.annotations.rows.size(); ++i) {
    c.example.annotations.rows.data()[i] = rng.uniform(-1.0, 1.0);
  }
  c.example.annotations.n_objects = num_rows - 1;
  for (int j = 0; j + 1 < num_steps; ++j) {
    c.example.target.push_back(static_cast<TokenId>(1 + rng.below(static_cast<std::uint64_t>(dims.vocab - 1))));
  }
  c.example.target.push_back(0);
  c.start_id = 0;
  return c;
}

}  // namespace capforge
