#include "capforge/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>

#include "capforge/annotation.hpp"
#include "capforge/checkpoint.hpp"
#include "capforge/coco.hpp"
#include "capforge/decoding.hpp"
#include "capforge/error.hpp"
#include "capforge/image_io.hpp"
#include "capforge/metrics.hpp"
#include "capforge/text_io.hpp"
#include "capforge/training.hpp"
#include "capforge/vocab.hpp"

namespace capforge {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kGradCheckTolerance = 1e-4;
constexpr const char* kSeedEnv = "CAPFORGE_SEED";

std::string version_line(std::string_view kind) {
  return "# capforge " + std::string(kind) + " v" + std::string(kVersion) + "\n";
}

// Written next to the primary output before any work starts.
void write_manifest(const fs::path& out, const std::string& command, json config, json inputs, json outputs,
                    std::uint64_t seed) {
  json m;
  m["command"] = command;
  m["config"] = std::move(config);
  m["inputs"] = std::move(inputs);
  m["outputs"] = std::move(outputs);
  m["seed"] = seed;
  m["version"] = std::string(kVersion);
  fs::path path = out;
  path += ".manifest.json";
  write_file_atomic(path, m.dump(2) + "\n");
}

std::vector<CaptionRecord> read_captions_any(const fs::path& path, bool allow_empty = false) {
  return parse_captions_any(read_file(path), allow_empty);
}

std::vector<double> parse_mean_pixel(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(trim(item), "mean pixel"));
  if (out.empty()) throw ParseError("mean pixel needs at least one value");
  return out;
}

std::vector<double> default_mean_pixel(int channels) {
  // ImageNet RGB mean on the 0..255 scale.
  const std::vector<double> rgb = {123.68, 116.779, 103.939};
  if (channels == 3) return rgb;
  return std::vector<double>(static_cast<std::size_t>(channels), (rgb[0] + rgb[1] + rgb[2]) / 3.0);
}

fs::path find_image(const fs::path& dir, const std::string& image_id) {
  for (const char* ext : {".ppm", ".pgm", ".pnm"}) {
    fs::path p = dir / (image_id + ext);
    if (fs::exists(p)) return p;
  }
  throw IoError("no image file for " + image_id + " in " + dir.string() + " (expected .ppm/.pgm/.pnm)");
}

struct GradCheckDims {
  DecoderDims dims;
  int num_rows = 4;
  int num_steps = 5;
};

GradCheckDims parse_gradcheck_dims(const std::string& spec) {
  GradCheckDims g;
  g.dims = {12, 5, 8, 6, 0};
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ParseError("dims entry '" + item + "' is not key=value");
    const std::string key(trim(std::string_view(item).substr(0, eq)));
    const int v = static_cast<int>(parse_int(trim(std::string_view(item).substr(eq + 1)), key));
    if (key == "V") {
      g.dims.vocab = v;
    } else if (key == "m") {
      g.dims.embed = v;
    } else if (key == "H") {
      g.dims.hidden = v;
    } else if (key == "D") {
      g.dims.annotation = v;
    } else if (key == "a") {
      g.dims.attention = v;
    } else if (key == "L") {
      g.num_rows = v;
    } else if (key == "K") {
      g.num_steps = v;
    } else {
      throw ParseError("unknown dims key '" + key + "'");
    }
  }
  if (g.dims.attention == 0) g.dims.attention = g.dims.hidden;
  validate(g.dims);
  return g;
}

std::uint64_t seed_override(std::uint64_t seed) {
  if (const char* env = std::getenv(kSeedEnv); env && *env) {
    const auto v = parse_int(env, kSeedEnv);
    if (v < 0) throw ParseError(std::string(kSeedEnv) + " must be >= 0");
    return static_cast<std::uint64_t>(v);
  }
  return seed;
}

struct Options {
  std::string captions, out, images, boxes, features, vocab, config, loss_log, checkpoint, candidates, references;
  std::string dims_spec = "V=12,m=5,H=8,D=6,L=4,K=5";
  std::string mean_pixel;
  int min_count = kDefaultMinCount;
  std::uint64_t synthetic_seed = 0;
  int top_n = 5;
  int feature_dim = 4096;
  int embed_dim = 1000;
  int hidden_dim = 1000;
  int att_dim = 1000;
  int max_len = kDefaultMaxCaptionLen;
  int beam = 4;
  bool greedy = false;
  std::uint64_t seed = 1;
  std::vector<double> lambdas = {0.0, 5.0};
  double epsilon = 1e-5;
};

DecodeResult decode_one(const AnnotationSet& set, const DecoderParams& params, const Vocabulary& vocab,
                        const Options& o) {
  if (o.greedy) return greedy_decode(set, params, vocab, o.max_len);
  return beam_search(set, params, vocab, DecodeConfig{o.beam, o.max_len});
}

void check_model(const DecoderParams& params, const Vocabulary& vocab, const FeatureMap& feats) {
  if (static_cast<std::size_t>(params.dims.vocab) != vocab.size()) {
    throw DimensionError("checkpoint V=" + std::to_string(params.dims.vocab) + " does not match vocabulary size " +
                         std::to_string(vocab.size()));
  }
  if (!feats.empty() && feats.begin()->second.width() != params.dims.annotation) {
    throw DimensionError("feature width does not match checkpoint D=" + std::to_string(params.dims.annotation));
  }
}

int cmd_build_vocab(const Options& o, std::ostream& out) {
  write_manifest(o.out, "build-vocab", {{"min_count", o.min_count}}, {{"captions", o.captions}}, {{"vocab", o.out}},
                 0);
  const auto records = read_captions_any(o.captions);
  const Vocabulary vocab = build_vocab(records, o.min_count);
  save_vocab(vocab, o.out);
  out << "vocabulary: " << vocab.size() << " entries from " << records.size() << " captions\n";
  return kExitOk;
}

int cmd_featurize(const Options& o, std::ostream& out) {
  write_manifest(o.out, "featurize",
                 {{"top_n", o.top_n}, {"feature_dim", o.feature_dim}, {"mean_pixel", o.mean_pixel}},
                 {{"images", o.images}, {"boxes", o.boxes}}, {{"features", o.out}}, o.synthetic_seed);
  const auto boxes = load_boxes(o.boxes);
  const FeatureExtractor obj = synthetic_extractor(o.synthetic_seed, o.feature_dim);
  const FeatureExtractor loc = synthetic_extractor(o.synthetic_seed + 1, o.feature_dim);
  FeatureMap feats;
  for (const auto& [image_id, image_boxes] : boxes) {
    const ImageBuffer image = load_netpbm(find_image(o.images, image_id));
    const auto mean = o.mean_pixel.empty() ? default_mean_pixel(image.channels()) : parse_mean_pixel(o.mean_pixel);
    try {
      feats.emplace(image_id, build_annotation_set(image, image_boxes, o.top_n, obj, loc, mean));
    } catch (const Error& e) {
      throw Error("image " + image_id + ": " + e.what());
    }
  }
  save_feature_file(feats, o.out);
  out << "features: " << feats.size() << " images\n";
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  TrainConfig config = load_train_config(o.config);
  config.seed = seed_override(config.seed);
  const json config_json = {{"lr0", config.lr0},
                            {"momentum", config.momentum},
                            {"batch_size", config.batch_size},
                            {"halve_every", config.halve_every},
                            {"lambda", config.lambda},
                            {"max_iters", config.max_iters},
                            {"embed_dim", o.embed_dim},
                            {"hidden_dim", o.hidden_dim},
                            {"att_dim", o.att_dim},
                            {"max_len", o.max_len}};
  write_manifest(o.out, "train", config_json,
                 {{"features", o.features}, {"captions", o.captions}, {"vocab", o.vocab}, {"config", o.config}},
                 {{"checkpoint", o.out}, {"loss_log", o.loss_log}}, config.seed);

  const FeatureMap feats = load_feature_file(o.features);
  const Vocabulary vocab = load_vocab(o.vocab);
  const auto records = read_captions_any(o.captions);
  std::vector<TrainingExample> dataset;
  std::size_t skipped = 0;
  for (const auto& rec : records) {
    const auto it = feats.find(rec.image_id);
    if (it == feats.end()) {
      ++skipped;
      continue;
    }
    dataset.push_back({it->second, encode(rec.tokens, vocab, o.max_len)});
  }
  if (dataset.empty()) throw Error("no caption has features; nothing to train on");

  const DecoderDims dims{static_cast<int>(vocab.size()), o.embed_dim, o.hidden_dim,
                         static_cast<int>(feats.begin()->second.width()), o.att_dim};
  TrainResult result = train(dataset, config, DecoderParams::glorot(dims, config.seed), start_id(vocab));
  save_checkpoint({std::move(result.params), config.seed}, o.out);
  write_file_atomic(o.loss_log, format_loss_history(result.loss_history));
  out << "trained " << result.loss_history.size() << " iterations on " << dataset.size() << " captions";
  if (skipped) out << " (" << skipped << " captions without features skipped)";
  if (!result.loss_history.empty()) out << "; final batch loss " << result.loss_history.back();
  out << "\n";
  return kExitOk;
}

int cmd_caption(const Options& o, std::ostream& out) {
  write_manifest(o.out, "caption", {{"beam", o.greedy ? 1 : o.beam}, {"greedy", o.greedy}, {"max_len", o.max_len}},
                 {{"features", o.features}, {"checkpoint", o.checkpoint}, {"vocab", o.vocab}}, {{"captions", o.out}},
                 0);
  const FeatureMap feats = load_feature_file(o.features);
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const Vocabulary vocab = load_vocab(o.vocab);
  check_model(ck.params, vocab, feats);
  std::string text = version_line("captions");
  for (const auto& [image_id, set] : feats) {
    const DecodeResult r = decode_one(set, ck.params, vocab, o);
    text += image_id + '\t' + join_tokens(decode_ids(r.ids, vocab)) + '\n';
  }
  write_file_atomic(o.out, text);
  out << "captioned " << feats.size() << " images\n";
  return kExitOk;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  write_manifest(o.out, "evaluate", json::object(), {{"candidates", o.candidates}, {"references", o.references}},
                 {{"scores", o.out}}, 0);
  const auto candidates = read_corpus(o.candidates, /*allow_empty=*/true);
  const auto references = read_captions_any(o.references);
  std::map<std::string, std::vector<TokenList>> refs_by_image;
  for (const auto& r : references) refs_by_image[r.image_id].push_back(r.tokens);
  EvalCorpus corpus;
  std::set<std::string> seen;
  for (const auto& c : candidates) {
    if (!seen.insert(c.image_id).second) throw ParseError("duplicate candidate for image " + c.image_id);
    const auto it = refs_by_image.find(c.image_id);
    if (it == refs_by_image.end()) throw Error("no references for image " + c.image_id);
    corpus.items.push_back({c.image_id, c.tokens, it->second});
  }
  const EvalResult result = evaluate(corpus);
  const std::string text = format_results(result);
  write_file_atomic(o.out, text);
  out << text.substr(text.find('\n') + 1);
  return kExitOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  const GradCheckDims g = parse_gradcheck_dims(o.dims_spec);
  const GradCheckCase c = random_gradcheck_case(g.dims, g.num_rows, g.num_steps, o.seed);
  double worst = 0.0;
  for (double lambda : o.lambdas) {
    const GradCheckReport report = grad_check(c.params, c.example, lambda, o.epsilon, c.start_id);
    out << "lambda " << lambda << "\n";
    for (const auto& t : report.per_tensor) out << "  " << t.name << '\t' << t.max_rel_error << "\n";
    out << "  max_rel_error\t" << report.max_rel_error << "\n";
    worst = std::max(worst, report.max_rel_error);
  }
  const bool ok = worst < kGradCheckTolerance;
  out << (ok ? "PASS" : "FAIL") << " max relative error " << worst << " (tolerance " << kGradCheckTolerance
      << ")\n";
  return ok ? kExitOk : kExitFailure;
}

int cmd_attn_trace(const Options& o, std::ostream& out) {
  write_manifest(o.out, "attn-trace", {{"beam", o.greedy ? 1 : o.beam}, {"greedy", o.greedy}, {"max_len", o.max_len}},
                 {{"features", o.features}, {"checkpoint", o.checkpoint}, {"vocab", o.vocab}}, {{"trace", o.out}},
                 0);
  const FeatureMap feats = load_feature_file(o.features);
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const Vocabulary vocab = load_vocab(o.vocab);
  check_model(ck.params, vocab, feats);
  std::string text = version_line("attn-trace");
  for (const auto& [image_id, set] : feats) {
    const DecodeResult r = decode_one(set, ck.params, vocab, o);
    const auto alphas = attention_alignment(set, ck.params, vocab, r.ids);
    text += "# image " + image_id + '\n';
    for (std::size_t j = 0; j < r.ids.size(); ++j) {
      text += vocab.token(r.ids[j]) + '\t';
      for (Eigen::Index i = 0; i < alphas[j].size(); ++i) {
        if (i) text.push_back(' ');
        text += format_fixed(alphas[j][i], 6);
      }
      text.push_back('\n');
    }
  }
  write_file_atomic(o.out, text);
  out << "traced " << feats.size() << " images\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Object-feature attention captioning toolkit", "capforge"};
  app.require_subcommand(1);
  Options o;

  auto* build = app.add_subcommand("build-vocab", "Build a vocabulary from a caption corpus");
  build->add_option("--captions", o.captions, "Caption corpus (TSV or COCO JSON)")->required();
  build->add_option("--min-count", o.min_count, "Minimum token count")->check(CLI::PositiveNumber);
  build->add_option("--out", o.out, "Output vocabulary file")->required();

  auto* featurize = app.add_subcommand("featurize", "Build annotation sets with the synthetic extractor");
  featurize->add_option("--images", o.images, "Directory of <image_id>.ppm/.pgm files")->required();
  featurize->add_option("--boxes", o.boxes, "Boxes file: image_id x y w h score")->required();
  featurize->add_option("--synthetic-seed", o.synthetic_seed, "Extractor seed")->required();
  featurize->add_option("--out", o.out, "Output feature file")->required();
  featurize->add_option("--top-n", o.top_n, "Objects per image")->check(CLI::PositiveNumber);
  featurize->add_option("--feature-dim", o.feature_dim, "Width d of each extractor")->check(CLI::PositiveNumber);
  featurize->add_option("--mean-pixel", o.mean_pixel, "Comma-separated per-channel mean");

  auto* trn = app.add_subcommand("train", "Train the attention decoder");
  trn->add_option("--features", o.features, "Feature file")->required();
  trn->add_option("--captions", o.captions, "Caption corpus (TSV or COCO JSON)")->required();
  trn->add_option("--vocab", o.vocab, "Vocabulary file")->required();
  trn->add_option("--config", o.config, "Training config (key = value)")->required();
  trn->add_option("--out", o.out, "Output checkpoint")->required();
  trn->add_option("--loss-log", o.loss_log, "Output loss history")->required();
  trn->add_option("--embed-dim", o.embed_dim, "Word embedding width")->check(CLI::PositiveNumber);
  trn->add_option("--hidden-dim", o.hidden_dim, "LSTM hidden width")->check(CLI::PositiveNumber);
  trn->add_option("--att-dim", o.att_dim, "Attention MLP hidden width")->check(CLI::PositiveNumber);
  trn->add_option("--max-len", o.max_len, "Caption truncation length")->check(CLI::PositiveNumber);

  auto add_decode_flags = [&](CLI::App* sub) {
    auto* beam = sub->add_option("--beam", o.beam, "Beam width")->check(CLI::PositiveNumber);
    auto* greedy = sub->add_flag("--greedy", o.greedy, "Greedy decoding");
    beam->excludes(greedy);
    sub->add_option("--max-len", o.max_len, "Maximum generated tokens")->check(CLI::PositiveNumber);
  };
  auto* caption = app.add_subcommand("caption", "Generate captions");
  caption->add_option("--features", o.features, "Feature file")->required();
  caption->add_option("--checkpoint", o.checkpoint, "Checkpoint")->required();
  caption->add_option("--vocab", o.vocab, "Vocabulary file")->required();
  caption->add_option("--out", o.out, "Output captions")->required();
  add_decode_flags(caption);

  auto* eval = app.add_subcommand("evaluate", "Score candidate captions");
  eval->add_option("--candidates", o.candidates, "Candidate captions (TSV)")->required();
  eval->add_option("--references", o.references, "Reference captions (TSV or COCO JSON)")->required();
  eval->add_option("--out", o.out, "Output scores")->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check on a random instance");
  gc->add_option("--dims", o.dims_spec, "e.g. V=12,m=5,H=8,D=6,L=4,K=5 (optional a=)");
  gc->add_option("--seed", o.seed, "Instance seed");
  gc->add_option("--lambda", o.lambdas, "Penalty weights to check")->expected(1, -1);
  gc->add_option("--epsilon", o.epsilon, "Central difference step");

  auto* trace = app.add_subcommand("attn-trace", "Per-word attention weights of generated captions");
  trace->add_option("--features", o.features, "Feature file")->required();
  trace->add_option("--checkpoint", o.checkpoint, "Checkpoint")->required();
  trace->add_option("--vocab", o.vocab, "Vocabulary file")->required();
  trace->add_option("--out", o.out, "Output trace")->required();
  add_decode_flags(trace);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (build->parsed()) return cmd_build_vocab(o, out);
    if (featurize->parsed()) return cmd_featurize(o, out);
    if (trn->parsed()) return cmd_train(o, out);
    if (caption->parsed()) return cmd_caption(o, out);
    if (eval->parsed()) return cmd_evaluate(o, out);
    if (gc->parsed()) return cmd_gradcheck(o, out);
    if (trace->parsed()) return cmd_attn_trace(o, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace capforge
