#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <unistd.h>

#include "capforge/annotation.hpp"
#include "capforge/checkpoint.hpp"
#include "capforge/cli.hpp"
#include "capforge/image_io.hpp"
#include "capforge/text_io.hpp"
#include "capforge/vocab.hpp"
#include "fixtures.hpp"

namespace capforge {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// Small on-disk dataset: 6 images with boxes and two captions each.
class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("capforge_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_ / "images");
    Rng rng(7);
    std::string boxes, captions;
    const std::vector<std::string> texts = {"a dog on the grass", "a cat on a bed",    "a red car",
                                            "two dogs play",      "a man on a horse", "a bird in a tree"};
    for (int i = 0; i < 6; ++i) {
      const std::string id = "im" + std::to_string(i);
      write_file_atomic(dir_ / "images" / (id + ".ppm"), format_netpbm_ascii(testing::random_image(rng, 10, 12)));
      for (int b = 0; b < 3; ++b) {
        const BoundingBox box = testing::random_box(rng, 10, 12);
        boxes += id + " " + std::to_string(box.x) + " " + std::to_string(box.y) + " " + std::to_string(box.w) + " " +
                 std::to_string(box.h) + " " + format_double(box.score) + "\n";
      }
      captions += id + "\t" + texts[static_cast<std::size_t>(i)] + "\n";
      captions += id + "\t" + texts[static_cast<std::size_t>((i + 1) % 6)] + "\n";
    }
    write_file_atomic(dir_ / "boxes.txt", boxes);
    write_file_atomic(dir_ / "captions.tsv", captions);
    write_file_atomic(dir_ / "train.cfg", "lr0 = 0.05\nbatch_size = 4\nmax_iters = 15\nhalve_every = 10\nseed = 3\n");

    ASSERT_EQ(run({"build-vocab", "--captions", p("captions.tsv"), "--min-count", "1", "--out", p("vocab.txt")}).code, 0);
    ASSERT_EQ(run({"featurize", "--images", p("images"), "--boxes", p("boxes.txt"), "--synthetic-seed", "5",
                   "--feature-dim", "6", "--out", p("feats.txt")})
                  .code,
              0);
    ASSERT_EQ(train_to("model.ckpt", "loss.tsv").code, 0);
  }

  static std::string p(const std::string& name) { return (dir_ / name).string(); }

  static CliRun train_to(const std::string& ckpt, const std::string& log) {
    return run({"train", "--features", p("feats.txt"), "--captions", p("captions.tsv"), "--vocab", p("vocab.txt"),
                "--config", p("train.cfg"), "--out", p(ckpt), "--loss-log", p(log), "--embed-dim", "6",
                "--hidden-dim", "7", "--att-dim", "5"});
  }

  static inline fs::path dir_;
};

TEST_F(CliPipeline, OutputsCarryVersionLinesAndManifests) {
  EXPECT_TRUE(read_file(p("vocab.txt")).starts_with("# capforge vocab v1\n"));
  EXPECT_TRUE(read_file(p("feats.txt")).starts_with("ANNOT v1 D=12\n"));
  EXPECT_TRUE(read_file(p("model.ckpt")).starts_with("CAPFORGE-CHECKPOINT v1\n"));
  EXPECT_TRUE(read_file(p("loss.tsv")).starts_with("# capforge loss-log v1\n"));
  for (const char* f : {"vocab.txt", "feats.txt", "model.ckpt"}) {
    const std::string m = read_file(p(std::string(f) + ".manifest.json"));
    EXPECT_NE(m.find("\"version\""), std::string::npos);
    EXPECT_NE(m.find("\"seed\""), std::string::npos);
  }
  const auto feats = load_feature_file(p("feats.txt"));
  ASSERT_EQ(feats.size(), 6u);
  EXPECT_EQ(feats.at("im0").num_rows(), 4);
  const auto ck = load_checkpoint(p("model.ckpt"));
  EXPECT_EQ(ck.params.dims, (DecoderDims{static_cast<int>(load_vocab(p("vocab.txt")).size()), 6, 7, 12, 5}));
  EXPECT_EQ(ck.seed, 3u);
}

TEST_F(CliPipeline, TrainIsByteDeterministic) {
  ASSERT_EQ(train_to("again.ckpt", "again.tsv").code, 0);
  EXPECT_EQ(read_file(p("again.ckpt")), read_file(p("model.ckpt")));
  EXPECT_EQ(read_file(p("again.tsv")), read_file(p("loss.tsv")));
}

TEST_F(CliPipeline, SeedEnvironmentOverride) {
  ::setenv("CAPFORGE_SEED", "11", 1);
  const CliRun r = train_to("env.ckpt", "env.tsv");
  ::unsetenv("CAPFORGE_SEED");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_checkpoint(p("env.ckpt")).seed, 11u);
  EXPECT_NE(read_file(p("env.ckpt")), read_file(p("model.ckpt")));
}

TEST_F(CliPipeline, BeamOneEqualsGreedy) {
  const std::vector<std::string> base = {"caption", "--features", p("feats.txt"), "--checkpoint", p("model.ckpt"),
                                         "--vocab", p("vocab.txt")};
  auto with = [&](std::vector<std::string> extra) {
    auto args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  };
  ASSERT_EQ(with({"--beam", "1", "--out", p("beam1.txt")}).code, 0);
  ASSERT_EQ(with({"--greedy", "--out", p("greedy.txt")}).code, 0);
  ASSERT_EQ(with({"--out", p("beam4.txt")}).code, 0);
  const std::string greedy = read_file(p("greedy.txt"));
  EXPECT_EQ(read_file(p("beam1.txt")), greedy);
  EXPECT_TRUE(greedy.starts_with("# capforge captions v1\n"));
  EXPECT_EQ(split_lines(greedy).size(), 7u);
  EXPECT_EQ(with({"--greedy", "--beam", "2", "--out", p("x.txt")}).code, kExitUsage);
}

TEST_F(CliPipeline, EvaluatePerfectCandidates) {
  std::string cands;
  for (int i = 0; i < 6; ++i) {
    const auto& lines = split_lines(read_file(p("captions.tsv")));
    cands += lines[static_cast<std::size_t>(2 * i)] + "\n";
  }
  write_file_atomic(p("perfect.tsv"), cands);
  const CliRun r = run({"evaluate", "--candidates", p("perfect.tsv"), "--references", p("captions.tsv"), "--out",
                     p("scores.txt")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string scores = read_file(p("scores.txt"));
  EXPECT_TRUE(scores.starts_with("# capforge scores v1\n"));
  EXPECT_NE(scores.find("Bleu_1\t1.0000\n"), std::string::npos);
  EXPECT_NE(scores.find("ROUGE_L\t1.0000\n"), std::string::npos);
  EXPECT_NE(r.out.find("Bleu_1\t1.0000"), std::string::npos);
}

TEST_F(CliPipeline, EvaluateRejectsMissingReferences) {
  write_file_atomic(p("stray.tsv"), "nope\ta caption\nim0\ta dog\n");
  EXPECT_EQ(run({"evaluate", "--candidates", p("stray.tsv"), "--references", p("captions.tsv"), "--out",
                 p("s2.txt")})
                .code,
            kExitFailure);
}

TEST_F(CliPipeline, AttentionTrace) {
  const CliRun r = run({"attn-trace", "--features", p("feats.txt"), "--checkpoint", p("model.ckpt"), "--vocab",
                     p("vocab.txt"), "--out", p("trace.txt")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = split_lines(read_file(p("trace.txt")));
  ASSERT_FALSE(lines.empty());
  EXPECT_EQ(lines[0], "# capforge attn-trace v1");
  int images = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].starts_with("# image ")) {
      ++images;
      continue;
    }
    const auto fields = split_ws(lines[i]);
    ASSERT_EQ(fields.size(), 5u) << lines[i];  // word + 4 weights
    double sum = 0.0;
    for (std::size_t k = 1; k < fields.size(); ++k) sum += parse_double(fields[k], "alpha");
    EXPECT_NEAR(sum, 1.0, 5e-6);
  }
  EXPECT_EQ(images, 6);
}

TEST(Cli, GradcheckDefaultsPass) {
  const CliRun r = run({"gradcheck", "--seed", "3"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
  EXPECT_NE(r.out.find("gate_recurrent_f"), std::string::npos);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run({"gradcheck", "--no-such-flag"}).code, kExitUsage);
  EXPECT_EQ(run({"build-vocab", "--captions", "x"}).code, kExitUsage);
  EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST(Cli, OperationalFailures) {
  const fs::path missing = fs::temp_directory_path() / "capforge_cli_missing" / "none.tsv";
  const CliRun r = run({"build-vocab", "--captions", missing.string(), "--out",
                     (fs::temp_directory_path() / "capforge_cli_v.txt").string()});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
  EXPECT_EQ(run({"gradcheck", "--dims", "V=0,m=1,H=1,D=1,L=1,K=1"}).code, kExitFailure);
}

}  // namespace
}  // namespace capforge
