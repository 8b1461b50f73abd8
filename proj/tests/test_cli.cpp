#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"

using namespace glasskit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "glasskit");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("glasskit_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

std::size_t lines(const std::string& s) { return std::count(s.begin(), s.end(), '\n'); }

}  // namespace

TEST(Cli, HelpOnEverySubcommandListsFlags) {
  const std::map<std::string, std::vector<std::string>> flags{
      {"synth", {"--out", "--count", "--size", "--seed"}},
      {"decouple", {"--gt", "--out"}},
      {"train", {"--data", "--config", "--out", "--val"}},
      {"eval", {"--pred", "--gt", "--report"}},
      {"predict", {"--ckpt", "--image", "--out", "--config"}},
      {"gradcheck", {"--seed"}}};
  for (const auto& [sub, names] : flags) {
    const auto r = invoke({sub, "--help"});
    EXPECT_EQ(r.code, 0) << sub;
    for (const auto& f : names) EXPECT_NE(r.out.find(f), std::string::npos) << sub << " " << f;
  }
  EXPECT_EQ(invoke({"--help"}).code, 0);
}

TEST(Cli, UsageErrors) {
  for (const auto& args : std::vector<std::vector<std::string>>{
           {}, {"fly"}, {"synth", "--count", "3"}, {"eval", "--pred", "a", "--gt", "b", "--bogus", "1"},
           {"synth", "--out", "x", "--count", "0"}}) {
    const auto r = invoke(args);
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(lines(r.err), 1u) << r.err;
    EXPECT_EQ(r.err.rfind("glasskit: ", 0), 0u);
  }
}

TEST(Cli, SynthThenEvalIdenticalDirectories) {
  const auto dir = scratch("eval");
  ASSERT_EQ(invoke({"synth", "--out", dir.string(), "--count", "5", "--size", "32", "--seed", "3"}).code, 0);
  const auto masks = (dir / "masks").string();
  const auto r = invoke({"eval", "--pred", masks, "--gt", masks, "--report", (dir / "r.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("1.000"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("0.00"), std::string::npos) << r.out;
  const auto j = nlohmann::json::parse(slurp(dir / "r.json"));
  EXPECT_EQ(j["acc"].get<double>(), 1.0);
  EXPECT_EQ(j["ber"].get<double>(), 0.0);
  fs::remove_all(dir);
}

TEST(Cli, EvalIoErrors) {
  const auto dir = scratch("eval_io");
  invoke({"synth", "--out", (dir / "a").string(), "--count", "2", "--size", "16"});
  invoke({"synth", "--out", (dir / "b").string(), "--count", "3", "--size", "16"});
  invoke({"synth", "--out", (dir / "c").string(), "--count", "2", "--size", "24"});
  auto r = invoke({"eval", "--pred", (dir / "a/masks").string(), "--gt", (dir / "b/masks").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(lines(r.err), 1u);
  r = invoke({"eval", "--pred", (dir / "c/masks").string(), "--gt", (dir / "a/masks").string()});
  EXPECT_EQ(r.code, 2);
  r = invoke({"eval", "--pred", (dir / "a/masks").string(), "--gt", (dir / "nothing").string()});
  EXPECT_EQ(r.code, 2);
  fs::remove_all(dir);
}

TEST(Cli, DecoupleSumReproducesMask) {
  const auto dir = scratch("decouple");
  invoke({"synth", "--out", dir.string(), "--count", "4", "--size", "48", "--seed", "8"});
  const auto r = invoke({"decouple", "--gt", (dir / "masks").string(), "--out", (dir / "labels").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const auto& f : cli::png_files(dir / "masks")) {
    const auto gt = load_gray(f.string());
    const auto stem = (dir / "labels" / f.stem()).string();
    const auto bl = load_gray(stem + "_bl.png"), dl = load_gray(stem + "_dl.png");
    ASSERT_TRUE(fs::exists(stem + ".bl.gldt"));
    ASSERT_TRUE(fs::exists(stem + ".dl.gldt"));
    for (std::size_t i = 0; i < gt.size(); ++i) EXPECT_LE(std::abs(int(bl.values[i]) + dl.values[i] - gt.values[i]), 1);
  }
  fs::remove_all(dir);
}

TEST(Cli, SubcommandsAreIdempotent) {
  const auto dir = scratch("idem");
  for (const char* run : {"r1", "r2"}) {
    const auto root = dir / run;
    ASSERT_EQ(invoke({"synth", "--out", (root / "data").string(), "--count", "4", "--size", "32", "--seed", "6"}).code, 0);
    ASSERT_EQ(invoke({"decouple", "--gt", (root / "data/masks").string(), "--out", (root / "labels").string()}).code, 0);
    std::ofstream(root / "run.cfg") << "seed = 2\nnet.input_size = 32\nnet.encoder_channels = 8, 8, 8, 8, 8\n"
                                       "net.decoder_width = 4\ntrain.max_iters = 3\ntrain.eval_every = 2\n"
                                       "train.base_lr = 0.01\n";
    const auto tr = invoke({"train", "--data", (root / "data").string(), "--val", (root / "data").string(),
                            "--config", (root / "run.cfg").string(), "--out", (root / "out").string()});
    ASSERT_EQ(tr.code, 0) << tr.err;
    ASSERT_EQ(invoke({"predict", "--ckpt", (root / "out/final.glck").string(), "--image",
                      (root / "data/images/00001.png").string(), "--out", (root / "pred/00001.png").string()})
                  .code,
              0);
    ASSERT_EQ(invoke({"eval", "--pred", (root / "data/masks").string(), "--gt", (root / "data/masks").string(),
                      "--report", (root / "report.txt").string()})
                  .code,
              0);
  }
  for (const char* rel : {"data/manifest.txt", "data/images/00002.png", "data/masks/00003.png",
                          "labels/00000_bl.png", "labels/00001.dl.gldt", "out/final.glck", "out/best.glck",
                          "out/history.txt", "out/config.txt", "pred/00001.png", "report.txt"}) {
    ASSERT_TRUE(fs::exists(dir / "r1" / rel)) << rel;
    EXPECT_EQ(slurp(dir / "r1" / rel), slurp(dir / "r2" / rel)) << rel;
  }
  const auto pred = load_gray((dir / "r1/pred/00001.png").string());
  EXPECT_EQ(pred.height, 32);
  fs::remove_all(dir);
}

TEST(Cli, TrainFailures) {
  const auto dir = scratch("train_bad");
  std::ofstream(dir / "bad.cfg") << "net.input_size = 40\n";
  auto r = invoke({"train", "--data", (dir / "none").string(), "--config", (dir / "bad.cfg").string(), "--out",
                   (dir / "out").string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(lines(r.err), 1u);
  r = invoke({"train", "--data", (dir / "none").string(), "--config", (dir / "missing.cfg").string(), "--out",
              (dir / "out").string()});
  EXPECT_EQ(r.code, 2);
  std::ofstream(dir / "ok.cfg") << "train.max_iters = 1\n";
  r = invoke({"train", "--data", (dir / "none").string(), "--config", (dir / "ok.cfg").string(), "--out",
              (dir / "out").string()});
  EXPECT_EQ(r.code, 2);
  fs::remove_all(dir);
}

TEST(Cli, PredictMissingCheckpoint) {
  const auto dir = scratch("predict_bad");
  const auto r = invoke({"predict", "--ckpt", (dir / "x.glck").string(), "--image", (dir / "x.png").string(),
                         "--out", (dir / "y.png").string()});
  EXPECT_EQ(r.code, 2);
  fs::remove_all(dir);
}

TEST(Cli, GradcheckSeedSeven) {
  const auto r = invoke({"gradcheck", "--seed", "7"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("gradient check passed"), std::string::npos);
}
