#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "glasskit/config.hpp"
#include "glasskit/report.hpp"
#include "glasskit/trainer.hpp"

using namespace glasskit;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("glasskit_trainer_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

nn::NetworkConfig tiny_net() {
  nn::NetworkConfig c;
  c.input_size = 32;
  c.encoder_channels = {8, 8, 16, 16, 16};
  c.decoder_width = 8;
  return c;
}

std::shared_ptr<std::vector<Sample>> synthetic_samples(const fs::path& root, std::size_t count, int size,
                                                       std::uint64_t seed) {
  SceneConfig sc;
  sc.size = size;
  sc.seed = seed;
  return std::make_shared<std::vector<Sample>>(load_samples(write_synthetic_dataset(root, count, sc), size, false));
}

constexpr double kBaselineForeground = 0.185394287109375;
constexpr double kBaselineIou = 0.197911;

}  // namespace

TEST(PolyLr, Examples) {
  TrainConfig cfg;
  cfg.max_iters = 2000;
  EXPECT_EQ(poly_lr(0, cfg), 1e-4);
  EXPECT_EQ(poly_lr(2000, cfg), 0.0);
  EXPECT_NEAR(poly_lr(1000, cfg), 5.3589e-5, 1e-9);
}

TEST(PolyLr, NonIncreasingAndRangeChecked) {
  TrainConfig cfg;
  cfg.max_iters = 97;
  cfg.poly_power = 0.7;
  for (int i = 1; i <= cfg.max_iters; ++i) EXPECT_LE(poly_lr(i, cfg), poly_lr(i - 1, cfg));
  EXPECT_THROW(poly_lr(-1, cfg), InvalidInput);
  EXPECT_THROW(poly_lr(98, cfg), InvalidInput);
}

TEST(TrainConfigCheck, RejectsInvalid) {
  TrainConfig cfg;
  cfg.poly_power = 1.5;
  EXPECT_THROW(cfg.validate(), InvalidInput);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), InvalidInput);
  cfg = TrainConfig{};
  cfg.base_lr = 0;
  EXPECT_THROW(cfg.validate(), InvalidInput);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const auto dir = scratch("ckpt");
  nn::GlassNet<float> a(tiny_net(), 3), b(tiny_net(), 4);
  nn::save_checkpoint((dir / "a.glck").string(), a.parameters());
  nn::load_checkpoint((dir / "a.glck").string(), b.parameters());
  nn::save_checkpoint((dir / "b.glck").string(), b.parameters());
  EXPECT_EQ(slurp(dir / "a.glck"), slurp(dir / "b.glck"));
  fs::remove_all(dir);
}

TEST(Checkpoint, MismatchedNetworkRejected) {
  const auto dir = scratch("ckpt_bad");
  nn::GlassNet<float> a(tiny_net(), 3);
  nn::save_checkpoint((dir / "a.glck").string(), a.parameters());
  auto other = tiny_net();
  other.decoder_width = 12;
  nn::GlassNet<float> b(other, 3);
  EXPECT_THROW(nn::load_checkpoint((dir / "a.glck").string(), b.parameters()), IoError);
  auto no_bfm = tiny_net();
  no_bfm.enable_bfm = false;
  nn::GlassNet<float> c(no_bfm, 3);
  EXPECT_THROW(nn::load_checkpoint((dir / "a.glck").string(), c.parameters()), IoError);
  std::ofstream(dir / "junk.glck") << "GLCKjunk";
  EXPECT_THROW(nn::load_checkpoint((dir / "junk.glck").string(), a.parameters()), IoError);
  fs::remove_all(dir);
}

TEST(Train, TenIterationsAreBitReproducible) {
  const auto dir = scratch("det");
  auto samples = synthetic_samples(dir / "data", 8, 32, 11);
  TrainConfig cfg;
  cfg.max_iters = 10;
  cfg.eval_every = 5;
  cfg.seed = 5;
  cfg.base_lr = 0.01;
  std::string first;
  for (int run = 0; run < 2; ++run) {
    nn::GlassNet<float> net(tiny_net(), derive_seed(cfg.seed, "init"));
    const auto out = dir / ("run" + std::to_string(run));
    const auto r = train(net, samples, samples.get(), cfg, out);
    EXPECT_EQ(r.loss_history.size(), 10u);
    EXPECT_EQ(r.evals.size(), 2u);
    EXPECT_TRUE(fs::exists(r.best_checkpoint));
    const auto bytes = slurp(r.final_checkpoint);
    if (run == 0)
      first = bytes;
    else
      EXPECT_EQ(bytes, first);
  }
  EXPECT_EQ(slurp(dir / "run0" / "history.txt"), slurp(dir / "run1" / "history.txt"));
  fs::remove_all(dir);
}

TEST(Train, AuxiliaryStreamsDisabledStillTrains) {
  const auto dir = scratch("noaux");
  auto samples = synthetic_samples(dir / "data", 4, 32, 12);
  auto nc = tiny_net();
  nc.enable_boundary_stream = false;
  nc.enable_interior_stream = false;
  TrainConfig cfg;
  cfg.max_iters = 4;
  cfg.base_lr = 0.01;
  nn::GlassNet<float> net(nc, 1);
  const auto r = train(net, samples, nullptr, cfg, dir / "out");
  ASSERT_EQ(r.loss_history.size(), 4u);
  for (double l : r.loss_history) EXPECT_TRUE(std::isfinite(l));
  EXPECT_TRUE(r.best_checkpoint.empty());
  EXPECT_TRUE(fs::exists(r.final_checkpoint));
  fs::remove_all(dir);
}

TEST(Train, NonFiniteLossAborts) {
  const auto dir = scratch("nan");
  auto samples = synthetic_samples(dir / "data", 2, 32, 13);
  (*samples)[0].labels.interior.values[0] = std::numeric_limits<float>::quiet_NaN();
  TrainConfig cfg;
  cfg.max_iters = 2;
  cfg.augment = false;
  nn::GlassNet<float> net(tiny_net(), 1);
  try {
    train(net, samples, nullptr, cfg, dir / "out");
    FAIL() << "expected CheckFailure";
  } catch (const CheckFailure& e) {
    EXPECT_NE(std::string(e.what()).find("iter 1"), std::string::npos);
  }
  fs::remove_all(dir);
}

// Default network, default optimizer settings, one batch repeated.
TEST(Train, FixedBatchLossStrictlyDecreasesForMostSeeds) {
  const auto dir = scratch("fixed");
  auto samples = synthetic_samples(dir / "data", 4, 64, 21);
  const auto batch = make_batch<float>(*samples, {0, 1, 2, 3});
  const auto sup = supervision_of(batch);
  int monotone = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TrainConfig cfg;
    cfg.max_iters = 50;
    nn::GlassNet<float> net(nn::NetworkConfig{}, derive_seed(seed, "init"));
    double prev = std::numeric_limits<double>::infinity();
    bool ok = true;
    for (int it = 0; it < cfg.max_iters; ++it) {
      const auto loss = nn::network_loss(net, net.forward(batch.images, true), sup);
      ok = ok && loss.total < prev;
      prev = loss.total;
      nn::backward(loss.total_tensor);
      nn::sgd_step(net.parameters(), poly_lr(it, cfg), {cfg.momentum, cfg.weight_decay});
    }
    monotone += ok;
  }
  EXPECT_GE(monotone, 4);
  fs::remove_all(dir);
}

TEST(Evaluate, TwiceGivesIdenticalReport) {
  const auto dir = scratch("eval");
  SceneConfig sc;
  sc.size = 32;
  sc.seed = 2;
  const auto manifest = write_synthetic_dataset(dir / "data", 6, sc);
  nn::GlassNet<float> net(tiny_net(), 9);
  nn::save_checkpoint((dir / "n.glck").string(), net.parameters());
  const auto a = evaluate_checkpoint((dir / "n.glck").string(), manifest, tiny_net());
  const auto b = evaluate_checkpoint((dir / "n.glck").string(), manifest, tiny_net());
  EXPECT_EQ(a.iou, b.iou);
  EXPECT_EQ(a.f_beta, b.f_beta);
  EXPECT_EQ(a.mae, b.mae);
  EXPECT_EQ(a.image_count, 6u);
  EXPECT_EQ(report_to_json(a).dump(), report_to_json(b).dump());
  auto other = tiny_net();
  other.decoder_width = 4;
  EXPECT_THROW(evaluate_checkpoint((dir / "n.glck").string(), manifest, other), IoError);
  fs::remove_all(dir);
}

// Untrained default network on the 32-image validation split (seed 2).
TEST(Evaluate, UntrainedBaselineFixture) {
  const auto dir = scratch("baseline");
  SceneConfig sc;
  sc.seed = 2;
  const auto manifest = write_synthetic_dataset(dir / "data", 32, sc);
  const auto samples = load_samples(manifest, 64, false);
  double fg = 0;
  for (const auto& s : samples)
    for (auto v : s.mask.values) fg += v;
  fg /= 32.0 * 64 * 64;
  nn::GlassNet<float> net(nn::NetworkConfig{}, derive_seed(1, "init"));
  const auto r = evaluate_model(net, samples);
  RecordProperty("foreground_prior", std::to_string(fg));
  RecordProperty("untrained_iou", std::to_string(r.iou));
  EXPECT_NEAR(fg, kBaselineForeground, 1e-6);
  EXPECT_NEAR(r.iou, kBaselineIou, 1e-4);
  EXPECT_LT(std::abs(r.iou - fg), 0.05);
  fs::remove_all(dir);
}

TEST(Config, FormatParseRoundTrip) {
  RunConfig rc;
  rc.net.enable_bfm = false;
  rc.net.dilation_rates = {1, 3};
  rc.train.base_lr = 0.0371;
  rc.train.precision = Precision::f64;
  rc.train.seed = 17;
  rc.data.tint_alpha_range = {0.1, 0.3};
  const auto text = format_config(rc);
  std::istringstream is(text);
  const auto back = parse_config(is);
  EXPECT_EQ(format_config(back), text);
  EXPECT_FALSE(back.net.enable_bfm);
  EXPECT_EQ(back.train.base_lr, 0.0371);
}

TEST(Config, SeedCommentsAndErrors) {
  std::istringstream ok("# desk run\nseed = 9   # both streams\n\ntrain.max_iters=10\n");
  const auto rc = parse_config(ok);
  EXPECT_EQ(rc.train.seed, 9u);
  EXPECT_EQ(rc.data.seed, 9u);
  EXPECT_EQ(rc.train.max_iters, 10);
  std::istringstream unknown("net.colour = red\n");
  EXPECT_THROW(parse_config(unknown), InvalidInput);
  std::istringstream malformed("train.max_iters 10\n");
  EXPECT_THROW(parse_config(malformed), InvalidInput);
  std::istringstream bad_value("train.batch_size = four\n");
  EXPECT_THROW(parse_config(bad_value), InvalidInput);
  std::istringstream invalid("net.input_size = 40\n");
  EXPECT_THROW(parse_config(invalid), InvalidInput);
  EXPECT_THROW(load_config("/nonexistent/x.cfg"), IoError);
}

TEST(Config, DeskConfigLoads) {
  const auto rc = load_config(GLASSKIT_SOURCE_DIR "/configs/desk.cfg");
  EXPECT_EQ(rc.train.max_iters, 2000);
  EXPECT_EQ(rc.train.eval_every, 200);
  EXPECT_EQ(rc.net.input_size, 64);
}
