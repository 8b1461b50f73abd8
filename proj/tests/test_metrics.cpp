#include <gtest/gtest.h>

#include <random>

#include "glasskit/metrics.hpp"
#include "oracles.hpp"

using namespace glasskit;

namespace {

PredictionMap pmap(int h, int w, std::vector<double> v) {
  PredictionMap p(h, w);
  p.values = std::move(v);
  return p;
}

BinaryMask bmask(int h, int w, std::vector<std::uint8_t> v) {
  BinaryMask m(h, w);
  m.values = std::move(v);
  return m;
}

std::vector<int> as_int(const BinaryMask& m) { return {m.values.begin(), m.values.end()}; }

// Random pair; half the predictions are quantized to 8-bit levels so that
// exact threshold hits are exercised.
std::pair<PredictionMap, BinaryMask> random_pair(std::mt19937_64& rng, int h = 8, int w = 8) {
  std::uniform_real_distribution<double> u(0, 1);
  const double density = u(rng);
  const bool quantize = rng() & 1;
  PredictionMap p(h, w);
  BinaryMask g(h, w);
  for (std::size_t i = 0; i < p.size(); ++i) {
    g.values[i] = u(rng) < density;
    double v = 0.6 * u(rng) + 0.4 * g.values[i] * u(rng);
    p.values[i] = quantize ? std::round(v * 255) / 255 : v;
  }
  return {p, g};
}

}  // namespace

TEST(Confusion, FourPixelFixture) {
  const auto c = confusion_counts(pmap(2, 2, {1, 1, 0, 0}), bmask(2, 2, {1, 0, 0, 0}), 0.5);
  EXPECT_EQ(c.tp, 1);
  EXPECT_EQ(c.fp, 1);
  EXPECT_EQ(c.tn, 2);
  EXPECT_EQ(c.fn, 0);
  EXPECT_DOUBLE_EQ(pixel_accuracy(c), 0.75);
  EXPECT_DOUBLE_EQ(iou(c), 0.5);
}

TEST(Confusion, PerfectPredictionAtAnyThreshold) {
  const auto gt = bmask(2, 3, {1, 0, 1, 1, 0, 0});
  PredictionMap p(2, 3);
  for (std::size_t i = 0; i < p.size(); ++i) p.values[i] = gt.values[i];
  for (double t : {0.01, 0.5, 1.0}) {
    const auto c = confusion_counts(p, gt, t);
    EXPECT_EQ(c.fp, 0);
    EXPECT_EQ(c.fn, 0);
  }
}

TEST(Confusion, AllBelowThreshold) {
  const auto c = confusion_counts(PredictionMap(3, 4, 0.4), BinaryMask(3, 4, 1), 0.5);
  EXPECT_EQ(c.tp, 0);
  EXPECT_EQ(c.fn, 12);
}

TEST(Confusion, ShapeMismatchAndBadThreshold) {
  EXPECT_THROW(confusion_counts(PredictionMap(2, 2), BinaryMask(2, 3), 0.5), InvalidInput);
  EXPECT_THROW(confusion_counts(PredictionMap(2, 2), BinaryMask(2, 2), 1.5), InvalidInput);
}

TEST(Confusion, BinarizationIsIdempotent) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    auto [p, g] = random_pair(rng);
    const auto c = confusion_counts(p, g, 0.5);
    PredictionMap bin(p.height, p.width);
    for (std::size_t i = 0; i < p.size(); ++i) bin.values[i] = p.values[i] >= 0.5 ? 1.0 : 0.0;
    EXPECT_EQ(confusion_counts(bin, g, 0.5), c);
  }
}

TEST(Scores, DegenerateConventions) {
  ConfusionCounts none{0, 16, 0, 0};
  EXPECT_EQ(iou(none), 1.0);
  EXPECT_EQ(ber(none), 0.0);
  ConfusionCounts inverted{0, 0, 3, 5};
  EXPECT_EQ(pixel_accuracy(inverted), 0.0);
  EXPECT_EQ(ber(inverted), 100.0);
  ConfusionCounts two_by_two{1, 2, 0, 1};
  EXPECT_DOUBLE_EQ(ber(two_by_two), 25.0);
}

TEST(FMeasure, FourPixelFixture) {
  const auto p = pmap(2, 2, {1, 1, 0, 0});
  const auto g = bmask(2, 2, {1, 0, 0, 0});
  const double expect = 1.3 * 0.5 * 1.0 / (0.3 * 0.5 + 1.0);
  EXPECT_NEAR(f_measure_max(p, g), 0.565217, 1e-6);
  EXPECT_DOUBLE_EQ(f_measure_max(p, g), expect);
  EXPECT_DOUBLE_EQ(oracle::max_f(p.values, as_int(g)), expect);
}

TEST(FMeasure, PerfectAndEmpty) {
  const auto g = bmask(1, 4, {1, 0, 1, 0});
  EXPECT_DOUBLE_EQ(f_measure_max(pmap(1, 4, {1, 0, 1, 0}), g), 1.0);
  EXPECT_EQ(f_measure_max(pmap(1, 4, {0.3, 0.9, 0.1, 0.0}), BinaryMask(1, 4)), 0.0);
}

TEST(FMeasure, MatchesThresholdSweep) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 100; ++t) {
    auto [p, g] = random_pair(rng);
    EXPECT_NEAR(f_measure_max(p, g), oracle::max_f(p.values, as_int(g)), 1e-12) << "pair " << t;
  }
}

TEST(FMeasure, InvariantUnderBucketPreservingRescale) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 50; ++t) {
    auto [p, g] = random_pair(rng);
    PredictionMap q = p;
    for (auto& v : q.values) {
      int k = 0;
      while (k + 1 < 256 && (k + 1) / 255.0 <= v) ++k;
      const double lo = k / 255.0, hi = (k + 1) / 255.0;
      if (k < 255) v = lo + (v - lo) * (v - lo) / (hi - lo);  // monotone, stays in [lo, hi)
    }
    EXPECT_EQ(f_measure_max(q, g), f_measure_max(p, g));
  }
}

TEST(Mae, Examples) {
  EXPECT_EQ(mae(pmap(1, 2, {1, 0}), bmask(1, 2, {1, 0})), 0.0);
  EXPECT_DOUBLE_EQ(mae(PredictionMap(2, 2, 0.0), bmask(2, 2, {1, 1, 0, 0})), 0.5);
  EXPECT_DOUBLE_EQ(mae(PredictionMap(3, 3, 0.25), BinaryMask(3, 3)), 0.25);
}

TEST(Dataset, MatchesPixelLoopOracle) {
  std::mt19937_64 rng(99);
  std::vector<std::pair<PredictionMap, BinaryMask>> pairs;
  for (int i = 0; i < 100; ++i) pairs.push_back(random_pair(rng));
  const auto report = evaluate_dataset(pairs);
  double acc = 0, io = 0, ma = 0, be = 0;
  std::vector<std::vector<double>> preds;
  std::vector<std::vector<int>> gts;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [p, g] = pairs[i];
    const auto c = oracle::count(p.values, as_int(g), 0.5);
    EXPECT_NEAR(report.per_image[i].acc, oracle::acc(c), 1e-9);
    EXPECT_NEAR(report.per_image[i].iou, oracle::iou(c), 1e-9);
    EXPECT_NEAR(report.per_image[i].ber, oracle::ber(c), 1e-9);
    EXPECT_NEAR(report.per_image[i].mae, oracle::mae(p.values, as_int(g)), 1e-9);
    acc += oracle::acc(c);
    io += oracle::iou(c);
    be += oracle::ber(c);
    ma += oracle::mae(p.values, as_int(g));
    preds.push_back(p.values);
    gts.push_back(as_int(g));
  }
  EXPECT_NEAR(report.acc, acc / 100, 1e-9);
  EXPECT_NEAR(report.iou, io / 100, 1e-9);
  EXPECT_NEAR(report.ber, be / 100, 1e-9);
  EXPECT_NEAR(report.mae, ma / 100, 1e-9);
  EXPECT_NEAR(report.f_beta, oracle::dataset_max_f(preds, gts), 1e-9);
  EXPECT_EQ(report.image_count, 100u);
}

TEST(Dataset, RangesHold) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 30; ++t) {
    std::vector<std::pair<PredictionMap, BinaryMask>> pairs{random_pair(rng, 5, 7), random_pair(rng, 5, 7)};
    const auto r = evaluate_dataset(pairs);
    for (double v : {r.acc, r.iou, r.f_beta, r.mae}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_GE(r.ber, 0.0);
    EXPECT_LE(r.ber, 100.0);
  }
}

TEST(Dataset, PerfectPairAndMeanIou) {
  const auto g = bmask(2, 2, {1, 1, 0, 0});
  const auto perfect = evaluate_dataset({{pmap(2, 2, {1, 1, 0, 0}), g}});
  EXPECT_EQ(perfect.acc, 1.0);
  EXPECT_EQ(perfect.iou, 1.0);
  EXPECT_EQ(perfect.f_beta, 1.0);
  EXPECT_EQ(perfect.mae, 0.0);
  EXPECT_EQ(perfect.ber, 0.0);
  const auto half = evaluate_dataset({{pmap(2, 2, {1, 1, 0, 0}), g}, {pmap(2, 2, {1, 1, 1, 1}), g}});
  EXPECT_DOUBLE_EQ(half.iou, 0.75);
}

TEST(Dataset, EmptyInputRejected) { EXPECT_THROW(evaluate_dataset({}), InvalidInput); }
