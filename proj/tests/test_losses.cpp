#include <gtest/gtest.h>

#include <random>

#include "glasskit/losses.hpp"
#include "oracles.hpp"

using namespace glasskit::nn;

using TD = Tensor<double>;

namespace {

TD random_map(std::mt19937_64& rng, Shape s, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(numel(s));
  for (auto& e : v) e = u(rng);
  return TD::from(std::move(s), std::move(v));
}

TD binarize(TD t) {
  for (auto& v : t.mutable_values()) v = v < 0.5 ? 0.0 : 1.0;
  return t;
}

}  // namespace

TEST(Bce, HalfProbability) {
  EXPECT_NEAR(bce_loss(TD::scalar(0.0), TD::scalar(1.0)).item(), 0.693147, 1e-6);
  std::mt19937_64 rng(1);
  auto g = random_map(rng, {2, 1, 3, 3}, 0, 1);
  EXPECT_NEAR(bce_loss(TD::zeros({2, 1, 3, 3}), g).item(), std::log(2.0), 1e-12);
}

TEST(Bce, SaturatedCorrectApproachesZero) {
  auto g = TD::from({1, 1, 1, 2}, {1, 0});
  EXPECT_LT(bce_loss(TD::from({1, 1, 1, 2}, {40, -40}), g).item(), 1e-15);
}

TEST(Bce, FiniteAndNonNegativeOverLogitRange) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 200; ++t) {
    auto x = random_map(rng, {1, 1, 4, 4}, -30, 30);
    auto g = random_map(rng, {1, 1, 4, 4}, 0, 1);
    if (t % 2) g = binarize(g);
    const double l = bce_loss(x, g).item();
    EXPECT_TRUE(std::isfinite(l));
    EXPECT_GE(l, 0.0);
  }
  EXPECT_TRUE(std::isfinite(bce_loss(TD::scalar(-1e4), TD::scalar(1.0)).item()));
}

TEST(Bce, MatchesNaiveFormulaInSafeRange) {
  std::mt19937_64 rng(3);
  auto x = random_map(rng, {2, 1, 3, 3}, -5, 5);
  auto g = random_map(rng, {2, 1, 3, 3}, 0, 1);
  double expect = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) expect += oracle::bce(x.data()[i], g.data()[i]);
  EXPECT_NEAR(bce_loss(x, g).item(), expect / x.numel(), 1e-12);
}

TEST(Bce, ShapeMismatch) { EXPECT_THROW(bce_loss(TD::zeros({1, 1, 2, 2}), TD::zeros({1, 1, 2, 3})), glasskit::InvalidInput); }

TEST(IouLoss, Examples) {
  auto g = TD::from({1, 1, 2, 2}, {1, 1, 0, 0});
  EXPECT_EQ(iou_loss(g, g).item(), 0.0);
  EXPECT_EQ(iou_loss(TD::zeros({1, 1, 2, 2}), g).item(), 1.0);
  EXPECT_DOUBLE_EQ(iou_loss(TD::from({1, 1, 1, 1}, {0.5}), TD::from({1, 1, 1, 1}, {1.0})).item(), 0.5);
  EXPECT_EQ(iou_loss(TD::zeros({1, 1, 2, 2}), TD::zeros({1, 1, 2, 2})).item(), 0.0);
}

TEST(IouLoss, BoundedOnRandomInputs) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 1000; ++t) {
    auto p = random_map(rng, {2, 1, 3, 3}, 0, 1);
    auto g = random_map(rng, {2, 1, 3, 3}, 0, 1);
    if (t % 3 == 0) g = binarize(g);
    if (t % 5 == 0) p = binarize(p);
    const double l = iou_loss(p, g).item();
    EXPECT_GE(l, 0.0);
    EXPECT_LE(l, 1.0);
  }
}

TEST(IouLoss, PerImageMeanOverBatch) {
  std::mt19937_64 rng(5);
  auto p = random_map(rng, {3, 1, 4, 4}, 0, 1);
  auto g = binarize(random_map(rng, {3, 1, 4, 4}, 0, 1));
  double expect = 0;
  for (int b = 0; b < 3; ++b) {
    std::vector<double> pi(p.data() + b * 16, p.data() + (b + 1) * 16), gi(g.data() + b * 16, g.data() + (b + 1) * 16);
    expect += oracle::soft_iou_loss(pi, gi);
  }
  EXPECT_NEAR(iou_loss(p, g).item(), expect / 3, 1e-12);
}

namespace {

struct Fixture {
  PredictionBundle<double> bundle;
  SupervisionSet<double> sup;
};

Fixture random_fixture(std::mt19937_64& rng, bool interior = true, std::size_t nb = 5) {
  const Shape s{2, 1, 4, 4};
  Fixture f;
  if (interior) f.bundle.interior_map = random_map(rng, s, -3, 3);
  for (std::size_t k = 0; k < nb; ++k) f.bundle.boundary_maps.push_back(random_map(rng, s, -3, 3));
  for (int k = 0; k < 3; ++k) f.bundle.glass_maps.push_back(random_map(rng, s, -3, 3));
  f.bundle.final_map = random_map(rng, s, -3, 3);
  f.sup.glass = binarize(random_map(rng, s, 0, 1));
  f.sup.inner = random_map(rng, s, 0, 1);
  f.sup.boundary = TD::zeros(s);
  for (std::size_t i = 0; i < f.sup.glass.numel(); ++i) {
    f.sup.inner.mutable_data()[i] *= f.sup.glass.data()[i];
    f.sup.boundary.mutable_data()[i] = f.sup.glass.data()[i] - f.sup.inner.data()[i];
  }
  return f;
}

double bce_iou_oracle(const TD& logits, const TD& g) {
  double b = 0, iou = 0;
  const std::size_t plane = 16;
  for (std::size_t i = 0; i < logits.numel(); ++i) b += oracle::bce(logits.data()[i], g.data()[i]);
  for (int n = 0; n < 2; ++n) {
    std::vector<double> p, t;
    for (std::size_t i = n * plane; i < (n + 1) * plane; ++i) {
      p.push_back(1 / (1 + std::exp(-logits.data()[i])));
      t.push_back(g.data()[i]);
    }
    iou += oracle::soft_iou_loss(p, t);
  }
  return b / logits.numel() + iou / 2;
}

}  // namespace

TEST(TotalLoss, SumOfPartsIsExact) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 50; ++t) {
    auto f = random_fixture(rng);
    const auto l = total_loss(f.bundle, f.sup, 3, 5);
    EXPECT_EQ(l.total, ((l.l_inner + l.l_boundary) + l.l_glass) + l.l_final);
    EXPECT_EQ(l.terms, 2 + 5 + 6 + 2);
  }
}

TEST(TotalLoss, MatchesTermByTermOracle) {
  std::mt19937_64 rng(7);
  auto f = random_fixture(rng);
  const auto l = total_loss(f.bundle, f.sup, 3, 5);
  double boundary = 0, glass = 0;
  for (const auto& m : f.bundle.boundary_maps) {
    double b = 0;
    for (std::size_t i = 0; i < m.numel(); ++i) b += oracle::bce(m.data()[i], f.sup.boundary.data()[i]);
    boundary += b / m.numel();
  }
  for (const auto& m : f.bundle.glass_maps) glass += bce_iou_oracle(m, f.sup.glass);
  EXPECT_NEAR(l.l_inner, bce_iou_oracle(f.bundle.interior_map, f.sup.inner), 1e-12);
  EXPECT_NEAR(l.l_boundary, boundary, 1e-12);
  EXPECT_NEAR(l.l_glass, glass, 1e-12);
  EXPECT_NEAR(l.l_final, bce_iou_oracle(f.bundle.final_map, f.sup.glass), 1e-12);
}

TEST(TotalLoss, IdenticalGlassBranchesScaleLinearly) {
  std::mt19937_64 rng(8);
  auto f = random_fixture(rng);
  f.bundle.glass_maps = {f.bundle.final_map, f.bundle.final_map, f.bundle.final_map};
  const auto l = total_loss(f.bundle, f.sup, 3, 5);
  EXPECT_NEAR(l.l_glass, 3 * l.l_final, 1e-12);
}

TEST(TotalLoss, SaturatedPerfectBundleIsNearZero) {
  const Shape s{1, 1, 2, 2};
  auto g = TD::from(s, {1, 0, 0, 1});
  auto logits = TD::from(s, {60, -60, -60, 60});
  PredictionBundle<double> b;
  b.interior_map = logits;
  b.boundary_maps.assign(5, TD::full(s, -60.0));
  b.glass_maps.assign(3, logits);
  b.final_map = logits;
  const auto l = total_loss(b, {g, g, TD::zeros(s)}, 3, 5);
  EXPECT_LT(l.total, 1e-12);
}

TEST(TotalLoss, DisabledStreamsContributeExactZero) {
  std::mt19937_64 rng(9);
  auto f = random_fixture(rng, false, 0);
  const auto l = total_loss(f.bundle, f.sup, 3, 0);
  EXPECT_EQ(l.l_inner, 0.0);
  EXPECT_EQ(l.l_boundary, 0.0);
  EXPECT_EQ(l.terms, 8);
  EXPECT_EQ(l.total, l.l_glass + l.l_final);
}

TEST(TotalLoss, BranchCountMismatch) {
  std::mt19937_64 rng(10);
  auto f = random_fixture(rng);
  EXPECT_THROW(total_loss(f.bundle, f.sup, 3, 4), glasskit::InvalidInput);
  EXPECT_THROW(total_loss(f.bundle, f.sup, 2, 5), glasskit::InvalidInput);
}

TEST(LossLine, Format) {
  LossBreakdown<double> l;
  l.l_inner = 1;
  l.l_boundary = 2;
  l.l_glass = 3;
  l.l_final = 4;
  l.total = 10;
  EXPECT_EQ(format_loss_line(7, 1e-4, l),
            "iter 7 lr 0.0001 l_inner 1.000000 l_boundary 2.000000 l_glass 3.000000 l_final 4.000000 total 10.000000");
}
