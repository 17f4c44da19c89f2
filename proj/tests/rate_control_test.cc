#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "pdstream/rate_control.h"

namespace pdstream {
namespace {

TEST(Gcc, RuleArithmetic) {
  const GccConfig cfg;
  EXPECT_DOUBLE_EQ(GccUpdate({0.0, 0.0}, 1e6, cfg), 1.05e6);
  EXPECT_DOUBLE_EQ(GccUpdate({6.0, 0.0}, 1e6, cfg), 0.85e6);
  EXPECT_DOUBLE_EQ(GccUpdate({0.0, 0.2}, 1e6, cfg), 0.9e6);
  EXPECT_DOUBLE_EQ(GccUpdate({0.0, 0.05}, 1e6, cfg), 1.05e6);
  EXPECT_DOUBLE_EQ(GccUpdate({0.0, 0.0}, cfg.b_max, cfg), cfg.b_max);
  EXPECT_DOUBLE_EQ(GccUpdate({50.0, 0.0}, cfg.b_min, cfg), cfg.b_min);
}

TEST(Gcc, ControllerSmoothsTheGradient) {
  GccController c({}, 1e6);
  EXPECT_DOUBLE_EQ(c.Update(40, 0), 1.05e6);  // first sample primes
  // One 20 ms jump smooths to 8 ms, above the 5 ms threshold.
  EXPECT_DOUBLE_EQ(c.Update(60, 0), 1.05e6 * 0.85);
  EXPECT_NEAR(c.smoothed_gradient(), 8.0, 1e-12);
  // Flat RTT lets the smoothed gradient decay below threshold.
  c.Update(60, 0);
  EXPECT_NEAR(c.smoothed_gradient(), 4.8, 1e-12);
}

TEST(Reward, HandValue) {
  EXPECT_DOUBLE_EQ(Reward({2e6, 30, 30, 0.1, 0.01}, {}), -40.0);
  EXPECT_DOUBLE_EQ(Reward({}, {}), 0.0);
}

TEST(Reward, SignsOnSampledPoints) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  const RewardWeights w;
  for (int i = 0; i < 200; ++i) {
    RewardMetrics m{4e6 * u(rng), 30 * u(rng), 51 * u(rng), u(rng), u(rng)};
    const double r = Reward(m, w);
    auto b = m;
    b.bitrate_bps += 1e5;
    EXPECT_GT(Reward(b, w), r);
    auto d = m;
    d.delay_s += 0.01;
    EXPECT_LT(Reward(d, w), r);
    auto l = m;
    l.stall += 0.01;
    EXPECT_LT(Reward(l, w), r);
  }
}

TEST(Returns, GeometricSums) {
  const std::vector<double> ones{1, 1, 1};
  EXPECT_DOUBLE_EQ(DiscountedReturn(ones, 0.5, 20), 1.75);
  const std::vector<double> r{3, 7, 9};
  EXPECT_DOUBLE_EQ(DiscountedReturn(r, 0.0, 20), 3.0);
  const std::vector<double> flat(50, 2.0);
  EXPECT_NEAR(DiscountedReturn(flat, 0.98, 20), 2.0 * (1 - std::pow(0.98, 20)) / (1 - 0.98), 1e-12);
}

TEST(Returns, PerIndexTruncation) {
  const std::vector<double> r{1, 2, 3, 4};
  const auto out = DiscountedReturns(r, 0.5, 2);
  ASSERT_EQ(out.size(), 4u);
  EXPECT_DOUBLE_EQ(out[0], 1 + 0.5 * 2);
  EXPECT_DOUBLE_EQ(out[2], 3 + 0.5 * 4);
  EXPECT_DOUBLE_EQ(out[3], 4);
}

TEST(Grid, GeometricSeventeenPoints) {
  const auto g = BitrateGrid();
  ASSERT_EQ(g.size(), 17u);
  EXPECT_DOUBLE_EQ(g.front(), 0.3e6);
  EXPECT_DOUBLE_EQ(g.back(), 4.0e6);
  for (size_t i = 2; i < g.size(); ++i) {
    EXPECT_NEAR(g[i] / g[i - 1], g[1] / g[0], 1e-9);
  }
  EXPECT_THROW(BitrateGrid(1, 1, 5), std::domain_error);
}

TEST(StateBuilder, FixedLayoutWithZeroFill) {
  PolicyStateBuilder b(4);
  EXPECT_EQ(b.dim(), 4u * kNumFeatures);
  EXPECT_TRUE(b.Vector().isZero());
  FeatureSample s{};
  s[static_cast<int>(Feature::kRtt)] = 50.0;
  s[static_cast<int>(Feature::kDualActive)] = 1.0;
  b.Push(s);
  const auto v = b.Vector();
  ASSERT_EQ(v.size(), 4 * kNumFeatures);
  // The newest sample sits last.
  EXPECT_DOUBLE_EQ(v[3 * kNumFeatures + static_cast<int>(Feature::kRtt)], 0.5);
  EXPECT_DOUBLE_EQ(v[3 * kNumFeatures + static_cast<int>(Feature::kDualActive)], 1.0);
  for (int i = 0; i < 3 * kNumFeatures; ++i) EXPECT_EQ(v[i], 0.0);
}

TEST(StateBuilder, SlidesAndRejectsNonFinite) {
  PolicyStateBuilder b(2);
  for (int i = 1; i <= 5; ++i) {
    FeatureSample s{};
    s[0] = i * 1e6;
    b.Push(s);
  }
  const auto v = b.Vector();
  EXPECT_DOUBLE_EQ(v[0], 4.0);
  EXPECT_DOUBLE_EQ(v[kNumFeatures], 5.0);
  FeatureSample bad{};
  bad[static_cast<int>(Feature::kLoss)] = std::numeric_limits<double>::quiet_NaN();
  b.Push(bad);
  try {
    b.Vector();
    FAIL();
  } catch (const std::domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("loss"), std::string::npos);
  }
}

}  // namespace
}  // namespace pdstream
