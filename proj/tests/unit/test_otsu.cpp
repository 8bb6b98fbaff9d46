#include <random>

#include <gtest/gtest.h>

#include "bria/error.hpp"
#include "bria/otsu.hpp"
#include "oracles.hpp"

using namespace bria;

TEST(Otsu, MatchesExhaustiveScanOnRandomHistograms) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    Histogram256 h{};
    const int populated = 2 + static_cast<int>(rng() % 40);
    for (int i = 0; i < populated; ++i) h[rng() % 256] += 1 + rng() % 5000;
    if (std::count_if(h.begin(), h.end(), [](auto v) { return v > 0; }) < 2) continue;
    EXPECT_EQ(otsu_bin(h), oracle::otsu_bin(h)) << "trial " << trial;
  }
}

TEST(Otsu, TiesResolveToLowestBin) {
  // Symmetric two-spike histogram: every split between the spikes scores equally.
  Histogram256 h{};
  h[10] = 100;
  h[200] = 100;
  EXPECT_EQ(otsu_bin(h), 10);
  EXPECT_EQ(oracle::otsu_bin(h), 10);
}

TEST(Otsu, BimodalThresholdFallsBetweenModes) {
  std::vector<double> v(50, 0.0);
  v.insert(v.end(), 50, 200.0);
  const OtsuThreshold t = otsu_threshold(v);
  EXPECT_GT(t.threshold, 0.0);
  EXPECT_LT(t.threshold, 200.0);
  EXPECT_FALSE(t.above(0.0));
  EXPECT_TRUE(t.above(200.0));
}

TEST(Otsu, ConstantInputIsDegenerate) {
  std::vector<double> v(10, 7.0);
  try {
    otsu_threshold(v);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateInput);
  }
  EXPECT_THROW(otsu_threshold(std::span<const double>{}), Error);
}

TEST(Otsu, ValueThresholdAgreesWithOracleBinning) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> a(100, 15), b(400, 60);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v;
    for (int i = 0; i < 500; ++i) v.push_back(i % 3 ? a(rng) : b(rng));
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    std::array<std::uint64_t, 256> h{};
    for (double x : v) ++h[oracle::bin_of(x, *mn, *mx)];
    const OtsuThreshold t = otsu_threshold(v);
    const int k = oracle::otsu_bin(h);
    EXPECT_EQ(t.bin, k);
    EXPECT_DOUBLE_EQ(t.threshold, *mn + (k + 1) * (*mx - *mn) / 256.0);
  }
}
