#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "crfrestore/degrade.hpp"
#include "crfrestore/random.hpp"
#include "support.hpp"

using namespace crf;
using crf::testing::random_image;
using crf::testing::temp_path;

TEST(Rng, EngineMatchesStandardSequence) {
  // The standard fixes the 10000th output of a default-seeded mt19937_64.
  Rng rng(5489u);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = rng.next_u64();
  EXPECT_EQ(v, 9981545732273789042ULL);
}

TEST(Rng, UniformInUnitInterval) {
  Rng rng(3);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, NormalMoments) {
  Rng rng(17);
  const int n = 400000;
  double s = 0.0;
  double s2 = 0.0;
  double s4 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
    s4 += x * x * x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
  EXPECT_NEAR(s4 / n, 3.0, 0.05);
}

TEST(Rng, CounterIndexUniformAndStable) {
  std::vector<int> hist(7, 0);
  for (std::uint64_t c = 0; c < 70000; ++c) {
    const auto k = counter_index(99, c, 7);
    ASSERT_LT(k, 7u);
    ++hist[k];
    ASSERT_EQ(k, counter_index(99, c, 7));
  }
  for (int h : hist) EXPECT_NEAR(h, 10000, 400);
  EXPECT_EQ(counter_index(1, 2, 1), 0u);
}

TEST(AddNoise, ZeroSigmaIsIdentity) {
  const Image img = random_image(16, 16, 1);
  EXPECT_EQ(add_noise(img, 0.0, 5), img);
}

TEST(AddNoise, StatisticsAt512) {
  const Image img(512, 512, 100.0);
  const Image out = add_noise(img, 20.0, 1234);
  double s = 0.0;
  double s2 = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double d = out[i] - img[i];
    s += d;
    s2 += d * d;
  }
  const double n = double(img.size());
  const double mean = s / n;
  const double sd = std::sqrt(s2 / n - mean * mean);
  EXPECT_NEAR(mean, 0.0, 0.2);
  EXPECT_NEAR(sd, 20.0, 0.2);
}

TEST(AddNoise, NotClipped) {
  const Image img(64, 64, 250.0);
  const Image out = add_noise(img, 30.0, 9);
  double hi = 0.0;
  for (double s : out.samples()) hi = std::max(hi, s);
  EXPECT_GT(hi, 255.0);
}

TEST(AddNoise, DeterministicPerSeed) {
  const Image img = random_image(32, 32, 2);
  EXPECT_EQ(add_noise(img, 10.0, 77), add_noise(img, 10.0, 77));
  EXPECT_NE(add_noise(img, 10.0, 77), add_noise(img, 10.0, 78));
  EXPECT_THROW(add_noise(img, -1.0, 1), std::invalid_argument);
}

TEST(MakeMask, FullProbabilityObservesAll) {
  const Mask m = make_mask(33, 21, 1.0, 4);
  EXPECT_EQ(m.count_observed(), m.size());
}

TEST(MakeMask, ObservedFractionAt512) {
  const Mask m = make_mask(512, 512, 0.3, 8);
  EXPECT_NEAR(double(m.count_observed()) / double(m.size()), 0.3, 0.01);
}

TEST(MakeMask, DeterministicAndValidated) {
  EXPECT_EQ(make_mask(40, 30, 0.5, 1), make_mask(40, 30, 0.5, 1));
  EXPECT_FALSE(make_mask(40, 30, 0.5, 1) == make_mask(40, 30, 0.5, 2));
  EXPECT_THROW(make_mask(4, 4, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(make_mask(4, 4, 1.5, 1), std::invalid_argument);
}

TEST(ApplyMask, ObservedCopiedMissingFilled) {
  const Image img = random_image(6, 5, 3);
  EXPECT_EQ(apply_mask(img, Mask(6, 5, true)), img);
  Mask m(6, 5, true);
  m.set(2, 3, false);
  const Image out = apply_mask(img, m, -1.0);
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_EQ(out[i], i == 2 * 6 + 3 ? -1.0 : img[i]);
  EXPECT_THROW(apply_mask(img, Mask(5, 6, true)), DimensionError);
}

TEST(Degrade, NoiseAndMaskFromOneSpec) {
  const Image img = random_image(20, 20, 6);
  DegradationSpec spec{0.0, 1.0, 3};
  EXPECT_EQ(degrade(img, spec), img);
  spec = {5.0, 0.5, 3};
  Mask m;
  const Image y = degrade(img, spec, &m);
  EXPECT_EQ(m, make_mask(20, 20, 0.5, 3));
  const Image noisy = add_noise(img, 5.0, 3);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], m[i] ? noisy[i] : 0.0);
  spec.keep_probability = 0.0;
  EXPECT_THROW(degrade(img, spec), std::invalid_argument);
}

TEST(MaskFile, RoundTripAndFormat) {
  const Mask m = make_mask(13, 7, 0.4, 10);
  const auto path = temp_path("mask.pgm");
  save_mask(m, path);
  EXPECT_EQ(load_mask(path), m);
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  in >> magic;
  EXPECT_EQ(magic, "P5");
  const PgmRaster r = read_pgm_raster(path);
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(r.values[i], m[i] ? 255 : 0);
}
