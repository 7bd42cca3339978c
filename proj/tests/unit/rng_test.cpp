#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "fplcast/rng.hpp"

using fplcast::mix_seed;
using fplcast::Rng;

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fplcast::fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fplcast::fnv1a("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(MixSeed, DependsOnBothInputs) {
  EXPECT_EQ(mix_seed(1, "x"), mix_seed(1, "x"));
  EXPECT_NE(mix_seed(1, "x"), mix_seed(2, "x"));
  EXPECT_NE(mix_seed(1, "x"), mix_seed(1, "y"));
  EXPECT_NE(mix_seed(1, std::uint64_t{0}), mix_seed(1, std::uint64_t{1}));
}

TEST(Rng, SameSeedSameStream) {
  Rng a(7);
  Rng b(7);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.next_u64(), b.next_u64());
    EXPECT_EQ(a.normal(), b.normal());
  }
}

TEST(Rng, UniformInRange) {
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double v = rng.uniform(-2.0, 5.0);
    ASSERT_GE(v, -2.0);
    ASSERT_LT(v, 5.0);
    ASSERT_LT(rng.below(13), 13U);
  }
}

TEST(Rng, MomentsAreSane) {
  Rng rng(11);
  const int n = 200000;
  double sum = 0;
  double sq = 0;
  double psum = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
    psum += rng.poisson(2.5);
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
  EXPECT_NEAR(psum / n, 2.5, 0.02);
}

TEST(Rng, PermutationIsPermutation) {
  Rng rng(5);
  auto p = rng.permutation(50);
  std::sort(p.begin(), p.end());
  std::vector<std::size_t> expected(50);
  std::iota(expected.begin(), expected.end(), 0);
  EXPECT_EQ(p, expected);
  EXPECT_TRUE(rng.permutation(0).empty());
}
