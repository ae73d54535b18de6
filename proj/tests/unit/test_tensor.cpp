#include <gtest/gtest.h>

#include <cmath>

#include "gapfill/errors.hpp"
#include "gapfill/rng.hpp"
#include "gapfill/tensor.hpp"

using namespace gapfill;

namespace {

// Straight triple loop used as the matmul oracle.
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.dim(0), b.dim(1)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < b.dim(1); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.dim(1); ++k) s += a.at(i, k) * b.at(k, j);
      c.at(i, j) = s;
    }
  return c;
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const auto a = Tensor::matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(matmul(a, Tensor::matrix({{1, 0}, {0, 1}})), a);
}

TEST(Matmul, HandComputedProduct) {
  const auto c = matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{5}, {6}}));
  EXPECT_EQ(c, Tensor::matrix({{17}, {39}}));
}

TEST(Matmul, ZeroMatrixGivesZeros) {
  const auto c = matmul(Tensor({2, 2}), Tensor::matrix({{5}, {6}}));
  EXPECT_EQ(c, Tensor::matrix({{0}, {0}}));
}

TEST(Matmul, InnerDimensionMismatchThrows) {
  EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 2})), ShapeError);
  EXPECT_THROW(matmul(Tensor({2}), Tensor({2, 2})), ShapeError);
}

TEST(Matmul, MatchesNaiveProductOnRandomShapes) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(9), k = 1 + rng.below(9), m = 1 + rng.below(9);
    const auto a = uniform(rng, -1, 1, {n, k});
    const auto b = uniform(rng, -1, 1, {k, m});
    const auto got = matmul(a, b), want = naive_matmul(a, b);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Matmul, AssociativeWithinRoundoff) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = uniform(rng, -1, 1, {1 + rng.below(6), 4});
    const auto b = uniform(rng, -1, 1, {4, 5});
    const auto c = uniform(rng, -1, 1, {5, 1 + rng.below(6)});
    const auto left = matmul(matmul(a, b), c), right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.size(); ++i) {
      EXPECT_LE(std::abs(left[i] - right[i]), 1e-9 * std::max(1.0, std::abs(right[i])));
    }
  }
}

TEST(Conv1d, IdentityKernel) {
  EXPECT_EQ(conv1d(Tensor::vector({1, 2, 3, 4}), Tensor::vector({1}), 1, Padding::valid),
            Tensor::vector({1, 2, 3, 4}));
}

TEST(Conv1d, PairSumValid) {
  EXPECT_EQ(conv1d(Tensor::vector({1, 2, 3, 4}), Tensor::vector({1, 1}), 1, Padding::valid),
            Tensor::vector({3, 5, 7}));
}

TEST(Conv1d, PairSumStrideTwo) {
  EXPECT_EQ(conv1d(Tensor::vector({1, 2, 3, 4}), Tensor::vector({1, 1}), 2, Padding::valid),
            Tensor::vector({3, 7}));
}

TEST(Conv1d, IsCrossCorrelationNotConvolution) {
  // An asymmetric kernel is applied without flipping.
  EXPECT_EQ(conv1d(Tensor::vector({1, 2, 3}), Tensor::vector({1, 0}), 1, Padding::valid),
            Tensor::vector({1, 2}));
}

TEST(Conv1d, SamePaddingPreservesLength) {
  Rng rng(5);
  for (std::size_t len = 1; len <= 64; ++len) {
    for (std::size_t k = 1; k <= 11; ++k) {
      const auto out = conv1d(uniform(rng, -1, 1, {len}), uniform(rng, -1, 1, {k}), 1, Padding::same);
      ASSERT_EQ(out.size(), len) << "len " << len << " kernel " << k;
    }
  }
}

TEST(Conv1d, SamePaddingCentersOddKernels) {
  // Kernel [1,1,1] over zero-padded [1,2,3] -> [3,6,5].
  EXPECT_EQ(conv1d(Tensor::vector({1, 2, 3}), Tensor::vector({1, 1, 1}), 1, Padding::same),
            Tensor::vector({3, 6, 5}));
}

TEST(Conv1d, KernelLongerThanInputThrows) {
  EXPECT_THROW(conv1d(Tensor::vector({1, 2}), Tensor::vector({1, 1, 1}), 1, Padding::valid), ShapeError);
}

TEST(Conv1d, ZeroStrideThrows) {
  EXPECT_THROW(conv1d(Tensor::vector({1, 2}), Tensor::vector({1}), 0, Padding::valid), ConfigError);
}

TEST(Tensor, ConstructorChecksElementCount) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor({3}).reshaped({2, 2}), ShapeError);
}

TEST(Uniform, SameSeedGivesIdenticalTensors) {
  Rng a(7), b(7);
  EXPECT_EQ(uniform(a, -1, 1, {4}), uniform(b, -1, 1, {4}));
}

TEST(Uniform, NarrowRangeRespected) {
  Rng rng(7);
  const auto t = uniform(rng, 0, 0.0001, {1000});
  for (double v : t.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 0.0001);
  }
}

TEST(Uniform, SampleMeanNearCenter) {
  Rng rng(1);
  EXPECT_NEAR(mean(uniform(rng, -1, 1, {10000})), 0.0, 0.05);
}

TEST(Uniform, EmptyRangeThrows) {
  Rng rng(1);
  EXPECT_THROW(uniform(rng, 1, 1, {2}), ConfigError);
  EXPECT_THROW(uniform(rng, 2, 1, {2}), ConfigError);
}

namespace {

// Reference SplitMix64 seeding and xoshiro256** transcribed from the
// published algorithm descriptions.
struct ReferenceXoshiro {
  std::uint64_t s[4];
  explicit ReferenceXoshiro(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& w : s) {
      std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      w = z ^ (z >> 31);
    }
  }
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t next() {
    const std::uint64_t result = rotl(s[1] * 5, 7) * 9;
    const std::uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    return result;
  }
};

}  // namespace

TEST(Rng, MatchesReferenceXoshiroStream) {
  for (std::uint64_t seed : {0ULL, 1ULL, 42ULL, 0xdeadbeefULL}) {
    Rng rng(seed);
    ReferenceXoshiro ref(seed);
    for (int i = 0; i < 100; ++i) ASSERT_EQ(rng.next_u64(), ref.next()) << "seed " << seed;
  }
}

TEST(Rng, SameSeedBitIdenticalAcrossAllDraws) {
  Rng a(99), b(99);
  for (int i = 0; i < 1000; ++i) {
    ASSERT_EQ(a.next_u64(), b.next_u64());
    ASSERT_EQ(a.normal(), b.normal());
    ASSERT_EQ(a.below(17), b.below(17));
  }
}

TEST(Rng, BelowStaysInRangeAndCoversIt) {
  Rng rng(4);
  std::vector<int> seen(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto v = rng.below(7);
    ASSERT_LT(v, 7u);
    ++seen[v];
  }
  for (int c : seen) EXPECT_GT(c, 800);
  EXPECT_THROW(rng.below(0), ConfigError);
}

TEST(Rng, NormalHasUnitMoments) {
  Rng rng(8);
  double s = 0, s2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.03);
  EXPECT_NEAR(s2 / n, 1.0, 0.04);
}

TEST(Rng, ChildStreamsDiffer) {
  const Rng root(5);
  auto a = root.child(1), b = root.child(2);
  EXPECT_NE(a.next_u64(), b.next_u64());
  EXPECT_EQ(root.child(1).next_u64(), Rng(5).child(1).next_u64());
}
