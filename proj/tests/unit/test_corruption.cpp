#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <tuple>
#include <vector>

#include "gapfill/corruption.hpp"
#include "gapfill/errors.hpp"
#include "gapfill/rng.hpp"

using namespace gapfill;

namespace {

std::vector<double> ramp() {
  std::vector<double> day(kBinsPerDay);
  for (std::size_t i = 0; i < kBinsPerDay; ++i) day[i] = 1.0 + static_cast<double>(i);
  return day;
}

}  // namespace

TEST(MaskLength, WorkedExamples) {
  EXPECT_EQ(mask_length(0.5), 24u);
  EXPECT_EQ(mask_length(0.9), 43u);
  EXPECT_EQ(mask_length(0.1), 5u);
  EXPECT_EQ(mask_length(0.001), 1u);
  EXPECT_EQ(mask_length(0.999), 47u);
}

TEST(MaskLength, MatchesRoundingOracle) {
  for (int k = 1; k < 100; ++k) {
    const double cr = k / 100.0;
    const long expected = std::max(1L, std::min(47L, static_cast<long>(std::floor(cr * 48 + 0.5))));
    EXPECT_EQ(mask_length(cr), static_cast<std::size_t>(expected)) << cr;
  }
}

TEST(MaskLength, RejectsOutOfRangeRates) {
  EXPECT_THROW(mask_length(0.0), ConfigError);
  EXPECT_THROW(mask_length(1.0), ConfigError);
  EXPECT_THROW(mask_length(-0.2), ConfigError);
  EXPECT_THROW(mask_length(std::nan("")), ConfigError);
}

TEST(HorizonHours, HalfHourPerBin) {
  EXPECT_DOUBLE_EQ(horizon_hours(0.1), 2.5);
  EXPECT_DOUBLE_EQ(horizon_hours(0.5), 12.0);
  EXPECT_DOUBLE_EQ(horizon_hours(0.9), 21.5);
}

TEST(Corrupt, ReconstructionGapIsSingleContiguousRun) {
  const auto day = ramp();
  Rng seeds(99);
  std::vector<std::size_t> start_counts(kBinsPerDay, 0);
  for (int draw = 0; draw < 10000; ++draw) {
    const double cr = 0.05 + 0.9 * seeds.next_double();
    const auto m = corrupt(day, {CorruptionMode::reconstruction, cr, seeds.next_u64()});
    const std::size_t len = mask_length(cr);
    std::size_t masked = 0, runs = 0;
    for (std::size_t i = 0; i < kBinsPerDay; ++i) {
      masked += m.mask[i];
      if (m.mask[i] && (i == 0 || !m.mask[i - 1])) ++runs;
      EXPECT_EQ(m.corrupted[i], m.mask[i] ? 0.0 : day[i]);
    }
    ASSERT_EQ(masked, len);
    ASSERT_EQ(runs, 1u);
    ASSERT_LE(m.gap_start + m.gap_length, kBinsPerDay);
    ASSERT_TRUE(m.mask[m.gap_start]);
    if (cr > 0.45 && cr < 0.55) ++start_counts[m.gap_start];
  }
  // Gap starts spread over the admissible range rather than clustering.
  std::size_t used = 0;
  for (auto c : start_counts) used += c > 0;
  EXPECT_GE(used, 20u);
}

TEST(Corrupt, ForecastGapEndsAtLastBin) {
  for (double cr : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const auto m = corrupt(ramp(), {CorruptionMode::forecast, cr, 1});
    const std::size_t len = mask_length(cr);
    EXPECT_EQ(m.gap_start, kBinsPerDay - len);
    EXPECT_TRUE(m.mask[47]);
    for (std::size_t i = 0; i < kBinsPerDay; ++i) EXPECT_EQ(m.mask[i], i >= kBinsPerDay - len);
  }
}

TEST(Corrupt, SameSeedSameMask) {
  const auto a = corrupt(ramp(), {CorruptionMode::reconstruction, 0.4, 1234});
  const auto b = corrupt(ramp(), {CorruptionMode::reconstruction, 0.4, 1234});
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_EQ(a.corrupted, b.corrupted);
}

TEST(Corrupt, RejectsWrongLength) {
  std::vector<double> short_day(47, 1.0);
  EXPECT_THROW(corrupt(short_day, {}), ShapeError);
}

TEST(Fill, MaskedPositionsTakeReconstructionOthersAreBitExact) {
  const auto day = ramp();
  const auto m = corrupt(day, {CorruptionMode::reconstruction, 0.3, 7});
  std::vector<double> rec(kBinsPerDay);
  for (std::size_t i = 0; i < kBinsPerDay; ++i) rec[i] = -100.0 - static_cast<double>(i) * 0.1;
  const auto filled = fill(m, rec);
  for (std::size_t i = 0; i < kBinsPerDay; ++i) {
    if (m.mask[i]) {
      EXPECT_EQ(filled[i], rec[i]);
    } else {
      EXPECT_EQ(filled[i], day[i]);
    }
  }
  EXPECT_THROW(fill(m, std::vector<double>(10)), ShapeError);
}

TEST(FixedMaskSeed, DistinctPerDayAndRate) {
  EXPECT_EQ(fixed_mask_seed(5, 3, 0.5), fixed_mask_seed(5, 3, 0.5));
  EXPECT_NE(fixed_mask_seed(5, 3, 0.5), fixed_mask_seed(5, 4, 0.5));
  EXPECT_NE(fixed_mask_seed(5, 3, 0.5), fixed_mask_seed(5, 3, 0.6));
  EXPECT_NE(fixed_mask_seed(5, 3, 0.5), fixed_mask_seed(6, 3, 0.5));
}

TEST(CorruptionMode, ParsesNames) {
  EXPECT_EQ(parse_corruption_mode("forecast"), CorruptionMode::forecast);
  EXPECT_EQ(to_string(CorruptionMode::reconstruction), "reconstruction");
  EXPECT_THROW(parse_corruption_mode("gap"), ConfigError);
}

TEST(RandomMaskLength, UniformAroundMaskLength) {
  // cr -> (lowest, highest) admissible length: centred on mask_length(cr)
  // and kept inside [1, 47].
  const std::vector<std::tuple<double, std::size_t, std::size_t>> cases = {
      {0.1, 1, 9}, {0.5, 1, 47}, {0.9, 39, 47}, {0.02, 1, 1}, {0.98, 47, 47}};
  for (const auto& [cr, lo, hi] : cases) {
    Rng rng(11);
    const std::size_t draws = 20000;
    std::vector<std::size_t> counts(kBinsPerDay + 1, 0);
    double sum = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
      const auto len = random_mask_length(cr, rng);
      ASSERT_GE(len, lo) << cr;
      ASSERT_LE(len, hi) << cr;
      ++counts[len];
      sum += static_cast<double>(len);
    }
    for (std::size_t len = lo; len <= hi; ++len) EXPECT_GT(counts[len], 0u) << cr << " " << len;
    const double k = static_cast<double>(hi - lo + 1);
    const double sd_of_mean = std::sqrt((k * k - 1.0) / 12.0 / static_cast<double>(draws));
    EXPECT_NEAR(sum / static_cast<double>(draws), static_cast<double>(mask_length(cr)),
                4.0 * sd_of_mean + 1e-12)
        << cr;
  }
}

TEST(Corrupt, RandomLengthGapIsContiguousAndVaries) {
  const auto day = ramp();
  std::vector<std::size_t> seen;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const auto m = corrupt(day, {CorruptionMode::reconstruction, 0.5, seed, true});
    std::size_t masked = 0;
    for (std::size_t i = 0; i < kBinsPerDay; ++i) {
      const bool inside = i >= m.gap_start && i < m.gap_start + m.gap_length;
      ASSERT_EQ(m.mask[i], inside);
      ASSERT_EQ(m.corrupted[i], inside ? 0.0 : day[i]);
      masked += m.mask[i] ? 1 : 0;
    }
    ASSERT_EQ(masked, m.gap_length);
    ASSERT_GE(m.gap_length, 1u);
    ASSERT_LE(m.gap_length, 47u);
    seen.push_back(m.gap_length);
  }
  std::sort(seen.begin(), seen.end());
  EXPECT_GT(std::unique(seen.begin(), seen.end()) - seen.begin(), 20);
}

TEST(Corrupt, RandomLengthForecastGapStillEndsAtLastBin) {
  const auto day = ramp();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto m = corrupt(day, {CorruptionMode::forecast, 0.3, seed, true});
    EXPECT_EQ(m.gap_start + m.gap_length, kBinsPerDay);
  }
}
