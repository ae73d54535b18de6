#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace gapfill {

class Rng;

inline constexpr std::size_t kBinsPerDay = 48;

using DayVector = std::array<double, kBinsPerDay>;
using DayMask = std::array<bool, kBinsPerDay>;

enum class CorruptionMode { reconstruction, forecast };

std::string to_string(CorruptionMode mode);
CorruptionMode parse_corruption_mode(std::string_view text);

struct CorruptionSpec {
  CorruptionMode mode = CorruptionMode::reconstruction;
  double cr = 0.5;
  std::uint64_t seed = 0;
  // Draw the gap length per sample instead of using mask_length(cr); see
  // random_mask_length.
  bool random_length = false;
};

// One day with a single contiguous gap. Masked bins are zero in
// `corrupted`, which in normalized space is the training mean.
struct MaskedDay {
  DayVector original{};
  DayVector corrupted{};
  DayMask mask{};
  std::size_t gap_start = 0;
  std::size_t gap_length = 0;
};

// round(cr * 48) clamped to [1, 47]; cr must lie in (0, 1).
std::size_t mask_length(double cr);

// Gap length uniform on [L - s, L + s] with L = mask_length(cr) and
// s = min(L - 1, 47 - L): every admissible length around L is equally
// likely and the mean length stays L.
std::size_t random_mask_length(double cr, Rng& rng);

// Horizon in hours covered by a trailing gap at this corruption rate.
double horizon_hours(double cr);

MaskedDay corrupt(std::span<const double> day, const CorruptionSpec& spec);

// Mask seed for evaluation/validation: fixed per (day index, cr).
std::uint64_t fixed_mask_seed(std::uint64_t base_seed, std::size_t day_index, double cr);

// Masked bins take the reconstruction, observed bins keep the original.
DayVector fill(const MaskedDay& masked, std::span<const double> reconstruction);

}  // namespace gapfill
