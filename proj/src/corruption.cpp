#include "gapfill/corruption.hpp"

#include <algorithm>
#include <cmath>

#include "gapfill/errors.hpp"
#include "gapfill/rng.hpp"

namespace gapfill {

std::string to_string(CorruptionMode mode) {
  return mode == CorruptionMode::reconstruction ? "reconstruction" : "forecast";
}

CorruptionMode parse_corruption_mode(std::string_view text) {
  if (text == "reconstruction") return CorruptionMode::reconstruction;
  if (text == "forecast") return CorruptionMode::forecast;
  throw ConfigError("unknown corruption mode '" + std::string(text) + "'");
}

std::size_t mask_length(double cr) {
  if (!(cr > 0.0 && cr < 1.0)) {
    throw ConfigError("corruption rate must lie in (0, 1), got " + std::to_string(cr));
  }
  const auto bins = std::lround(cr * static_cast<double>(kBinsPerDay));
  return static_cast<std::size_t>(std::clamp<long>(bins, 1, kBinsPerDay - 1));
}

std::size_t random_mask_length(double cr, Rng& rng) {
  const std::size_t len = mask_length(cr);
  const std::size_t spread = std::min(len - 1, kBinsPerDay - 1 - len);
  return len - spread + static_cast<std::size_t>(rng.below(2 * spread + 1));
}

double horizon_hours(double cr) { return static_cast<double>(mask_length(cr)) / 2.0; }

MaskedDay corrupt(std::span<const double> day, const CorruptionSpec& spec) {
  if (day.size() != kBinsPerDay) {
    throw ShapeError("a day has 48 bins, got " + std::to_string(day.size()));
  }
  Rng rng(spec.seed);
  const std::size_t len = spec.random_length ? random_mask_length(spec.cr, rng) : mask_length(spec.cr);
  MaskedDay out;
  std::copy(day.begin(), day.end(), out.original.begin());
  if (spec.mode == CorruptionMode::forecast) {
    out.gap_start = kBinsPerDay - len;
  } else {
    out.gap_start = static_cast<std::size_t>(rng.below(kBinsPerDay - len + 1));
  }
  out.gap_length = len;
  out.corrupted = out.original;
  for (std::size_t i = out.gap_start; i < out.gap_start + len; ++i) {
    out.mask[i] = true;
    out.corrupted[i] = 0.0;
  }
  return out;
}

std::uint64_t fixed_mask_seed(std::uint64_t base_seed, std::size_t day_index, double cr) {
  return mix_seed(base_seed, day_index, static_cast<std::uint64_t>(std::llround(cr * 1e6)));
}

DayVector fill(const MaskedDay& masked, std::span<const double> reconstruction) {
  if (reconstruction.size() != kBinsPerDay) {
    throw ShapeError("reconstruction must have 48 bins, got " +
                     std::to_string(reconstruction.size()));
  }
  DayVector out = masked.original;
  for (std::size_t i = 0; i < kBinsPerDay; ++i) {
    if (masked.mask[i]) out[i] = reconstruction[i];
  }
  return out;
}

}  // namespace gapfill
