#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "gapfill/tensor.hpp"

namespace gapfill {

// SplitMix64 finalizer. Used to seed Rng and to derive child seeds.
std::uint64_t splitmix64(std::uint64_t& state) noexcept;

// Order-dependent hash of a seed with extra words; stable across platforms.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                       std::uint64_t c = 0) noexcept;

/// xoshiro256** generator seeded through SplitMix64.
///
/// The stream is fully defined by the 64-bit seed: doubles are built from
/// the top 53 bits of each output, normals use the Box-Muller transform,
/// and bounded integers use Lemire's multiply-shift with rejection. No
/// std:: distribution is involved, so streams match across platforms and
/// standard libraries. An Rng is single-owner; derive independent streams
/// with child().
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;

  std::uint64_t next_u64() noexcept;
  // Uniform in [0, 1).
  double next_double() noexcept;
  // Uniform in [low, high).
  double uniform(double low, double high);
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept;
  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  std::uint64_t seed() const noexcept { return seed_; }
  Rng child(std::uint64_t stream) const noexcept;

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// i.i.d. samples in [low, high). Throws ConfigError when low >= high.
Tensor uniform(Rng& rng, double low, double high, std::vector<std::size_t> shape);

}  // namespace gapfill
