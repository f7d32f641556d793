#pragma once

#include <cstdint>
#include <random>

namespace sgcam {

/// SplitMix64 finaliser. Used to derive independent stream seeds.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Seed for sample `index` of a run seeded with `master`. Each sample owns
/// its own stream, so samples can be evaluated in any order.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept;

/// Standard normal generator: std::mt19937_64 feeding a Box-Muller
/// transform. Both halves are specified exactly here (unlike
/// std::normal_distribution), so a seed yields the same stream on every
/// platform.
class GaussianRng {
 public:
  explicit GaussianRng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform double in the open interval (0, 1) with 53-bit resolution.
  double uniform();

  double normal();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace sgcam
