#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace rfmia {

/// splitmix64 finalizer; used to decorrelate derived seeds.
std::uint64_t mix64(std::uint64_t x);

/// Named substream of a root seed ("dataset", "model", "train", ...).
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream);
/// Indexed substream (per-sample, per-step, ...).
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  std::uint64_t below(std::uint64_t n);  // uniform integer in [0, n)
  void fill_normal(std::span<double> out);
  std::vector<double> normal_vector(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace rfmia
