#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace rfmia {

/// Parameters of the band-limited patch generator.
///
/// Each patch is base_level + amplitude * (sum of random-phase planar waves
/// whose spatial frequency radius is at most the sample's cutoff) + white
/// noise of standard deviation noise_floor. Cutoffs are drawn uniformly from
/// [f_lo, f_hi] in cycles per patch, so samples differ in how compressible
/// they are.
struct GeneratorConfig {
  std::uint64_t seed = 0;
  std::size_t n_per_split = 64;
  std::size_t patch = 8;
  double f_lo = 0.5;
  double f_hi = 2.0;
  double noise_floor = 1e-4;
  double amplitude = 0.01;
  double base_level = 0.5;

  std::size_t dim() const { return patch * patch; }
  double nyquist() const { return static_cast<double>(patch) / 2.0; }
  /// Throws ConfigError on invalid settings.
  void validate() const;
};

struct Sample {
  std::uint64_t id = 0;
  std::vector<double> x;  // standardized, row-major P x P
  double cutoff = 0.0;
  std::uint32_t complexity = 0;  // compressed bytes; 0 until computed
};

/// Per-dimension affine map estimated on members.
struct Standardization {
  std::vector<double> mean;
  std::vector<double> scale;

  std::vector<double> apply(std::span<const double> raw) const;
  std::vector<double> invert(std::span<const double> standardized) const;
};

struct PatchDataset {
  GeneratorConfig config;
  Standardization standardization;
  std::vector<Sample> members;
  std::vector<Sample> nonmembers;

  std::size_t dim() const { return config.dim(); }
  std::size_t size() const { return members.size() + nonmembers.size(); }
};

/// Deterministic in cfg.seed. 2n patches are drawn, sorted by cutoff, and
/// each adjacent pair is split at random between members and nonmembers, so
/// both splits see the same cutoff distribution. Standardization uses member
/// statistics only.
PatchDataset generate(const GeneratorConfig& cfg);

/// Raw (unstandardized) patch for generator index `index`, with its cutoff.
std::vector<double> generate_raw_patch(const GeneratorConfig& cfg, std::uint64_t index, double* cutoff);

/// Fills Sample::complexity for all samples using the pinned codec.
void fill_complexity(PatchDataset& ds);

inline constexpr std::uint32_t kDatasetVersion = 1;

std::vector<std::uint8_t> encode_dataset(const PatchDataset& ds);
PatchDataset decode_dataset(std::vector<std::uint8_t> bytes);
void save_dataset(const PatchDataset& ds, const std::filesystem::path& path);
PatchDataset load_dataset(const std::filesystem::path& path);

}  // namespace rfmia
