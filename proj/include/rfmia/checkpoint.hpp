#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rfmia/mlp.hpp"

namespace rfmia {

// Checkpoint layout (all integers little-endian):
//   "RFMIACKP" | u32 version | u32 embed_width | u32 n_widths | u32 widths[n]
//   | u64 seed | u64 train_step | u32 len + sampler descriptor | u32 has_linear_skip
//   | [if has_linear_skip: f64 ridge, f64 mean[D], f64 eigenvalues[D], f64 eigenvectors[D*D]]
//   | per layer: u64 count, f64 weights[count], u64 count, f64 bias[count]
//   | u64 FNV-1a checksum of all preceding bytes
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const MlpVelocityModel& model);
MlpVelocityModel decode_checkpoint(std::vector<std::uint8_t> bytes);

void save_checkpoint(const MlpVelocityModel& model, const std::filesystem::path& path);
MlpVelocityModel load_checkpoint(const std::filesystem::path& path);

}  // namespace rfmia
