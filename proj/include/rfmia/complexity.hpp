#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "rfmia/synth_data.hpp"

namespace rfmia {

/// Identifier of the pinned codec, written into every report.
inline constexpr std::string_view kCodecId = "zlib-deflate-level9-u8";

/// Compressed byte length of raw 8-bit data with the pinned codec.
std::uint32_t compressed_size(std::span<const std::uint8_t> bytes);

/// Values in [0, 1] mapped to bytes by round(clamp(v * 255, 0, 255)).
std::vector<std::uint8_t> quantize_u8(std::span<const double> raw);

/// C(x): de-standardizes, quantizes to 8 bits and compresses.
class ComplexityMeter {
 public:
  explicit ComplexityMeter(Standardization standardization) : st_(std::move(standardization)) {}

  std::uint32_t operator()(std::span<const double> x) const;

 private:
  Standardization st_;
};

}  // namespace rfmia
