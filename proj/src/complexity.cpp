#include "rfmia/complexity.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>

#include "rfmia/errors.hpp"

namespace rfmia {

std::uint32_t compressed_size(std::span<const std::uint8_t> bytes) {
  uLongf out_len = compressBound(static_cast<uLong>(bytes.size()));
  std::vector<Bytef> out(out_len);
  const int rc = compress2(out.data(), &out_len, bytes.data(), static_cast<uLong>(bytes.size()), 9);
  if (rc != Z_OK) throw InternalError("zlib compress2 failed with code " + std::to_string(rc));
  return static_cast<std::uint32_t>(out_len);
}

std::vector<std::uint8_t> quantize_u8(std::span<const double> raw) {
  std::vector<std::uint8_t> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!std::isfinite(raw[i])) throw ArgumentError("complexity: non-finite value");
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(raw[i] * 255.0, 0.0, 255.0)));
  }
  return out;
}

std::uint32_t ComplexityMeter::operator()(std::span<const double> x) const {
  if (x.size() != st_.mean.size()) throw DimensionError("complexity: dimension mismatch");
  return compressed_size(quantize_u8(st_.invert(x)));
}

}  // namespace rfmia
