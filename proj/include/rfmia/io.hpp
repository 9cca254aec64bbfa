#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rfmia::io {

/// Little-endian binary writer into an in-memory buffer.
class ByteWriter {
 public:
  void bytes(std::string_view s);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void f64s(std::span<const double> v);
  void str(std::string_view s);  // u32 length + bytes

  const std::vector<std::uint8_t>& buffer() const { return buf_; }
  /// Appends an FNV-1a checksum of everything written so far.
  void seal();

 private:
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked little-endian reader; every failure is a FormatError
/// carrying the offending offset.
class ByteReader {
 public:
  explicit ByteReader(std::vector<std::uint8_t> data) : data_(std::move(data)) {}

  void expect_magic(std::string_view magic, std::string_view what);
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::vector<double> f64s(std::size_t n);
  std::string str(std::size_t max_len = 1 << 16);

  std::uint64_t offset() const { return pos_; }
  /// Verifies the trailing checksum written by ByteWriter::seal(). Call
  /// before reading the payload.
  void verify_seal(std::string_view what);
  /// Throws unless all payload bytes were consumed.
  void expect_end(std::string_view what);

 private:
  void need(std::size_t n);

  std::vector<std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::size_t end_ = 0;  // payload end (excludes checksum once verified)
  bool sealed_ = false;
};

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes);
std::uint64_t fnv1a(std::string_view s);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, std::string_view text);

/// Shortest round-trip decimal representation.
std::string fmt_double(double v);

}  // namespace rfmia::io
