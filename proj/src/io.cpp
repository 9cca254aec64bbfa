#include "rfmia/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>

#include "rfmia/errors.hpp"

namespace rfmia::io {

void ByteWriter::bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::f64s(std::span<const double> v) {
  for (double x : v) f64(x);
}

void ByteWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s);
}

void ByteWriter::seal() { u64(fnv1a(buf_)); }

void ByteReader::need(std::size_t n) {
  const std::size_t end = sealed_ ? end_ : data_.size();
  if (pos_ + n > end) {
    throw FormatError("unexpected end of data: need " + std::to_string(n) + " bytes, " +
                          std::to_string(end - pos_) + " left",
                      pos_);
  }
}

void ByteReader::expect_magic(std::string_view magic, std::string_view what) {
  need(magic.size());
  if (std::memcmp(data_.data() + pos_, magic.data(), magic.size()) != 0) {
    throw FormatError("bad magic for " + std::string(what), pos_);
  }
  pos_ += magic.size();
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::vector<double> ByteReader::f64s(std::size_t n) {
  need(n * 8);
  std::vector<double> out(n);
  for (auto& v : out) v = f64();
  return out;
}

std::string ByteReader::str(std::size_t max_len) {
  const auto at = pos_;
  const std::uint32_t n = u32();
  if (n > max_len) throw FormatError("string length " + std::to_string(n) + " too large", at);
  need(n);
  std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
  pos_ += n;
  return s;
}

void ByteReader::verify_seal(std::string_view what) {
  if (data_.size() < 8) throw FormatError(std::string(what) + " file truncated", data_.size());
  const std::size_t body = data_.size() - 8;
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(data_[body + i]) << (8 * i);
  if (stored != fnv1a(std::span<const std::uint8_t>(data_.data(), body))) {
    throw FormatError(std::string(what) + " checksum mismatch (corrupt or truncated file)", body);
  }
  end_ = body;
  sealed_ = true;
}

void ByteReader::expect_end(std::string_view what) {
  const std::size_t end = sealed_ ? end_ : data_.size();
  if (pos_ != end) {
    throw FormatError(std::string(what) + ": " + std::to_string(end - pos_) + " trailing bytes",
                      pos_);
  }
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a(std::string_view s) {
  return fnv1a(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArgumentError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ArgumentError("write failed for " + path.string());
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()),
                                                 text.size()));
}

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

}  // namespace rfmia::io
