#pragma once

// Little-endian byte framing shared by the on-disk formats.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "maskroute/crc32.hpp"
#include "maskroute/errors.hpp"

namespace maskroute::detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void text(std::string_view s) {
    buf_.insert(buf_.end(), reinterpret_cast<const std::uint8_t*>(s.data()),
                reinterpret_cast<const std::uint8_t*>(s.data()) + s.size());
  }
  /// Appends the CRC-32 of everything written so far.
  void crc_trailer() { u32(crc32(buf_)); }

  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : buf_(b) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::span<const std::uint8_t> bytes(std::size_t n) {
    need(n);
    auto out = buf_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::string text(std::size_t n) {
    auto b = bytes(n);
    return {reinterpret_cast<const char*>(b.data()), b.size()};
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (n > remaining())
      throw FormatError(FormatErrorKind::kTruncated,
                        "need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) +
                            ", have " + std::to_string(remaining()));
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

/// Checks the 4-byte magic, the u16 version and then the CRC trailer over
/// everything before it. Returns a reader positioned after the version and
/// limited to the payload.
inline ByteReader open_framed(std::span<const std::uint8_t> file, std::string_view magic,
                              std::uint16_t version) {
  if (file.size() < magic.size() ||
      std::memcmp(file.data(), magic.data(), magic.size()) != 0)
    throw FormatError(FormatErrorKind::kBadMagic, "expected magic '" + std::string(magic) + "'");
  if (file.size() < magic.size() + 2 + 4)
    throw FormatError(FormatErrorKind::kTruncated, "file shorter than its framing");
  const std::uint16_t found = ByteReader(file.subspan(magic.size(), 2)).u16();
  if (found != version)
    throw FormatError(FormatErrorKind::kBadVersion, "version " + std::to_string(found) +
                                                        ", expected " + std::to_string(version));
  const auto body = file.first(file.size() - 4);
  ByteReader trailer(file.last(4));
  const std::uint32_t stored = trailer.u32();
  const std::uint32_t actual = crc32(body);
  if (stored != actual) {
    char msg[64];
    std::snprintf(msg, sizeof msg, "stored %08x, computed %08x", stored, actual);
    throw FormatError(FormatErrorKind::kBadCrc, msg);
  }
  return ByteReader(body.subspan(magic.size() + 2));
}

}  // namespace maskroute::detail
