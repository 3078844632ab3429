#include "maskroute/mask_io.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <fstream>
#include <iterator>

#include "binary_io.hpp"
#include "maskroute/errors.hpp"

namespace maskroute {

using detail::ByteReader;
using detail::ByteWriter;

namespace {

constexpr std::string_view kMaskMagic = "S3RM";
constexpr std::string_view kScoreMagic = "S3RS";

void write_name(ByteWriter& w, const std::string& name) {
  if (name.size() > 0xFFFF) throw FormatError(FormatErrorKind::kMalformed, "layer name too long");
  w.u16(static_cast<std::uint16_t>(name.size()));
  w.text(name);
}

std::uint32_t checked_count(std::size_t n) {
  if (n > 0xFFFFFFFFu) throw FormatError(FormatErrorKind::kMalformed, "too many layers");
  return static_cast<std::uint32_t>(n);
}

std::size_t checked_numel(std::uint64_t numel, const ByteReader& r, std::size_t bytes_per_elem) {
  // Reject sizes that cannot fit in the remaining payload before allocating.
  const std::uint64_t need =
      bytes_per_elem == 0 ? (numel + 7) / 8 : numel * static_cast<std::uint64_t>(bytes_per_elem);
  if (numel > (std::uint64_t{1} << 40) || need > r.remaining())
    throw FormatError(FormatErrorKind::kTruncated, "record claims " + std::to_string(numel) +
                                                       " elements beyond the end of the file");
  return static_cast<std::size_t>(numel);
}

}  // namespace

std::vector<std::uint8_t> pack_bits(std::span<const std::uint8_t> bits) {
  std::vector<std::uint8_t> out((bits.size() + 7) / 8, 0);
  for (std::size_t e = 0; e < bits.size(); ++e) {
    if (bits[e] > 1)
      throw FormatError(FormatErrorKind::kNonBinary,
                        "element " + std::to_string(e) + " is " + std::to_string(bits[e]));
    out[e / 8] |= static_cast<std::uint8_t>(bits[e] << (e % 8));
  }
  return out;
}

std::vector<std::uint8_t> unpack_bits(std::span<const std::uint8_t> packed, std::size_t numel) {
  if (packed.size() != (numel + 7) / 8)
    throw FormatError(FormatErrorKind::kTruncated, "packed length does not match numel");
  std::vector<std::uint8_t> out(numel);
  for (std::size_t e = 0; e < numel; ++e) out[e] = (packed[e / 8] >> (e % 8)) & 1u;
  if (numel % 8 != 0 && (packed.back() >> (numel % 8)) != 0)
    throw FormatError(FormatErrorKind::kBadPadding, "nonzero pad bits");
  return out;
}

std::vector<std::uint8_t> serialize_masks(const MaskSet& masks) {
  ByteWriter w;
  w.text(kMaskMagic);
  w.u16(kMaskFileVersion);
  w.u32(checked_count(masks.layers.size()));
  for (const auto& m : masks.layers) {
    write_name(w, m.name);
    w.u64(m.numel());
    w.u64(m.popcount());
    w.bytes(pack_bits(m.bits));
  }
  w.crc_trailer();
  return std::move(w.buffer());
}

MaskSet deserialize_masks(std::span<const std::uint8_t> bytes) {
  ByteReader r = detail::open_framed(bytes, kMaskMagic, kMaskFileVersion);
  const std::uint32_t count = r.u32();
  MaskSet out;
  for (std::uint32_t i = 0; i < count; ++i) {
    LayerMask m;
    m.name = r.text(r.u16());
    const std::size_t numel = checked_numel(r.u64(), r, 0);
    const std::uint64_t keep = r.u64();
    const auto packed = r.bytes((numel + 7) / 8);
    std::uint64_t pop = 0;
    for (const auto b : packed) pop += static_cast<std::uint64_t>(std::popcount(b));
    m.bits = unpack_bits(packed, numel);
    if (pop != keep)
      throw FormatError(FormatErrorKind::kBadPopcount,
                        "layer " + m.name + ": popcount " + std::to_string(pop) +
                            " but keep_count " + std::to_string(keep));
    m.shape = {numel};
    out.layers.push_back(std::move(m));
  }
  if (r.remaining() != 0) throw FormatError(FormatErrorKind::kMalformed, "trailing bytes");
  return out;
}

std::size_t mask_file_size(const MaskSet& masks) {
  std::size_t n = 4 + 2 + 4;
  for (const auto& m : masks.layers) n += 2 + m.name.size() + 8 + 8 + (m.numel() + 7) / 8;
  return n + 4;
}

void save_masks(const MaskSet& masks, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_masks(masks));
}

MaskSet load_masks(const std::filesystem::path& path) { return deserialize_masks(read_file(path)); }

std::vector<std::uint8_t> serialize_scores(const ScoreSet& scores) {
  ByteWriter w;
  w.text(kScoreMagic);
  w.u16(kMaskFileVersion);
  w.u32(checked_count(scores.size()));
  for (const auto& ls : scores) {
    write_name(w, ls.layer.name());
    w.u64(ls.scores.numel());
    w.u64(ls.keep);
    for (const double v : ls.scores.data()) w.f64(v);
  }
  w.crc_trailer();
  return std::move(w.buffer());
}

ScoreSet deserialize_scores(std::span<const std::uint8_t> bytes) {
  ByteReader r = detail::open_framed(bytes, kScoreMagic, kMaskFileVersion);
  const std::uint32_t count = r.u32();
  ScoreSet out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.text(r.u16());
    LayerId id;
    try {
      id = LayerId::parse(name);
    } catch (const MaskError& e) {
      throw FormatError(FormatErrorKind::kMalformed, e.what());
    }
    const std::size_t numel = checked_numel(r.u64(), r, 8);
    const std::uint64_t keep = r.u64();
    if (keep > numel)
      throw FormatError(FormatErrorKind::kMalformed, "layer " + name + ": keep exceeds numel");
    std::vector<double> values(numel);
    for (auto& v : values) v = r.f64();
    out.push_back({id, Tensor({numel}, std::move(values)), static_cast<std::size_t>(keep)});
  }
  if (r.remaining() != 0) throw FormatError(FormatErrorKind::kMalformed, "trailing bytes");
  return out;
}

void save_scores(const ScoreSet& scores, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_scores(scores));
}

ScoreSet load_scores(const std::filesystem::path& path) {
  return deserialize_scores(read_file(path));
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  static std::atomic<unsigned> counter{0};
  std::filesystem::path tmp = path;
  tmp += ".tmp" + std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatErrorKind::kIo, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw FormatError(FormatErrorKind::kIo, "write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw FormatError(FormatErrorKind::kIo, "cannot rename into " + path.string());
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::kIo, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace maskroute
