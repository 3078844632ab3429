#include "maskroute/checkpoint.hpp"

#include <algorithm>

#include "binary_io.hpp"
#include "maskroute/crc32.hpp"
#include "maskroute/errors.hpp"
#include "maskroute/mask_io.hpp"

namespace maskroute {

using detail::ByteReader;
using detail::ByteWriter;

namespace {

constexpr std::string_view kBackboneMagic = "S3RB";
constexpr std::string_view kHeadMagic = "S3RH";
constexpr std::uint16_t kVersion = 1;

void read_into(ByteReader& r, Tensor& t) {
  for (auto& v : t.mutable_data()) v = r.f64();
}

}  // namespace

std::vector<std::uint8_t> serialize_backbone(const Backbone& bb) {
  ByteWriter w;
  w.text(kBackboneMagic);
  w.u16(kVersion);
  const auto& c = bb.config;
  for (const std::uint64_t v : {std::uint64_t{c.vocab_size}, std::uint64_t{c.d_model},
                                std::uint64_t{c.n_heads}, std::uint64_t{c.n_blocks},
                                std::uint64_t{c.ffn_mult}, std::uint64_t{c.max_seq_len}, c.seed})
    w.u64(v);
  w.u8(bb.frozen() ? 1 : 0);
  const auto params = bb.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& t : params) {
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (const auto d : t.shape()) w.u64(d);
    for (const double v : t.data()) w.f64(v);
  }
  w.crc_trailer();
  return std::move(w.buffer());
}

Backbone deserialize_backbone(std::span<const std::uint8_t> bytes) {
  ByteReader r = detail::open_framed(bytes, kBackboneMagic, kVersion);
  ModelConfig cfg;
  cfg.vocab_size = r.u64();
  cfg.d_model = r.u64();
  cfg.n_heads = r.u64();
  cfg.n_blocks = r.u64();
  cfg.ffn_mult = r.u64();
  cfg.max_seq_len = r.u64();
  cfg.seed = r.u64();
  const bool frozen = r.u8() != 0;
  const std::uint32_t count = r.u32();
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(FormatErrorKind::kMalformed, std::string("checkpoint config: ") + e.what());
  }
  const std::size_t expected_params = 2 + cfg.n_blocks * 16 + 2;
  if (count != expected_params || backbone_parameter_count(cfg) > r.remaining() / 8)
    throw FormatError(FormatErrorKind::kMalformed, "tensor table does not match the config");

  Backbone bb = build_backbone(cfg);
  for (auto& t : bb.parameters()) {
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    if (shape != t.shape())
      throw FormatError(FormatErrorKind::kMalformed, "tensor shape " + shape_str(shape) +
                                                         ", expected " + shape_str(t.shape()));
    read_into(r, t);
  }
  if (r.remaining() != 0) throw FormatError(FormatErrorKind::kMalformed, "trailing bytes");
  if (frozen) bb.freeze();
  return bb;
}

void save_backbone(const Backbone& backbone, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_backbone(backbone));
}

Backbone load_backbone(const std::filesystem::path& path) {
  return deserialize_backbone(read_file(path));
}

std::uint32_t backbone_checksum(const Backbone& backbone) {
  return crc32(serialize_backbone(backbone));
}

std::vector<std::uint8_t> serialize_head(const TaskHead& head) {
  ByteWriter w;
  w.text(kHeadMagic);
  w.u16(kVersion);
  w.u64(head.weight.dim(0));
  w.u64(head.n_classes());
  for (const double v : head.weight.data()) w.f64(v);
  for (const double v : head.bias.data()) w.f64(v);
  w.crc_trailer();
  return std::move(w.buffer());
}

TaskHead deserialize_head(std::span<const std::uint8_t> bytes) {
  ByteReader r = detail::open_framed(bytes, kHeadMagic, kVersion);
  const std::uint64_t d = r.u64();
  const std::uint64_t c = r.u64();
  if (d == 0 || c == 0 || d > r.remaining() || (d + 1) * c * 8 != r.remaining())
    throw FormatError(FormatErrorKind::kMalformed, "head dimensions do not match the payload");
  TaskHead head{Tensor({d, c}), Tensor({c})};
  read_into(r, head.weight);
  read_into(r, head.bias);
  return head;
}

void save_head(const TaskHead& head, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_head(head));
}

TaskHead load_head(const std::filesystem::path& path) { return deserialize_head(read_file(path)); }

}  // namespace maskroute
