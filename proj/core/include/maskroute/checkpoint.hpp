#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "maskroute/model.hpp"

namespace maskroute {

// Backbone checkpoint, little-endian:
//   "S3RB"  u16 version (=1)
//   config: u64 vocab_size, d_model, n_heads, n_blocks, ffn_mult, max_seq_len, seed
//   u8 frozen  u32 tensor_count
//   per tensor in Backbone::parameters() order: u32 rank, u64 dims[rank], f64 data
//   u32 CRC-32
//
// Head file: "S3RH" u16 version, u64 d_model, u64 n_classes, f64 weight,
// f64 bias, u32 CRC-32.

std::vector<std::uint8_t> serialize_backbone(const Backbone& backbone);
Backbone deserialize_backbone(std::span<const std::uint8_t> bytes);
void save_backbone(const Backbone& backbone, const std::filesystem::path& path);
Backbone load_backbone(const std::filesystem::path& path);

/// CRC-32 of serialize_backbone(); identifies a backbone in manifests.
std::uint32_t backbone_checksum(const Backbone& backbone);

std::vector<std::uint8_t> serialize_head(const TaskHead& head);
TaskHead deserialize_head(std::span<const std::uint8_t> bytes);
void save_head(const TaskHead& head, const std::filesystem::path& path);
TaskHead load_head(const std::filesystem::path& path);

}  // namespace maskroute
