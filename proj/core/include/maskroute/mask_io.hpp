#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "maskroute/masking.hpp"

namespace maskroute {

// Mask file, all integers little-endian:
//   "S3RM"  u16 version (=1)  u32 layer_count
//   per layer: u16 name_len, name (UTF-8), u64 numel, u64 keep_count,
//              ceil(numel/8) bytes of bits, element e at bit e%8 of byte e/8
//   u32 CRC-32 of every preceding byte
//
// The score file uses the same framing with magic "S3RS" and numel f64
// values in place of the packed bits.

inline constexpr std::uint16_t kMaskFileVersion = 1;

/// LSB-first packing; throws FormatError(kNonBinary) on values other than 0/1.
std::vector<std::uint8_t> pack_bits(std::span<const std::uint8_t> bits);
/// Inverse of pack_bits for `numel` elements. Throws FormatError(kBadPadding)
/// if any pad bit past numel is set.
std::vector<std::uint8_t> unpack_bits(std::span<const std::uint8_t> packed, std::size_t numel);

std::vector<std::uint8_t> serialize_masks(const MaskSet& masks);
/// Verifies magic, version, CRC, pad bits and popcount == keep_count.
/// Loaded layers carry the flat shape {numel}; the file does not store shape.
MaskSet deserialize_masks(std::span<const std::uint8_t> bytes);

void save_masks(const MaskSet& masks, const std::filesystem::path& path);
MaskSet load_masks(const std::filesystem::path& path);

/// Exact byte size of serialize_masks(masks).
std::size_t mask_file_size(const MaskSet& masks);

std::vector<std::uint8_t> serialize_scores(const ScoreSet& scores);
/// Loaded score tensors have flat shape {numel} and do not require grad.
ScoreSet deserialize_scores(std::span<const std::uint8_t> bytes);
void save_scores(const ScoreSet& scores, const std::filesystem::path& path);
ScoreSet load_scores(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a partial file. Throws FormatError(kIo).
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace maskroute
