#pragma once

#include <cstdint>
#include <span>

namespace maskroute {

/// CRC-32 (IEEE 802.3, reflected polynomial 0xEDB88320).
std::uint32_t crc32(std::span<const std::uint8_t> bytes);

/// Continues a running CRC; crc32_update(0, b) == crc32(b).
std::uint32_t crc32_update(std::uint32_t crc, std::span<const std::uint8_t> bytes);

}  // namespace maskroute
