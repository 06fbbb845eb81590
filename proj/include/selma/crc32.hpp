#pragma once

#include <cstddef>
#include <cstdint>

namespace selma {

// CRC-32 (polynomial 0xEDB88320, the PNG/zlib variant).
std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t crc = 0);

// Adler-32 as used by zlib streams.
std::uint32_t adler32(const void* data, std::size_t len);

}  // namespace selma
