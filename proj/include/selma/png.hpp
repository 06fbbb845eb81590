#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "selma/types.hpp"

namespace selma {

// Encodes an 8-bit RGB image as a PNG byte stream. The deflate payload uses
// stored (uncompressed) blocks, which every decoder accepts and keeps the
// encoder dependency-free. Pixel order is row-major, 3 bytes per pixel.
std::vector<std::uint8_t> encode_png_rgb8(const std::vector<std::uint8_t>& rgb,
                                          int width, int height);

// Quantizes a float image (values clamped to [0,1]) and writes it to `path`.
// Throws std::runtime_error on I/O failure.
void write_png(const Image& img, const std::string& path);

}  // namespace selma
