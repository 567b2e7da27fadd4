#pragma once

// Grayscale image files. PNG (8 or 16 bit) and binary/ASCII PGM are read with
// intensities mapped to value / maxval. Images are written as 16-bit PNG and
// masks as 8-bit PNG holding 0 or 255.

#include <string>

#include "anatpaste/image.hpp"

namespace anatpaste::app {

/// Throws IoError naming the path when the file cannot be read or decoded.
GrayImage read_image(const std::string& path);

/// Pixels are quantized to round(v * 65535), so an image read back from a
/// file written here is reproduced exactly.
void write_image(const std::string& path, const GrayImage& img);

/// Foreground where the stored intensity is at least one half.
BinaryMask read_mask(const std::string& path);
void write_mask(const std::string& path, const BinaryMask& mask);

}  // namespace anatpaste::app
