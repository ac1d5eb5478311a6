#pragma once

#include <string>

#include "splatfuse/core/image.hpp"

namespace splatfuse {

// 8-bit RGB(A) PNG -> float RGB in [0,1].
ImageF read_png_rgb(const std::string& path);
void write_png_rgb(const std::string& path, const ImageF& image);

// 16-bit grayscale PNG, raw counts (callers apply the depth unit).
Image<uint16_t> read_png_gray16(const std::string& path);
void write_png_gray16(const std::string& path, const Image<uint16_t>& image);

// Grayscale PFM ("Pf"), little-endian, values as stored.
ImageF read_pfm(const std::string& path);
void write_pfm(const std::string& path, const ImageF& image);

}  // namespace splatfuse
