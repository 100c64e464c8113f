#pragma once

#include <filesystem>

#include "gestalt/image.hpp"

namespace gestalt {

// 8-bit RGB. Grayscale, palette, alpha and 16-bit inputs are converted.
Image read_png_rgb(const std::filesystem::path& path);
// 8-bit single channel. Colour inputs are reduced with libpng's default weights.
GrayImage read_png_gray(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const Image& image);
void write_png(const std::filesystem::path& path, const GrayImage& image);
// Masks are written as one channel, 0 / 255.
void write_png(const std::filesystem::path& path, const Mask& mask);

}  // namespace gestalt
