#pragma once

#include <filesystem>

#include "lmk/tensor.hpp"

namespace lmk {

/// 8-bit PNG I/O. Images are (C, H, W) floats in [0, 1]; writing quantises with
/// round-to-nearest and clamps. Grey, grey+alpha and RGBA inputs load as RGB.
/// Throws DataError on I/O or decode failure.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

/// Bilinear resize to (height, width). Output pixel (i, j) samples the input at
/// (i * H_in / height, j * W_in / width), so a landmark y maps to y * height / H_in.
Image resize_bilinear(const Image& image, int height, int width);

}  // namespace lmk
