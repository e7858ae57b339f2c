#pragma once

#include <filesystem>

#include "corrstyle/tensor.hpp"

namespace corrstyle {

// Planar RGB (3 channels) or grayscale (1 channel) image, values in [0, 1].
using Image = Tensor3d;

Image load_png(const std::filesystem::path& path);
// Values are clamped to [0, 1] and quantized to 8 bits. Writes a temporary
// file next to `path` and renames it into place.
void save_png(const Image& image, const std::filesystem::path& path);

// ITU-R BT.601 luma.
Image luminance(const Image& rgb);

void require_rgb(const Image& image, const char* what);
bool in_unit_range(const Image& image);

}  // namespace corrstyle
