#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "teli/tensor.hpp"

namespace teli {

// Planar float image [C,H,W] with raw 0..255 values.
Tensor decode_image(const std::filesystem::path& path, int channels);

// Pixel-center bilinear interpolation; identity when sizes already match.
Tensor bilinear_resize(const Tensor& src, std::int64_t out_h, std::int64_t out_w);

// decode -> bilinear resize to target x target -> scale into [0,1]
Tensor load_image(const std::filesystem::path& path, std::int64_t target_size, int channels);

// 8-bit grayscale PNG writer for fixtures and tests.
void write_png_gray(const std::filesystem::path& path, std::int64_t height, std::int64_t width,
                    const std::vector<std::uint8_t>& pixels);

}  // namespace teli
