#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "bevloc/bev.hpp"

namespace bevloc {

/// 8-bit grayscale PNG, pixel byte = round(255 * value). For inspection only.
void save_bev_png(const BevImage& img, const std::filesystem::path& path);

/// Little-endian float32, row-major side*side. The training interchange format.
void save_bev_f32(const BevImage& img, const std::filesystem::path& path);
BevImage load_bev_f32(const std::filesystem::path& path, int side);

/// Minimal PNG encoders (zlib-backed); also used by the plotting module.
void write_png_gray8(const std::filesystem::path& path, int width, int height,
                     const std::vector<std::uint8_t>& pixels);
void write_png_rgb8(const std::filesystem::path& path, int width, int height,
                    const std::vector<std::uint8_t>& pixels);

}  // namespace bevloc
