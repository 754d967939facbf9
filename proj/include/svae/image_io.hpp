#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "svae/tensor.hpp"

namespace svae {

// 8-bit interleaved pixels, row-major.
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;  // 1 (gray) or 3 (RGB)
  std::vector<std::uint8_t> pixels;
};

// 8-bit, non-interlaced, no ancillary chunks (byte-identical for identical input).
void write_png(const std::filesystem::path& path, const Image8& image);
// Gray, gray+alpha, RGB and RGBA inputs; alpha is dropped, palettes expanded.
Image8 read_png(const std::filesystem::path& path);
Image8 read_jpeg(const std::filesystem::path& path);

// Tiles images [k, C, H, W] (C = 1 or 3, values in [0, 1]) row-major into a
// grid with `rows` rows and ceil(k / rows) columns, separated by 2-pixel
// white gutters. Out-of-range values throw ContractError.
Image8 tile_grid(const Tensor& images, std::size_t rows);
void save_png_grid(const Tensor& images, std::size_t rows, const std::filesystem::path& path);

inline constexpr std::size_t kGridGutter = 2;

}  // namespace svae
