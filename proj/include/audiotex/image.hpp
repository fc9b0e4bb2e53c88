#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "audiotex/matrix.hpp"

namespace audiotex {

/// 8-bit grayscale raster, row 0 at the top.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

/// round(clamp(v, 0, 1) * 255). Frequency bin 0 lands on the bottom row and
/// time runs left to right.
GrayImage spectrogram_image(const Matrix& pixels);

void write_png(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_png(const std::filesystem::path& path);

}  // namespace audiotex
