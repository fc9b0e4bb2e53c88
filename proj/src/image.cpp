#include "audiotex/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "audiotex/error.hpp"

namespace audiotex {

GrayImage spectrogram_image(const Matrix& pixels) {
  GrayImage img;
  img.width = pixels.cols();
  img.height = pixels.rows();
  img.pixels.resize(img.width * img.height);
  for (std::size_t r = 0; r < img.height; ++r) {
    const std::size_t y = img.height - 1 - r;
    for (std::size_t c = 0; c < img.width; ++c) {
      double v = pixels(r, c);
      v = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
      img.pixels[y * img.width + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return img;
}

void write_png(const std::filesystem::path& path, const GrayImage& image) {
  if (image.width == 0 || image.height == 0)
    throw InvalidArgument("cannot write an empty image");
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.c_str(), 0, image.pixels.data(),
                               static_cast<png_int_32>(image.width), nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw IoError("cannot write " + path.string() + ": " + msg);
  }
}

GrayImage read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw IoError("unreadable file: " + path.string() + ": " + png.message);
  png.format = PNG_FORMAT_GRAY;
  GrayImage img;
  img.width = png.width;
  img.height = png.height;
  img.pixels.resize(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw IoError("unreadable file: " + path.string() + ": " + msg);
  }
  return img;
}

}  // namespace audiotex
