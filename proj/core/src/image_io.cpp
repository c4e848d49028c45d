#include "demoe/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "demoe/error.hpp"

namespace demoe::io {

namespace {

std::uint8_t to_code(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

}  // namespace

Tensor read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&img, path.c_str()) == 0) {
    throw IoError("cannot read PNG '" + path.string() + "': " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr) == 0) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError("cannot decode PNG '" + path.string() + "': " + msg);
  }
  const std::size_t h = img.height;
  const std::size_t w = img.width;
  Tensor out({1, 3, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        out.at(0, c, y, x) = static_cast<float>(buf[(y * w + x) * 3 + c]) / 255.0f;
      }
    }
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Tensor& image) {
  const Shape& s = image.shape();
  if (s.n != 1 || s.c != 3 || s.h == 0 || s.w == 0) {
    throw ShapeError("write_png: expected a (1, 3, H, W) image, got " + s.str());
  }
  std::vector<std::uint8_t> buf(s.h * s.w * 3);
  for (std::size_t y = 0; y < s.h; ++y) {
    for (std::size_t x = 0; x < s.w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) buf[(y * s.w + x) * 3 + c] = to_code(image.at(0, c, y, x));
    }
  }
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(s.w);
  img.height = static_cast<png_uint_32>(s.h);
  img.format = PNG_FORMAT_RGB;
  if (png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr) == 0) {
    throw IoError("cannot write PNG '" + path.string() + "': " + img.message);
  }
}

Tensor quantize8(const Tensor& image) {
  Tensor out(image.shape());
  for (std::size_t i = 0; i < image.numel(); ++i) out[i] = static_cast<float>(to_code(image[i])) / 255.0f;
  return out;
}

}  // namespace demoe::io
