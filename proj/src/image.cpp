#include "mambaeye/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mambaeye {

namespace {

float lerp(float a, float b, float f) { return a + f * (b - a); }

}  // namespace

Image resize_bilinear(const Image& src, int new_height, int new_width) {
  if (new_height <= 0 || new_width <= 0) throw std::invalid_argument("resize to empty image");
  if (new_height == src.height && new_width == src.width) return src;
  Image out(src.channels, new_height, new_width);
  const double sy = static_cast<double>(src.height) / new_height;
  const double sx = static_cast<double>(src.width) / new_width;
  for (int y = 0; y < new_height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const auto wy = static_cast<float>(fy - y0);
    for (int x = 0; x < new_width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const auto wx = static_cast<float>(fx - x0);
      for (int c = 0; c < src.channels; ++c) {
        const float top = lerp(src.at(c, y0, x0), src.at(c, y0, x1), wx);
        const float bottom = lerp(src.at(c, y1, x0), src.at(c, y1, x1), wx);
        out.at(c, y, x) = lerp(top, bottom, wy);
      }
    }
  }
  return out;
}

float sample_bilinear(const Image& img, int channel, double y, double x) {
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const auto wy = static_cast<float>(y - y0);
  const auto wx = static_cast<float>(x - x0);
  auto px = [&](int yy, int xx) -> float {
    if (yy < 0 || xx < 0 || yy >= img.height || xx >= img.width) return 0.0f;
    return img.at(channel, yy, xx);
  };
  const float top = lerp(px(y0, x0), px(y0, x0 + 1), wx);
  const float bottom = lerp(px(y0 + 1, x0), px(y0 + 1, x0 + 1), wx);
  return lerp(top, bottom, wy);
}

Image read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw std::runtime_error("cannot decode PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw std::runtime_error("cannot decode PNG " + path.string() + ": " + image.message);
  }
  const int h = static_cast<int>(image.height);
  const int w = static_cast<int>(image.width);
  Image out(3, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        out.at(c, y, x) = buffer[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0f;
      }
    }
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw std::invalid_argument("write_png supports 1 or 3 channels");
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
        buffer[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw std::runtime_error("cannot write PNG " + path.string() + ": " + image.message);
  }
}

}  // namespace mambaeye
