#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace mambaeye {

/// Planar C x H x W float image.
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w), pixels(static_cast<std::size_t>(c) * h * w, fill) {}

  float& at(int c, int y, int x) {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
};

/// Half-pixel-centred bilinear resize; an identity-size resize copies exactly.
Image resize_bilinear(const Image& src, int new_height, int new_width);

/// Bilinear sample with zero outside the image.
float sample_bilinear(const Image& img, int channel, double y, double x);

Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);

}  // namespace mambaeye
