#include "mambaeye/patchio.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>

namespace mambaeye {

Rect intersect(const Rect& a, const Rect& b) {
  const int x0 = std::max(a.x0, b.x0);
  const int y0 = std::max(a.y0, b.y0);
  const int x1 = std::min(a.x0 + a.w, b.x0 + b.w);
  const int y1 = std::min(a.y0 + a.h, b.y0 + b.h);
  if (x1 <= x0 || y1 <= y0) return Rect{x0, y0, 0, 0};
  return Rect{x0, y0, x1 - x0, y1 - y0};
}

namespace {

Canvas paste_centered(const Image& image, int canvas_w, int canvas_h) {
  Canvas c;
  c.pixels = Image(image.channels, canvas_h, canvas_w);
  c.image_region = Rect{(canvas_w - image.width) / 2, (canvas_h - image.height) / 2, image.width,
                        image.height};
  for (int ch = 0; ch < image.channels; ++ch) {
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        c.pixels.at(ch, c.image_region.y0 + y, c.image_region.x0 + x) = image.at(ch, y, x);
      }
    }
  }
  return c;
}

}  // namespace

Canvas make_train_canvas(const Image& image, int min_side, int max_side, Rng& rng) {
  if (min_side > max_side || min_side <= 0) {
    throw std::invalid_argument("train canvas requires 0 < min_side <= max_side");
  }
  const int side = uniform_int(rng, min_side, max_side);
  return paste_centered(image, std::max(side, image.width), std::max(side, image.height));
}

Canvas make_eval_canvas(const Image& image, int target_side) {
  if (target_side <= 0) throw std::invalid_argument("eval canvas requires target_side > 0");
  const int long_side = std::max(image.height, image.width);
  const double scale = static_cast<double>(target_side) / long_side;
  const int h = image.height >= image.width
                    ? target_side
                    : std::max(1, static_cast<int>(std::lround(image.height * scale)));
  const int w = image.width >= image.height
                    ? target_side
                    : std::max(1, static_cast<int>(std::lround(image.width * scale)));
  return paste_centered(resize_bilinear(image, h, w), target_side, target_side);
}

CoverageMap::CoverageMap(Rect image_region)
    : region_(image_region),
      words_per_row_((static_cast<std::size_t>(std::max(image_region.w, 0)) + 63) / 64),
      bits_(words_per_row_ * static_cast<std::size_t>(std::max(image_region.h, 0)), 0) {}

double CoverageMap::update(const Rect& patch) {
  const Rect clip = intersect(patch, region_);
  for (int y = clip.y0; y < clip.y0 + clip.h; ++y) {
    std::uint64_t* row = bits_.data() + static_cast<std::size_t>(y - region_.y0) * words_per_row_;
    for (int x = clip.x0; x < clip.x0 + clip.w;) {
      const int bx = x - region_.x0;
      const int word = bx / 64;
      const int bit = bx % 64;
      const int span = std::min(64 - bit, clip.x0 + clip.w - x);
      const std::uint64_t mask =
          (span == 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << span) - 1)) << bit;
      covered_ += std::popcount(mask & ~row[word]);
      row[word] |= mask;
      x += span;
    }
  }
  return ratio();
}

double CoverageMap::ratio() const {
  return region_.area() == 0 ? 0.0 : static_cast<double>(covered_) / region_.area();
}

bool CoverageMap::covered(int x, int y) const {
  const int bx = x - region_.x0;
  const int by = y - region_.y0;
  if (bx < 0 || by < 0 || bx >= region_.w || by >= region_.h) return false;
  return (bits_[static_cast<std::size_t>(by) * words_per_row_ + bx / 64] >> (bx % 64)) & 1u;
}

long CoverageMap::popcount() const {
  long n = 0;
  for (std::uint64_t w : bits_) n += std::popcount(w);
  return n;
}

ScanKind parse_scan_kind(std::string_view name) {
  if (name == "random" || name == "random-image") return ScanKind::RandomImage;
  if (name == "random-mixed") return ScanKind::RandomMixed;
  if (name == "raster" || name == "raster-horizontal") return ScanKind::RasterHorizontal;
  if (name == "zigzag" || name == "zigzag-horizontal") return ScanKind::ZigzagHorizontal;
  throw std::invalid_argument("unknown scan policy '" + std::string(name) + "'");
}

std::string to_string(ScanKind kind) {
  switch (kind) {
    case ScanKind::RandomImage:
      return "random";
    case ScanKind::RandomMixed:
      return "random-mixed";
    case ScanKind::RasterHorizontal:
      return "raster";
    case ScanKind::ZigzagHorizontal:
      return "zigzag";
  }
  return "unknown";
}

bool is_deterministic(ScanKind kind) {
  return kind == ScanKind::RasterHorizontal || kind == ScanKind::ZigzagHorizontal;
}

void extract_patch(const Canvas& canvas, int x, int y, int patch, std::vector<float>& out) {
  const Image& img = canvas.pixels;
  out.resize(static_cast<std::size_t>(img.channels) * patch * patch);
  std::size_t i = 0;
  for (int c = 0; c < img.channels; ++c) {
    for (int py = 0; py < patch; ++py) {
      const float* src = &img.pixels[(static_cast<std::size_t>(c) * img.height + y + py) * img.width + x];
      std::copy_n(src, patch, out.begin() + static_cast<std::ptrdiff_t>(i));
      i += static_cast<std::size_t>(patch);
    }
  }
}

TrajectoryCursor::TrajectoryCursor(const Canvas& canvas, ScanPolicy policy, int patch)
    : canvas_(&canvas),
      policy_(policy),
      patch_(patch),
      rng_(policy.seed),
      coverage_(canvas.image_region) {
  if (patch <= 0 || patch > canvas.width() || patch > canvas.height()) {
    throw TrajectoryError("patch size " + std::to_string(patch) + " does not fit canvas " +
                          std::to_string(canvas.width()) + "x" + std::to_string(canvas.height()));
  }
  if (is_deterministic(policy.kind)) {
    grid_w_ = canvas.image_region.w / patch;
    grid_h_ = canvas.image_region.h / patch;
    if (grid_w_ == 0 || grid_h_ == 0) {
      throw TrajectoryError("image region " + std::to_string(canvas.image_region.w) + "x" +
                            std::to_string(canvas.image_region.h) +
                            " is smaller than one patch of size " + std::to_string(patch));
    }
  }
  if (policy.kind == ScanKind::RandomMixed) whole_canvas_ = uniform01(rng_) < 0.5;
}

namespace {

// Start positions so that a patch lies inside [lo, lo + len) when it fits, or
// covers it when it does not; always clamped to the canvas.
std::pair<int, int> axis_range(int lo, int len, int patch, int canvas_len) {
  int a = lo;
  int b = lo + len - patch;
  if (b < a) std::swap(a, b);
  a = std::clamp(a, 0, canvas_len - patch);
  b = std::clamp(b, 0, canvas_len - patch);
  return {a, b};
}

}  // namespace

void TrajectoryCursor::next_position(int& x, int& y) {
  const Rect& region = canvas_->image_region;
  switch (policy_.kind) {
    case ScanKind::RandomMixed:
      if (whole_canvas_) {
        x = uniform_int(rng_, 0, canvas_->width() - patch_);
        y = uniform_int(rng_, 0, canvas_->height() - patch_);
        return;
      }
      [[fallthrough]];
    case ScanKind::RandomImage: {
      const auto [xa, xb] = axis_range(region.x0, region.w, patch_, canvas_->width());
      const auto [ya, yb] = axis_range(region.y0, region.h, patch_, canvas_->height());
      x = uniform_int(rng_, xa, xb);
      y = uniform_int(rng_, ya, yb);
      return;
    }
    case ScanKind::RasterHorizontal:
    case ScanKind::ZigzagHorizontal: {
      const long cell = step_ % (static_cast<long>(grid_w_) * grid_h_);
      const int row = static_cast<int>(cell / grid_w_);
      int col = static_cast<int>(cell % grid_w_);
      if (policy_.kind == ScanKind::ZigzagHorizontal && row % 2 == 1) col = grid_w_ - 1 - col;
      x = region.x0 + col * patch_;
      y = region.y0 + row * patch_;
      return;
    }
  }
}

void TrajectoryCursor::next(GlimpseStep& out) {
  int x = 0, y = 0;
  next_position(x, y);
  out.initial = step_ == 0;
  out.dx = out.initial ? 0 : x - prev_x_;
  out.dy = out.initial ? 0 : y - prev_y_;
  out.x = x;
  out.y = y;
  out.r = coverage_.update(Rect{x, y, patch_, patch_});
  extract_patch(*canvas_, x, y, patch_, out.v);
  prev_x_ = x;
  prev_y_ = y;
  ++step_;
}

GlimpseStep TrajectoryCursor::next() {
  GlimpseStep g;
  next(g);
  return g;
}

std::vector<GlimpseStep> generate_trajectory(const Canvas& canvas, ScanPolicy policy, int steps,
                                             int patch) {
  if (steps < 1) throw TrajectoryError("trajectory length must be >= 1");
  TrajectoryCursor cursor(canvas, policy, patch);
  std::vector<GlimpseStep> out(static_cast<std::size_t>(steps));
  for (auto& g : out) cursor.next(g);
  return out;
}

namespace {

// Solves the 8-parameter homography taking dst corners to src corners.
std::array<double, 9> homography(const std::array<std::array<double, 2>, 4>& dst,
                                 const std::array<std::array<double, 2>, 4>& src) {
  double a[8][9] = {};
  for (int i = 0; i < 4; ++i) {
    const double x = dst[i][0], y = dst[i][1], u = src[i][0], v = src[i][1];
    double* r0 = a[2 * i];
    double* r1 = a[2 * i + 1];
    r0[0] = x; r0[1] = y; r0[2] = 1; r0[6] = -u * x; r0[7] = -u * y; r0[8] = u;
    r1[3] = x; r1[4] = y; r1[5] = 1; r1[6] = -v * x; r1[7] = -v * y; r1[8] = v;
  }
  for (int col = 0; col < 8; ++col) {
    int piv = col;
    for (int r = col + 1; r < 8; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    for (int k = 0; k < 9; ++k) std::swap(a[col][k], a[piv][k]);
    for (int r = 0; r < 8; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (int k = col; k < 9; ++k) a[r][k] -= f * a[col][k];
    }
  }
  std::array<double, 9> h{};
  for (int i = 0; i < 8; ++i) h[i] = a[i][8] / a[i][i];
  h[8] = 1.0;
  return h;
}

Image random_crop(const Image& img, const AugmentConfig& cfg, Rng& rng) {
  const double area = static_cast<double>(img.width) * img.height;
  const double frac = uniform(rng, cfg.crop_min_area, 1.0);
  const double ratio = std::exp(uniform(rng, std::log(3.0 / 4.0), std::log(4.0 / 3.0)));
  const int w = std::clamp(static_cast<int>(std::lround(std::sqrt(frac * area * ratio))), 1,
                           img.width);
  const int h = std::clamp(static_cast<int>(std::lround(std::sqrt(frac * area / ratio))), 1,
                           img.height);
  const int x0 = uniform_int(rng, 0, img.width - w);
  const int y0 = uniform_int(rng, 0, img.height - h);
  Image out(img.channels, h, w);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
    }
  }
  return out;
}

Image perspective(const Image& img, double strength, Rng& rng) {
  const double w = img.width, h = img.height;
  const std::array<std::array<double, 2>, 4> dst{{{0, 0}, {w, 0}, {w, h}, {0, h}}};
  auto src = dst;
  for (auto& p : src) {
    p[0] += uniform(rng, -strength, strength) * w;
    p[1] += uniform(rng, -strength, strength) * h;
  }
  const auto hm = homography(dst, src);
  Image out(img.channels, img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const double den = hm[6] * px + hm[7] * py + hm[8];
      const double sx = (hm[0] * px + hm[1] * py + hm[2]) / den - 0.5;
      const double sy = (hm[3] * px + hm[4] * py + hm[5]) / den - 0.5;
      for (int c = 0; c < img.channels; ++c) out.at(c, y, x) = sample_bilinear(img, c, sy, sx);
    }
  }
  return out;
}

void color_jitter(Image& img, const AugmentConfig& cfg, Rng& rng) {
  if (cfg.brightness > 0) {
    const auto f = static_cast<float>(1.0 + uniform(rng, -cfg.brightness, cfg.brightness));
    for (float& v : img.pixels) v *= f;
  }
  if (cfg.contrast > 0) {
    const auto f = static_cast<float>(1.0 + uniform(rng, -cfg.contrast, cfg.contrast));
    double mean = 0;
    for (float v : img.pixels) mean += v;
    const auto m = static_cast<float>(mean / static_cast<double>(img.pixels.size()));
    for (float& v : img.pixels) v = m + (v - m) * f;
  }
  if (cfg.saturation > 0 && img.channels == 3) {
    const auto f = static_cast<float>(1.0 + uniform(rng, -cfg.saturation, cfg.saturation));
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        const float gray = 0.299f * img.at(0, y, x) + 0.587f * img.at(1, y, x) +
                           0.114f * img.at(2, y, x);
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = gray + (img.at(c, y, x) - gray) * f;
      }
    }
  }
}

}  // namespace

Image augment(const Image& image, const AugmentConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  Image out = image;
  if (config.crop_prob > 0 && uniform01(rng) < config.crop_prob) out = random_crop(out, config, rng);
  if (config.scale_min != 1.0 || config.scale_max != 1.0) {
    const double s = uniform(rng, config.scale_min, config.scale_max);
    const int h = std::max(1, static_cast<int>(std::lround(image.height * s)));
    const int w = std::max(1, static_cast<int>(std::lround(image.width * s)));
    out = resize_bilinear(out, h, w);
  } else if (out.width != image.width || out.height != image.height) {
    out = resize_bilinear(out, image.height, image.width);
  }
  if (config.perspective_prob > 0 && config.perspective_strength > 0 &&
      uniform01(rng) < config.perspective_prob) {
    out = perspective(out, config.perspective_strength, rng);
  }
  if (config.jitter_prob > 0 && uniform01(rng) < config.jitter_prob) color_jitter(out, config, rng);
  for (float& v : out.pixels) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

}  // namespace mambaeye
