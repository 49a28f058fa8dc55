#pragma once

// Canvas construction, patch sampling and information-ratio tracking.
// Coordinates are patch top-left corners in canvas pixels; moves are signed
// pixel deltas between consecutive top-left corners.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mambaeye/image.hpp"
#include "mambaeye/rng.hpp"

namespace mambaeye {

struct Rect {
  int x0 = 0;
  int y0 = 0;
  int w = 0;
  int h = 0;

  long area() const { return static_cast<long>(w) * h; }
  bool contains(const Rect& o) const {
    return o.x0 >= x0 && o.y0 >= y0 && o.x0 + o.w <= x0 + w && o.y0 + o.h <= y0 + h;
  }
  friend bool operator==(const Rect&, const Rect&) = default;
};

Rect intersect(const Rect& a, const Rect& b);

/// Zero-padded frame with the (possibly resized) image pasted at `image_region`.
struct Canvas {
  Image pixels;
  Rect image_region;

  int width() const { return pixels.width; }
  int height() const { return pixels.height; }
};

/// Square canvas with side drawn uniformly from [min_side, max_side]; the image
/// is pasted centred and unresized. A larger image enlarges the canvas to fit.
Canvas make_train_canvas(const Image& image, int min_side, int max_side, Rng& rng);

/// Resizes so the long side equals `target_side` (aspect preserved, bilinear)
/// and pastes it centred on a target_side x target_side canvas.
Canvas make_eval_canvas(const Image& image, int target_side);

/// Exact per-pixel union of patch footprints over the image region.
class CoverageMap {
 public:
  explicit CoverageMap(Rect image_region);

  /// ORs in the footprint of `patch` clipped to the image region; returns r.
  double update(const Rect& patch);

  double ratio() const;
  long covered_count() const { return covered_; }
  bool covered(int x, int y) const;
  const Rect& region() const { return region_; }
  /// Recount of the bitmask (equals covered_count()).
  long popcount() const;

 private:
  Rect region_;
  std::size_t words_per_row_ = 0;
  std::vector<std::uint64_t> bits_;
  long covered_ = 0;
};

enum class ScanKind { RandomImage, RandomMixed, RasterHorizontal, ZigzagHorizontal };

ScanKind parse_scan_kind(std::string_view name);
std::string to_string(ScanKind kind);
bool is_deterministic(ScanKind kind);

struct ScanPolicy {
  ScanKind kind = ScanKind::RandomImage;
  std::uint64_t seed = 0;
};

struct GlimpseStep {
  std::vector<float> v;  // C*P*P, channel-major
  int dx = 0;
  int dy = 0;
  bool initial = false;  // first step: move embedding is the zero vector
  double r = 0.0;        // coverage after absorbing this patch
  int x = 0;
  int y = 0;
};

class TrajectoryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Streams glimpses one at a time; memory does not grow with the number of
/// steps taken. Deterministic scans cycle over the P-grid of the image region.
class TrajectoryCursor {
 public:
  TrajectoryCursor(const Canvas& canvas, ScanPolicy policy, int patch);

  /// Fills `out` (reusing its buffer) with the next glimpse.
  void next(GlimpseStep& out);
  GlimpseStep next();

  int grid_width() const { return grid_w_; }
  int grid_height() const { return grid_h_; }
  /// For random-mixed: whether this trajectory samples the whole canvas.
  bool samples_whole_canvas() const { return whole_canvas_; }

 private:
  void next_position(int& x, int& y);

  const Canvas* canvas_;
  ScanPolicy policy_;
  int patch_;
  Rng rng_;
  CoverageMap coverage_;
  bool whole_canvas_ = false;
  int grid_w_ = 0;
  int grid_h_ = 0;
  long step_ = 0;
  int prev_x_ = 0;
  int prev_y_ = 0;
};

std::vector<GlimpseStep> generate_trajectory(const Canvas& canvas, ScanPolicy policy, int steps,
                                             int patch);

/// Copies the patch with top-left (x, y) into `out` (C*P*P, channel-major).
void extract_patch(const Canvas& canvas, int x, int y, int patch, std::vector<float>& out);

struct AugmentConfig {
  double crop_prob = 0.0;
  double crop_min_area = 0.5;
  /// Output side scale relative to the input (random-resized-crop style).
  double scale_min = 1.0;
  double scale_max = 1.0;
  double perspective_prob = 0.0;
  double perspective_strength = 0.0;
  double jitter_prob = 0.0;
  double brightness = 0.0;
  double contrast = 0.0;
  double saturation = 0.0;

  static AugmentConfig none() { return {}; }
};

/// Random crop + rescale, perspective warp and colour jitter. Output keeps the
/// channel count and is clamped to [0, 1].
Image augment(const Image& image, const AugmentConfig& config, std::uint64_t seed);

}  // namespace mambaeye
