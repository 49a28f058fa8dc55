#include "mambaeye/dataset.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "mambaeye/rng.hpp"

namespace mambaeye {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv_mix(std::uint64_t& h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xffu;
    h *= kFnvPrime;
  }
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool is_png(const fs::path& p) { return lower(p.extension().string()) == ".png"; }

std::vector<fs::path> sorted_entries(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

void load_cifar_file(const fs::path& file, int num_classes, Dataset& out) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + file.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  const std::size_t full = bytes.size() / kCifarRecordBytes;
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw DatasetError("malformed record at byte offset " +
                       std::to_string(full * kCifarRecordBytes) + " in " + file.string() +
                       ": truncated to " + std::to_string(bytes.size() % kCifarRecordBytes) +
                       " of " + std::to_string(kCifarRecordBytes) + " bytes");
  }
  constexpr int kPlane = kCifarSide * kCifarSide;
  for (std::size_t r = 0; r < full; ++r) {
    const std::size_t off = r * kCifarRecordBytes;
    const int label = bytes[off];
    if (label >= num_classes) {
      throw DatasetError("label " + std::to_string(label) + " out of range [0, " +
                         std::to_string(num_classes) + ") at byte offset " + std::to_string(off) +
                         " in " + file.string());
    }
    LabeledImage s{Image(3, kCifarSide, kCifarSide), label};
    for (int i = 0; i < 3 * kPlane; ++i) s.image.pixels[i] = bytes[off + 1 + i] / 255.0f;
    out.samples.push_back(std::move(s));
  }
}

}  // namespace

std::uint64_t Dataset::content_hash() const {
  std::uint64_t h = kFnvOffset;
  fnv_mix(h, samples.size());
  fnv_mix(h, static_cast<std::uint64_t>(num_classes));
  for (const auto& s : samples) {
    fnv_mix(h, static_cast<std::uint64_t>(s.label));
    fnv_mix(h, (static_cast<std::uint64_t>(s.image.channels) << 40) ^
                   (static_cast<std::uint64_t>(s.image.height) << 20) ^
                   static_cast<std::uint64_t>(s.image.width));
    for (float v : s.image.pixels) {
      h ^= static_cast<std::uint64_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 65535.0f));
      h *= kFnvPrime;
    }
  }
  return h;
}

DatasetFormat parse_dataset_format(std::string_view name) {
  if (name == "cifar10-binary" || name == "raw-cifar10-binary") return DatasetFormat::Cifar10Binary;
  if (name == "image-folder") return DatasetFormat::ImageFolder;
  throw DatasetError("unrecognized dataset format '" + std::string(name) + "'");
}

std::string to_string(DatasetFormat format) {
  return format == DatasetFormat::Cifar10Binary ? "cifar10-binary" : "image-folder";
}

Dataset load_cifar10_binary(const fs::path& path, int num_classes) {
  if (!fs::exists(path)) throw DatasetError("dataset path does not exist: " + path.string());
  Dataset out;
  out.num_classes = num_classes;
  for (int c = 0; c < num_classes; ++c) out.class_names.push_back(std::to_string(c));
  if (fs::is_directory(path)) {
    for (const auto& p : sorted_entries(path)) {
      if (fs::is_regular_file(p) && lower(p.extension().string()) == ".bin") {
        load_cifar_file(p, num_classes, out);
      }
    }
  } else {
    load_cifar_file(path, num_classes, out);
  }
  if (out.samples.empty()) throw DatasetError("no samples found in " + path.string());
  return out;
}

Dataset load_image_folder(const fs::path& root, int num_classes) {
  if (!fs::is_directory(root)) throw DatasetError("dataset path is not a directory: " + root.string());
  Dataset out;
  for (const auto& dir : sorted_entries(root)) {
    if (!fs::is_directory(dir)) continue;
    std::vector<fs::path> files;
    for (const auto& f : sorted_entries(dir)) {
      if (fs::is_regular_file(f) && is_png(f)) files.push_back(f);
    }
    if (files.empty()) continue;
    const int label = static_cast<int>(out.class_names.size());
    out.class_names.push_back(dir.filename().string());
    for (const auto& f : files) out.samples.push_back({read_png(f), label});
  }
  if (!out.samples.empty()) {
    out.num_classes = static_cast<int>(out.class_names.size());
    return out;
  }

  const fs::path csv = root / "labels.csv";
  if (fs::exists(csv)) {
    std::ifstream in(csv);
    std::string line;
    int max_label = -1;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto comma = line.rfind(',');
      if (comma == std::string::npos) {
        throw DatasetError("malformed line " + std::to_string(line_no) + " in " + csv.string());
      }
      const std::string name = line.substr(0, comma);
      const std::string label_text = line.substr(comma + 1);
      int label = 0;
      const auto [ptr, ec] =
          std::from_chars(label_text.data(), label_text.data() + label_text.size(), label);
      if (ec != std::errc() || ptr != label_text.data() + label_text.size()) {
        if (line_no == 1) continue;  // header
        throw DatasetError("malformed label on line " + std::to_string(line_no) + " in " +
                           csv.string());
      }
      if (label < 0 || (num_classes > 0 && label >= num_classes)) {
        throw DatasetError("label " + std::to_string(label) + " out of range on line " +
                           std::to_string(line_no) + " in " + csv.string());
      }
      max_label = std::max(max_label, label);
      out.samples.push_back({read_png(root / name), label});
    }
    out.num_classes = num_classes > 0 ? num_classes : max_label + 1;
    for (int c = 0; c < out.num_classes; ++c) out.class_names.push_back(std::to_string(c));
  }
  if (out.samples.empty()) throw DatasetError("no samples found in " + root.string());
  return out;
}

Dataset load_dataset(const fs::path& path, DatasetFormat format, int num_classes) {
  switch (format) {
    case DatasetFormat::Cifar10Binary:
      return load_cifar10_binary(path, num_classes);
    case DatasetFormat::ImageFolder:
      return load_image_folder(path, 0);
  }
  throw DatasetError("unrecognized dataset format");
}

void write_cifar10_binary(const Dataset& data, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write " + path.string());
  std::vector<unsigned char> record(kCifarRecordBytes);
  for (const auto& s : data.samples) {
    if (s.image.channels != 3 || s.image.height != kCifarSide || s.image.width != kCifarSide) {
      throw DatasetError("CIFAR-10 binary records must be 3x32x32");
    }
    if (s.label < 0 || s.label > 255) throw DatasetError("label does not fit in one byte");
    record[0] = static_cast<unsigned char>(s.label);
    for (std::size_t i = 0; i < s.image.pixels.size(); ++i) {
      record[1 + i] = static_cast<unsigned char>(
          std::lround(std::clamp(s.image.pixels[i], 0.0f, 1.0f) * 255.0f));
    }
    out.write(reinterpret_cast<const char*>(record.data()),
              static_cast<std::streamsize>(record.size()));
  }
}

namespace {

struct ShapeParams {
  double cx, cy, r, thickness, cell, phase;
  bool flip;
};

bool shape_mask(int label, const ShapeParams& s, double px, double py) {
  const double dx = px - s.cx;
  const double dy = (s.flip ? -1.0 : 1.0) * (py - s.cy);
  const double half = s.thickness / 2.0;
  const double sq = 0.85 * s.r;
  switch (label) {
    case 0:  // disk
      return dx * dx + dy * dy <= s.r * s.r;
    case 1:  // square
      return std::abs(dx) <= sq && std::abs(dy) <= sq;
    case 2:  // triangle
      return dy <= 0.8 * s.r && dy >= -s.r && std::abs(dx) <= (dy + s.r) / 1.8;
    case 3: {  // ring
      const double d = std::sqrt(dx * dx + dy * dy);
      return d <= s.r && d >= s.r - s.thickness;
    }
    case 4: {  // square outline
      const bool outer = std::abs(dx) <= sq && std::abs(dy) <= sq;
      const bool inner = std::abs(dx) <= sq - s.thickness && std::abs(dy) <= sq - s.thickness;
      return outer && !inner;
    }
    case 5:  // plus
      return (std::abs(dx) <= half && std::abs(dy) <= s.r) ||
             (std::abs(dy) <= half && std::abs(dx) <= s.r);
    case 6: {  // diagonal cross
      const double lim = 0.75 * s.r;
      if (std::abs(dx) > lim || std::abs(dy) > lim) return false;
      return std::abs(dx - dy) / std::numbers::sqrt2 <= half ||
             std::abs(dx + dy) / std::numbers::sqrt2 <= half;
    }
    case 7:  // horizontal stripes
      return static_cast<long>(std::floor((py + s.phase) / s.cell)) % 2 == 0;
    case 8:  // vertical stripes
      return static_cast<long>(std::floor((px + s.phase) / s.cell)) % 2 == 0;
    case 9:  // checkerboard
      return (static_cast<long>(std::floor((px + s.phase) / s.cell)) +
              static_cast<long>(std::floor((py + s.phase) / s.cell))) %
                 2 ==
             0;
    default:
      return false;
  }
}

Image draw_sample(int label, int side, Rng& rng, bool bars_only) {
  std::array<float, 3> bg{}, fg{};
  const bool inverted = uniform01(rng) < 0.5;
  for (int c = 0; c < 3; ++c) {
    bg[c] = static_cast<float>(uniform(rng, 0.0, 0.4));
    fg[c] = static_cast<float>(uniform(rng, 0.6, 1.0));
  }
  if (inverted) std::swap(bg, fg);
  ShapeParams s{};
  s.cx = side * (0.5 + uniform(rng, -0.15, 0.15));
  s.cy = side * (0.5 + uniform(rng, -0.15, 0.15));
  s.r = side * uniform(rng, 0.22, 0.38);
  s.thickness = std::max(2.0, s.r * uniform(rng, 0.25, 0.4));
  s.cell = uniform(rng, 2.0, 4.0);
  s.phase = uniform(rng, 0.0, 8.0);
  s.flip = uniform01(rng) < 0.5;
  const double noise = 0.08;
  const int shape_label = bars_only ? (label == 0 ? 7 : 8) : label;
  Image img(3, side, side);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const bool inside = shape_mask(shape_label, s, x + 0.5, y + 0.5);
      for (int c = 0; c < 3; ++c) {
        const double v = (inside ? fg[c] : bg[c]) + uniform(rng, -noise, noise);
        img.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return img;
}

Dataset make_synthetic(std::size_t count, int side, std::uint64_t seed, bool bars_only) {
  Dataset d;
  if (bars_only) {
    d.num_classes = 2;
    d.class_names = {"horizontal-bars", "vertical-bars"};
  } else {
    d.num_classes = 10;
    d.class_names = {"disk",  "square",    "triangle",   "ring",        "square-outline",
                     "plus",  "diagonal-cross", "h-stripes", "v-stripes", "checkerboard"};
  }
  d.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(d.num_classes));
    Rng rng(derive_seed(seed, {i}));
    d.samples.push_back({draw_sample(label, side, rng, bars_only), label});
  }
  return d;
}

}  // namespace

Dataset make_synthetic_shapes(std::size_t count, int side, std::uint64_t seed) {
  return make_synthetic(count, side, seed, false);
}

Dataset make_synthetic_bars(std::size_t count, int side, std::uint64_t seed) {
  return make_synthetic(count, side, seed, true);
}

}  // namespace mambaeye
