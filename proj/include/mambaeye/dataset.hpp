#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mambaeye/image.hpp"

namespace mambaeye {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LabeledImage {
  Image image;
  int label = 0;
};

struct Dataset {
  std::vector<LabeledImage> samples;
  int num_classes = 0;
  std::vector<std::string> class_names;

  std::size_t size() const { return samples.size(); }
  /// FNV-1a over labels and quantized pixels; recorded in run manifests.
  std::uint64_t content_hash() const;
};

enum class DatasetFormat { Cifar10Binary, ImageFolder };

DatasetFormat parse_dataset_format(std::string_view name);
std::string to_string(DatasetFormat format);

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr int kCifarSide = 32;

/// Reads one or more CIFAR-10 binary batch files (1 label byte + 3072 planar
/// RGB bytes per record). `path` may be a file or a directory of *.bin files.
Dataset load_cifar10_binary(const std::filesystem::path& path, int num_classes = 10);

/// `root/<class>/<name>.png`, or `root/labels.csv` (`filename,label`) when
/// there are no class subdirectories. Class indices follow sorted names.
/// A positive `num_classes` bounds the labels read from labels.csv.
Dataset load_image_folder(const std::filesystem::path& root, int num_classes = 0);

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                     int num_classes = 10);

void write_cifar10_binary(const Dataset& data, const std::filesystem::path& path);

/// Ten procedurally drawn shape/texture classes on noisy backgrounds.
Dataset make_synthetic_shapes(std::size_t count, int side, std::uint64_t seed);

/// Two classes (horizontal vs vertical bars); a minimal learnable set.
Dataset make_synthetic_bars(std::size_t count, int side, std::uint64_t seed);

}  // namespace mambaeye
