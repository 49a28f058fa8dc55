#pragma once

// Run configuration. Files are INI-style:
//
//   [model]   preset = micro-4
//   [data]    source = synthetic-shapes | cifar10-binary | image-folder
//             root = ...   (overridden by $MAMBAEYE_DATA_ROOT when set)
//   [train]   epochs = 30
//             ...
//
// Unknown keys are rejected so that typos do not silently fall back to
// defaults.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mambaeye/dataset.hpp"
#include "mambaeye/losses.hpp"
#include "mambaeye/model.hpp"
#include "mambaeye/patchio.hpp"

namespace mambaeye {

inline constexpr const char* kDataRootEnv = "MAMBAEYE_DATA_ROOT";

struct DataConfig {
  std::string source = "synthetic-shapes";
  std::string root;
  /// Paths relative to root (file or directory); unused for synthetic sources.
  std::string train_path = "train";
  std::string test_path = "test";
  int num_classes = 10;
  std::size_t train_samples = 1000;
  std::size_t test_samples = 500;
  int image_side = 32;
  std::uint64_t seed = 1;
};

struct OptimConfig {
  double lr = 1e-3;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double warmup_epochs = 1.0;
  /// Fine-tuning: constant learning rate, no warmup.
  bool constant_lr = false;
};

struct TrainConfig {
  ModelConfig model = ModelConfig::preset("micro-4");
  DataConfig data;
  OptimConfig optim;
  AugmentConfig augment;
  int canvas_min = 32;
  int canvas_max = 64;
  int epochs = 30;
  int steps = 256;
  int batch_size = 16;
  int accum_steps = 1;
  LossMode loss = LossMode::Scheduled;
  ScanKind policy = ScanKind::RandomMixed;
  std::uint64_t seed = 0;
  /// Held-out evaluation after each epoch.
  int eval_steps = 256;
  int eval_resolution = 32;
  std::size_t eval_samples = 0;  // 0: whole test split
  /// Optional checkpoint to start from (fine-tuning).
  std::string init_checkpoint;

  void validate() const;
};

TrainConfig load_train_config(const std::filesystem::path& path);
TrainConfig parse_train_config(const std::string& ini_text);
/// Canonical INI text; parse_train_config(to_ini(c)) reproduces c.
std::string to_ini(const TrainConfig& c);

/// Data root after applying the environment override.
std::filesystem::path resolve_data_root(const DataConfig& d);

struct DataSplits {
  Dataset train;
  Dataset test;
};

DataSplits load_splits(const DataConfig& d);

}  // namespace mambaeye
