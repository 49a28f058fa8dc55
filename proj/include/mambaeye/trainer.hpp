#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mambaeye/config.hpp"
#include "mambaeye/model.hpp"

namespace mambaeye {

/// Linear warmup from 0 to `peak` over `warmup` updates, then cosine decay to
/// 0 at `total`. lr_at(0) = 0, lr_at(warmup) = peak, lr_at(total) = 0.
double lr_at(long step, long total, long warmup, double peak);

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Decoupled weight decay Adam over a fixed list of float tensors.
class AdamW {
 public:
  AdamW(std::vector<Tensor<float>*> params, AdamWOptions options,
        std::vector<bool> decay_mask = {});

  /// Applies one update with learning rate `lr`. When any gradient is
  /// non-finite the update is skipped and false is returned.
  bool step(const std::vector<Tensor<float>>& grads, double lr);

  long steps_taken() const { return t_; }
  std::vector<Tensor<float>>& first_moments() { return m_; }
  std::vector<Tensor<float>>& second_moments() { return v_; }
  void set_steps_taken(long t) { t_ = t; }

 private:
  std::vector<Tensor<float>*> params_;
  AdamWOptions opt_;
  std::vector<bool> decay_;
  std::vector<Tensor<float>> m_;
  std::vector<Tensor<float>> v_;
  long t_ = 0;
};

struct EpochMetrics {
  int epoch = 0;
  std::string split;
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Formats one `epoch,split,loss,acc@T` CSV row.
std::string metrics_row(const EpochMetrics& m);
inline constexpr const char* kMetricsHeader = "epoch,split,loss,acc@T";

struct TrainOptions {
  /// Continue from `<out>/last` when it exists.
  bool resume = false;
  /// Stop after this many completed epochs (for staged runs); -1: run all.
  int stop_after_epoch = -1;
  std::ostream* log = nullptr;
};

struct TrainResult {
  std::vector<EpochMetrics> metrics;
  int skipped_updates = 0;
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
};

/// Per-sample pieces shared by training and the held-out pass.
struct SampleBatchItem {
  Tensor<float> inputs;
  Tensor<float> targets;
  int label = 0;
};

/// Builds the training input for one sample: augmentation, a random canvas and
/// a trajectory, all seeded from `seed`.
SampleBatchItem make_train_item(const LabeledImage& sample, const TrainConfig& cfg,
                                std::uint64_t seed);

/// Mean loss and final-step accuracy over a split; inputs use an eval canvas
/// at cfg.eval_resolution and a random-image trajectory of cfg.eval_steps.
EpochMetrics evaluate_split(const GlimpseModel<float>& model, const Dataset& data,
                            const TrainConfig& cfg, int epoch, const std::string& split);

/// Sum of per-sample gradients in sample order; returns the summed loss.
double accumulate_gradients(const GlimpseModel<float>& model, std::span<const SampleBatchItem> items,
                            std::vector<Tensor<float>>& grads, int* correct = nullptr);

/// Full training run writing metrics.csv, run_manifest.json and the `last`
/// and `best` checkpoints into `out_dir`.
TrainResult train(const TrainConfig& cfg, const std::filesystem::path& out_dir,
                  const TrainOptions& options = {});

/// Version string recorded in manifests.
std::string code_version();

}  // namespace mambaeye
