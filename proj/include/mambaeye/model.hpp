#pragma once

// Glimpse classifier: each step's input is a flattened patch concatenated with
// the embedding of the move that led to it, projected to d_model, passed
// through a stack of SSM blocks and read out by a linear head at every step.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mambaeye/autograd.hpp"
#include "mambaeye/move_embedding.hpp"
#include "mambaeye/params.hpp"
#include "mambaeye/patchio.hpp"
#include "mambaeye/rng.hpp"
#include "mambaeye/ssm.hpp"
#include "mambaeye/tensor.hpp"

namespace mambaeye {

struct ModelConfig {
  std::string name = "custom";
  int layers = 12;
  int d_model = 256;
  int patch = 16;
  int channels = 3;
  int num_classes = 10;
  int d_move_emb = 512;
  int d_state = 64;
  int head_dim = 64;
  int expand = 2;
  int conv_width = 4;
  int chunk = 64;

  int patch_dim() const { return channels * patch * patch; }
  int d_input() const { return patch_dim() + d_move_emb; }
  BackboneConfig backbone() const;
  MoveEmbeddingConfig move_embedding() const;
  void validate() const;

  /// tiny, small, base, micro-2, micro-4.
  static ModelConfig preset(std::string_view name);
  static std::vector<std::string> preset_names();

  /// key=value pairs, used by checkpoint manifests and run manifests.
  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& kv);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename T>
struct ModelParams {
  Tensor<T> proj_weight;  // d_input x d_model
  Tensor<T> proj_bias;    // d_model
  std::vector<SsmBlockParams<T>> blocks;
  Tensor<T> final_norm;   // d_model
  Tensor<T> head_weight;  // d_model x num_classes
  Tensor<T> head_bias;    // num_classes

  static ModelParams zeros(const ModelConfig& cfg);
  static ModelParams initialized(const ModelConfig& cfg, std::uint64_t seed);

  std::vector<NamedParam<T>> named();
  std::vector<ConstNamedParam<T>> named() const;
};

/// Per-step input rows (steps x d_input) built from a glimpse sequence.
template <typename T>
Tensor<T> build_inputs(const std::vector<GlimpseStep>& steps, const ModelConfig& cfg);

/// Writes one input row for a glimpse into `row` (length d_input).
template <typename T>
void build_input_row(const GlimpseStep& step, const ModelConfig& cfg, std::span<T> row);

struct ForwardVars {
  std::vector<Var> params;  // same order as ModelParams::named()
  Var logits;               // steps x num_classes
};

/// Fixed-size carry for streaming inference.
template <typename T>
struct RecurrentState {
  std::vector<SsmLayerState<T>> layers;
  StepWorkspace<T> ws;
  std::vector<T> hidden;
  std::vector<T> normed;
  std::vector<T> logits;

  explicit RecurrentState(const ModelConfig& cfg);
  void reset();
  std::size_t state_bytes() const;
};

template <typename T>
class GlimpseModel {
 public:
  GlimpseModel(ModelConfig cfg, ModelParams<T> params);
  static GlimpseModel initialized(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ModelParams<T>& params() { return params_; }
  const ModelParams<T>& params() const { return params_; }

  /// Parallel (chunked-scan) pass over a whole sequence recorded on `tape`.
  ForwardVars forward(Tape<T>& tape, const Tensor<T>& inputs, bool requires_grad) const;
  /// Same, without keeping gradients; returns steps x num_classes logits.
  Tensor<T> forward(const Tensor<T>& inputs) const;

  RecurrentState<T> make_state() const { return RecurrentState<T>(cfg_); }
  /// Consumes one input row and returns the logits for this step. The span
  /// aliases `state.logits`. No allocation happens here.
  std::span<const T> step(std::span<const T> input, RecurrentState<T>& state) const;

 private:
  ModelConfig cfg_;
  ModelParams<T> params_;
};

/// Index of the largest logit; ties go to the lowest index. `tied` reports
/// whether another class shared the maximum.
template <typename T>
int predict_class(std::span<const T> logits, bool* tied = nullptr) {
  int best = 0;
  bool tie = false;
  for (std::size_t k = 1; k < logits.size(); ++k) {
    if (logits[k] > logits[static_cast<std::size_t>(best)]) {
      best = static_cast<int>(k);
      tie = false;
    } else if (logits[k] == logits[static_cast<std::size_t>(best)]) {
      tie = true;
    }
  }
  if (tied != nullptr) *tied = tie;
  return best;
}

/// Closed-form forward FLOPs for `steps` glimpses: per-step cost times steps.
/// Multiply-adds count 2, elementwise ops count 1, transcendentals count 1.
double count_flops(const ModelConfig& cfg, long steps);
double flops_per_step(const ModelConfig& cfg);

/// Parameter count implied by the config.
std::size_t count_parameters(const ModelConfig& cfg);

inline constexpr int kCheckpointFormatVersion = 1;

/// A checkpoint directory holds `manifest.txt` (format version, model config,
/// free-form metadata and one `tensor <name> <dims...>` line per tensor) plus
/// one little-endian fp32 file per tensor.
struct Checkpoint {
  ModelConfig config;
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  const Tensor<float>* find(const std::string& name) const;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& dir);

/// Copies model parameters into / out of a checkpoint. Loading validates
/// every name and shape against the model config.
Checkpoint make_checkpoint(const GlimpseModel<float>& model,
                           std::map<std::string, std::string> meta = {});
GlimpseModel<float> load_model(const Checkpoint& ckpt);

}  // namespace mambaeye
