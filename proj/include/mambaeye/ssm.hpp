#pragma once

// Mamba2-style selective state-space block with two execution modes that
// compute the same function: a parallel form over a whole sequence (chunked
// scan, differentiable through a Tape) and a one-token recurrent form whose
// carried state has a fixed size.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mambaeye/autograd.hpp"
#include "mambaeye/params.hpp"
#include "mambaeye/rng.hpp"
#include "mambaeye/tensor.hpp"

namespace mambaeye {

struct BackboneConfig {
  int layers = 12;
  int d_model = 256;
  int expand = 2;
  int d_state = 64;
  int head_dim = 64;
  int conv_width = 4;
  int chunk = 64;
  double norm_eps = 1e-5;

  int d_inner() const { return expand * d_model; }
  int heads() const { return d_inner() / head_dim; }
  int conv_dim() const { return d_inner() + 2 * d_state; }
  int in_proj_dim() const { return 2 * d_inner() + 2 * d_state + heads(); }

  void validate() const;
};

/// Raised when a forward pass produces NaN/Inf; names the offending layer.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(int layer, const std::string& where)
      : std::runtime_error("non-finite activations in layer " + std::to_string(layer) + " (" +
                           where + ")"),
        layer_(layer) {}
  int layer() const { return layer_; }

 private:
  int layer_;
};

template <typename T>
struct SsmBlockParams {
  Tensor<T> norm_weight;       // d_model
  Tensor<T> in_proj;           // d_model x in_proj_dim: [gate | x B C | dt]
  Tensor<T> conv_weight;       // conv_dim x conv_width
  Tensor<T> conv_bias;         // conv_dim
  Tensor<T> dt_bias;           // heads
  Tensor<T> a_log;             // heads, A = -exp(a_log)
  Tensor<T> d_skip;            // heads
  Tensor<T> gate_norm_weight;  // d_inner
  Tensor<T> out_proj;          // d_inner x d_model

  static SsmBlockParams zeros(const BackboneConfig& cfg);
  /// Mamba2 conventions: projections truncated-normal(0.02), dt in [1e-3, 0.1]
  /// log-uniform through an inverse-softplus bias, A in [1, 16], D = 1.
  static SsmBlockParams initialized(const BackboneConfig& cfg, Rng& rng);

  void append_to(std::vector<NamedParam<T>>& out, const std::string& prefix);
  void append_to(std::vector<ConstNamedParam<T>>& out, const std::string& prefix) const;
};

/// Tape handles for one block's parameters.
struct SsmBlockVars {
  Var norm_weight, in_proj, conv_weight, conv_bias, dt_bias, a_log, d_skip, gate_norm_weight,
      out_proj;
};

template <typename T>
SsmBlockVars bind_block(Tape<T>& tape, const SsmBlockParams<T>& p, bool requires_grad);

/// Z_out = Z_in + mixer(RMSNorm(Z_in)) for a steps x d_model input.
template <typename T>
Var block_forward_parallel(Tape<T>& tape, Var z, const SsmBlockVars& p,
                           const BackboneConfig& cfg, int layer);

template <typename T>
Tensor<T> block_forward_parallel(const Tensor<T>& z, const SsmBlockParams<T>& p,
                                 const BackboneConfig& cfg, int layer = 0);

/// Per-layer recurrent carry: the last conv_width-1 conv inputs and the scan
/// state. Its size is fixed by the config.
template <typename T>
struct SsmLayerState {
  Tensor<T> conv_tail;  // (conv_width - 1) x conv_dim, oldest first
  Tensor<T> h;          // heads x head_dim x d_state

  static SsmLayerState zeros(const BackboneConfig& cfg);
  std::size_t byte_size() const { return conv_tail.byte_size() + h.byte_size(); }
};

/// Scratch buffers for block_step_recurrent, sized once per config.
template <typename T>
struct StepWorkspace {
  std::vector<T> normed, proj, conv_out, decay, xdt, y, gated, out;

  explicit StepWorkspace(const BackboneConfig& cfg);
};

/// One token through the block in place on `z` (length d_model).
template <typename T>
void block_step_recurrent(std::span<T> z, SsmLayerState<T>& state, const SsmBlockParams<T>& p,
                          const BackboneConfig& cfg, StepWorkspace<T>& ws, int layer = 0);

}  // namespace mambaeye
