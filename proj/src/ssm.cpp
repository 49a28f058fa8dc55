#include "mambaeye/ssm.hpp"

#include <algorithm>
#include <cmath>

#include "mambaeye/kernels.hpp"
#include "mambaeye/ops.hpp"

namespace mambaeye {

void BackboneConfig::validate() const {
  if (layers < 1) throw std::invalid_argument("backbone needs at least one layer");
  if (d_model < 1 || expand < 1 || d_state < 1 || head_dim < 1 || conv_width < 1 || chunk < 1) {
    throw std::invalid_argument("backbone dimensions must be positive");
  }
  if (d_inner() % head_dim != 0) {
    throw std::invalid_argument("d_inner " + std::to_string(d_inner()) +
                                " is not a multiple of head_dim " + std::to_string(head_dim));
  }
}

namespace {

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
T softplus(T x) {
  return x > T(20) ? x : std::log1p(std::exp(x));
}

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

}  // namespace

template <typename T>
SsmBlockParams<T> SsmBlockParams<T>::zeros(const BackboneConfig& cfg) {
  cfg.validate();
  SsmBlockParams p;
  p.norm_weight = Tensor<T>({sz(cfg.d_model)}, T(1));
  p.in_proj = Tensor<T>({sz(cfg.d_model), sz(cfg.in_proj_dim())});
  p.conv_weight = Tensor<T>({sz(cfg.conv_dim()), sz(cfg.conv_width)});
  p.conv_bias = Tensor<T>({sz(cfg.conv_dim())});
  p.dt_bias = Tensor<T>({sz(cfg.heads())});
  p.a_log = Tensor<T>({sz(cfg.heads())});
  p.d_skip = Tensor<T>({sz(cfg.heads())}, T(1));
  p.gate_norm_weight = Tensor<T>({sz(cfg.d_inner())}, T(1));
  p.out_proj = Tensor<T>({sz(cfg.d_inner()), sz(cfg.d_model)});
  return p;
}

template <typename T>
SsmBlockParams<T> SsmBlockParams<T>::initialized(const BackboneConfig& cfg, Rng& rng) {
  SsmBlockParams p = zeros(cfg);
  init::truncated_normal(p.in_proj, 0.02, rng);
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.conv_width));
  init::uniform(p.conv_weight, -bound, bound, rng);
  init::uniform(p.conv_bias, -bound, bound, rng);
  for (T& b : p.dt_bias.vec()) {
    const double dt = std::max(1e-4, std::exp(uniform(rng, std::log(1e-3), std::log(0.1))));
    b = static_cast<T>(dt + std::log(-std::expm1(-dt)));
  }
  for (T& a : p.a_log.vec()) a = static_cast<T>(std::log(uniform(rng, 1.0, 16.0)));
  init::truncated_normal(p.out_proj, 0.02, rng);
  return p;
}

template <typename T>
void SsmBlockParams<T>::append_to(std::vector<NamedParam<T>>& out, const std::string& prefix) {
  out.push_back({prefix + "norm_weight", &norm_weight});
  out.push_back({prefix + "in_proj", &in_proj});
  out.push_back({prefix + "conv_weight", &conv_weight});
  out.push_back({prefix + "conv_bias", &conv_bias});
  out.push_back({prefix + "dt_bias", &dt_bias});
  out.push_back({prefix + "a_log", &a_log});
  out.push_back({prefix + "d_skip", &d_skip});
  out.push_back({prefix + "gate_norm_weight", &gate_norm_weight});
  out.push_back({prefix + "out_proj", &out_proj});
}

template <typename T>
void SsmBlockParams<T>::append_to(std::vector<ConstNamedParam<T>>& out,
                                  const std::string& prefix) const {
  std::vector<NamedParam<T>> tmp;
  const_cast<SsmBlockParams*>(this)->append_to(tmp, prefix);
  for (auto& p : tmp) out.push_back({std::move(p.name), p.tensor});
}

template <typename T>
SsmBlockVars bind_block(Tape<T>& tape, const SsmBlockParams<T>& p, bool requires_grad) {
  SsmBlockVars v;
  v.norm_weight = tape.leaf(p.norm_weight, requires_grad);
  v.in_proj = tape.leaf(p.in_proj, requires_grad);
  v.conv_weight = tape.leaf(p.conv_weight, requires_grad);
  v.conv_bias = tape.leaf(p.conv_bias, requires_grad);
  v.dt_bias = tape.leaf(p.dt_bias, requires_grad);
  v.a_log = tape.leaf(p.a_log, requires_grad);
  v.d_skip = tape.leaf(p.d_skip, requires_grad);
  v.gate_norm_weight = tape.leaf(p.gate_norm_weight, requires_grad);
  v.out_proj = tape.leaf(p.out_proj, requires_grad);
  return v;
}

template <typename T>
Var block_forward_parallel(Tape<T>& tape, Var z, const SsmBlockVars& p,
                           const BackboneConfig& cfg, int layer) {
  if (tape.value(z).cols() != sz(cfg.d_model)) {
    throw ShapeError("block input " + shape_str(tape.shape(z)) + " does not match d_model " +
                     std::to_string(cfg.d_model));
  }
  const std::size_t di = sz(cfg.d_inner());
  const std::size_t ns = sz(cfg.d_state);
  const std::size_t cd = sz(cfg.conv_dim());
  const std::size_t heads = sz(cfg.heads());

  Var normed = ops::rms_norm(tape, z, p.norm_weight, cfg.norm_eps);
  Var proj = ops::matmul(tape, normed, p.in_proj);
  Var gate = ops::slice_cols(tape, proj, 0, di);
  Var xbc = ops::slice_cols(tape, proj, di, di + cd);
  Var dt_raw = ops::slice_cols(tape, proj, di + cd, di + cd + heads);

  Var xbc_act = ops::silu(tape, ops::conv1d_causal(tape, xbc, p.conv_weight, p.conv_bias));
  Var x = ops::slice_cols(tape, xbc_act, 0, di);
  Var b = ops::slice_cols(tape, xbc_act, di, di + ns);
  Var c = ops::slice_cols(tape, xbc_act, di + ns, di + 2 * ns);

  Var dt = ops::softplus(tape, ops::add_row(tape, dt_raw, p.dt_bias));
  Var a = ops::neg(tape, ops::exp(tape, p.a_log));
  Var decay = ops::exp(tape, ops::mul_row(tape, dt, a));
  Var xdt = ops::mul_heads(tape, x, dt);
  Var y = ops::selective_scan(tape, decay, xdt, b, c, sz(cfg.chunk));
  y = ops::add(tape, y, ops::mul_heads(tape, x, p.d_skip));

  Var gated = ops::mul(tape, y, ops::silu(tape, gate));
  Var mixed = ops::matmul(tape, ops::rms_norm(tape, gated, p.gate_norm_weight, cfg.norm_eps),
                          p.out_proj);
  Var out = ops::add(tape, z, mixed);
  if (!tape.value(out).all_finite()) throw NonFiniteError(layer, "parallel forward");
  return out;
}

template <typename T>
Tensor<T> block_forward_parallel(const Tensor<T>& z, const SsmBlockParams<T>& p,
                                 const BackboneConfig& cfg, int layer) {
  Tape<T> tape;
  const SsmBlockVars vars = bind_block(tape, p, false);
  Var in = tape.constant(z);
  return tape.value(block_forward_parallel(tape, in, vars, cfg, layer));
}

template <typename T>
SsmLayerState<T> SsmLayerState<T>::zeros(const BackboneConfig& cfg) {
  SsmLayerState s;
  s.conv_tail = Tensor<T>({sz(std::max(cfg.conv_width - 1, 0)), sz(cfg.conv_dim())});
  s.h = Tensor<T>({sz(cfg.heads()), sz(cfg.head_dim), sz(cfg.d_state)});
  return s;
}

template <typename T>
StepWorkspace<T>::StepWorkspace(const BackboneConfig& cfg)
    : normed(sz(cfg.d_model)),
      proj(sz(cfg.in_proj_dim())),
      conv_out(sz(cfg.conv_dim())),
      decay(sz(cfg.heads())),
      xdt(sz(cfg.d_inner())),
      y(sz(cfg.d_inner())),
      gated(sz(cfg.d_inner())),
      out(sz(cfg.d_model)) {}

template <typename T>
void block_step_recurrent(std::span<T> z, SsmLayerState<T>& state, const SsmBlockParams<T>& p,
                          const BackboneConfig& cfg, StepWorkspace<T>& ws, int layer) {
  const std::size_t dm = sz(cfg.d_model);
  const std::size_t di = sz(cfg.d_inner());
  const std::size_t ns = sz(cfg.d_state);
  const std::size_t cd = sz(cfg.conv_dim());
  const std::size_t heads = sz(cfg.heads());
  const std::size_t hd = sz(cfg.head_dim);
  const std::size_t width = sz(cfg.conv_width);
  const std::size_t ip = sz(cfg.in_proj_dim());
  if (z.size() != dm || state.h.size() != heads * hd * ns ||
      state.conv_tail.size() != (width - 1) * cd) {
    throw ShapeError("recurrent step: state or input does not match the backbone config");
  }

  kernels::rms_norm(z.data(), p.norm_weight.data(), ws.normed.data(), static_cast<T*>(nullptr),
                    1, dm, cfg.norm_eps);
  kernels::matmul(ws.normed.data(), p.in_proj.data(), ws.proj.data(), 1, dm, ip);
  const T* gate = ws.proj.data();
  const T* xbc = ws.proj.data() + di;
  const T* dt_raw = ws.proj.data() + di + cd;

  // Conv over [tail rows..., current input], then shift the tail.
  T* tail = state.conv_tail.data();
  for (std::size_t ch = 0; ch < cd; ++ch) {
    T acc = p.conv_bias[ch];
    for (std::size_t j = 0; j + 1 < width; ++j) acc += p.conv_weight[ch * width + j] * tail[j * cd + ch];
    acc += p.conv_weight[ch * width + width - 1] * xbc[ch];
    ws.conv_out[ch] = acc * sigmoid(acc);
  }
  if (width > 1) {
    std::copy(tail + cd, tail + (width - 1) * cd, tail);
    std::copy(xbc, xbc + cd, tail + (width - 2) * cd);
  }
  const T* x = ws.conv_out.data();
  const T* b = x + di;
  const T* c = x + di + ns;

  for (std::size_t h = 0; h < heads; ++h) {
    const T dt = softplus(dt_raw[h] + p.dt_bias[h]);
    ws.decay[h] = std::exp(dt * -std::exp(p.a_log[h]));
    for (std::size_t q = 0; q < hd; ++q) ws.xdt[h * hd + q] = x[h * hd + q] * dt;
  }
  kernels::scan_step(heads, hd, ns, ws.decay.data(), ws.xdt.data(), b, c, state.h.data(),
                     ws.y.data());
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t q = 0; q < hd; ++q) {
      const std::size_t i = h * hd + q;
      const T y = ws.y[i] + p.d_skip[h] * x[i];
      ws.gated[i] = y * (gate[i] * sigmoid(gate[i]));
    }
  }
  kernels::rms_norm(ws.gated.data(), p.gate_norm_weight.data(), ws.y.data(),
                    static_cast<T*>(nullptr), 1, di, cfg.norm_eps);
  kernels::matmul(ws.y.data(), p.out_proj.data(), ws.out.data(), 1, di, dm);
  for (std::size_t i = 0; i < dm; ++i) {
    z[i] += ws.out[i];
    if (!std::isfinite(z[i])) throw NonFiniteError(layer, "recurrent step");
  }
}

#define MAMBAEYE_SSM_INSTANTIATE(T)                                                           \
  template struct SsmBlockParams<T>;                                                          \
  template struct SsmLayerState<T>;                                                           \
  template struct StepWorkspace<T>;                                                           \
  template SsmBlockVars bind_block<T>(Tape<T>&, const SsmBlockParams<T>&, bool);              \
  template Var block_forward_parallel<T>(Tape<T>&, Var, const SsmBlockVars&,                  \
                                         const BackboneConfig&, int);                         \
  template Tensor<T> block_forward_parallel<T>(const Tensor<T>&, const SsmBlockParams<T>&,    \
                                               const BackboneConfig&, int);                   \
  template void block_step_recurrent<T>(std::span<T>, SsmLayerState<T>&,                      \
                                        const SsmBlockParams<T>&, const BackboneConfig&,      \
                                        StepWorkspace<T>&, int);

MAMBAEYE_SSM_INSTANTIATE(float)
MAMBAEYE_SSM_INSTANTIATE(double)

#undef MAMBAEYE_SSM_INSTANTIATE

}  // namespace mambaeye
