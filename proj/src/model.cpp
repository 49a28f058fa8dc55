#include "mambaeye/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "mambaeye/kernels.hpp"
#include "mambaeye/ops.hpp"

namespace mambaeye {

namespace {

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

template <typename T>
T gelu_value(T x) {
  return T(0.5) * x * std::erfc(-x / std::numbers::sqrt2_v<T>);
}

}  // namespace

BackboneConfig ModelConfig::backbone() const {
  BackboneConfig b;
  b.layers = layers;
  b.d_model = d_model;
  b.expand = expand;
  b.d_state = d_state;
  b.head_dim = head_dim;
  b.conv_width = conv_width;
  b.chunk = chunk;
  return b;
}

MoveEmbeddingConfig ModelConfig::move_embedding() const {
  return MoveEmbeddingConfig{d_move_emb, d_move_emb / 2, 10000.0};
}

void ModelConfig::validate() const {
  if (patch < 1 || channels < 1) throw std::invalid_argument("patch and channels must be positive");
  if (num_classes < 2) throw std::invalid_argument("num_classes must be at least 2");
  backbone().validate();
  move_embedding().validate();
}

ModelConfig ModelConfig::preset(std::string_view name) {
  ModelConfig c;
  c.name = std::string(name);
  if (name == "tiny") {
    c.layers = 12;
  } else if (name == "small") {
    c.layers = 24;
  } else if (name == "base") {
    c.layers = 48;
  } else if (name == "micro-2") {
    c.layers = 2;
    c.d_model = 64;
    c.patch = 4;
    c.d_move_emb = 32;
    c.d_state = 16;
    c.head_dim = 32;
  } else if (name == "micro-4") {
    c.layers = 4;
    c.d_model = 128;
    c.patch = 8;
    c.d_move_emb = 64;
    c.d_state = 16;
    c.head_dim = 32;
  } else {
    throw std::invalid_argument("unknown model preset '" + std::string(name) + "'");
  }
  return c;
}

std::vector<std::string> ModelConfig::preset_names() {
  return {"tiny", "small", "base", "micro-2", "micro-4"};
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  return {{"name", name},
          {"layers", std::to_string(layers)},
          {"d_model", std::to_string(d_model)},
          {"patch", std::to_string(patch)},
          {"channels", std::to_string(channels)},
          {"num_classes", std::to_string(num_classes)},
          {"d_move_emb", std::to_string(d_move_emb)},
          {"d_state", std::to_string(d_state)},
          {"head_dim", std::to_string(head_dim)},
          {"expand", std::to_string(expand)},
          {"conv_width", std::to_string(conv_width)},
          {"chunk", std::to_string(chunk)}};
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  auto get = [&kv](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::invalid_argument("model config is missing '" + key + "'");
    return it->second;
  };
  auto get_int = [&get](const std::string& key) { return std::stoi(get(key)); };
  c.name = get("name");
  c.layers = get_int("layers");
  c.d_model = get_int("d_model");
  c.patch = get_int("patch");
  c.channels = get_int("channels");
  c.num_classes = get_int("num_classes");
  c.d_move_emb = get_int("d_move_emb");
  c.d_state = get_int("d_state");
  c.head_dim = get_int("head_dim");
  c.expand = get_int("expand");
  c.conv_width = get_int("conv_width");
  c.chunk = get_int("chunk");
  c.validate();
  return c;
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams p;
  p.proj_weight = Tensor<T>({sz(cfg.d_input()), sz(cfg.d_model)});
  p.proj_bias = Tensor<T>({sz(cfg.d_model)});
  const BackboneConfig bb = cfg.backbone();
  for (int l = 0; l < cfg.layers; ++l) p.blocks.push_back(SsmBlockParams<T>::zeros(bb));
  p.final_norm = Tensor<T>({sz(cfg.d_model)}, T(1));
  p.head_weight = Tensor<T>({sz(cfg.d_model), sz(cfg.num_classes)});
  p.head_bias = Tensor<T>({sz(cfg.num_classes)});
  return p;
}

template <typename T>
ModelParams<T> ModelParams<T>::initialized(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p = zeros(cfg);
  Rng proj_rng(derive_seed(seed, {0}));
  init::truncated_normal(p.proj_weight, 0.02, proj_rng);
  const BackboneConfig bb = cfg.backbone();
  for (std::size_t l = 0; l < p.blocks.size(); ++l) {
    Rng rng(derive_seed(seed, {1, l}));
    p.blocks[l] = SsmBlockParams<T>::initialized(bb, rng);
  }
  Rng head_rng(derive_seed(seed, {2}));
  init::truncated_normal(p.head_weight, 0.02, head_rng);
  return p;
}

template <typename T>
std::vector<NamedParam<T>> ModelParams<T>::named() {
  std::vector<NamedParam<T>> out;
  out.push_back({"proj_weight", &proj_weight});
  out.push_back({"proj_bias", &proj_bias});
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    blocks[l].append_to(out, "blocks." + std::to_string(l) + ".");
  }
  out.push_back({"final_norm", &final_norm});
  out.push_back({"head_weight", &head_weight});
  out.push_back({"head_bias", &head_bias});
  return out;
}

template <typename T>
std::vector<ConstNamedParam<T>> ModelParams<T>::named() const {
  std::vector<ConstNamedParam<T>> out;
  for (auto& p : const_cast<ModelParams*>(this)->named()) out.push_back({p.name, p.tensor});
  return out;
}

template <typename T>
void build_input_row(const GlimpseStep& step, const ModelConfig& cfg, std::span<T> row) {
  const std::size_t pd = sz(cfg.patch_dim());
  if (step.v.size() != pd || row.size() != sz(cfg.d_input())) {
    throw ShapeError("glimpse of " + std::to_string(step.v.size()) +
                     " values does not match patch_dim " + std::to_string(pd));
  }
  std::copy(step.v.begin(), step.v.end(), row.begin());
  encode_move<T>(step.dx, step.dy, step.initial, cfg.move_embedding(), row.subspan(pd));
}

template <typename T>
Tensor<T> build_inputs(const std::vector<GlimpseStep>& steps, const ModelConfig& cfg) {
  Tensor<T> x({steps.size(), sz(cfg.d_input())});
  for (std::size_t t = 0; t < steps.size(); ++t) build_input_row<T>(steps[t], cfg, x.row(t));
  return x;
}

template <typename T>
RecurrentState<T>::RecurrentState(const ModelConfig& cfg)
    : ws(cfg.backbone()),
      hidden(sz(cfg.d_model)),
      normed(sz(cfg.d_model)),
      logits(sz(cfg.num_classes)) {
  const BackboneConfig bb = cfg.backbone();
  for (int l = 0; l < cfg.layers; ++l) layers.push_back(SsmLayerState<T>::zeros(bb));
}

template <typename T>
void RecurrentState<T>::reset() {
  for (auto& l : layers) {
    l.conv_tail.fill(T(0));
    l.h.fill(T(0));
  }
}

template <typename T>
std::size_t RecurrentState<T>::state_bytes() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.byte_size();
  return n;
}

template <typename T>
GlimpseModel<T>::GlimpseModel(ModelConfig cfg, ModelParams<T> params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.validate();
  const auto reference = ModelParams<T>::zeros(cfg_);
  const auto expect = reference.named();
  const auto have = params_.named();
  if (expect.size() != have.size()) throw ShapeError("parameter count does not match config");
  for (std::size_t i = 0; i < have.size(); ++i) {
    if (expect[i].tensor->shape() != have[i].tensor->shape()) {
      throw ShapeError("parameter " + have[i].name + " has shape " +
                       shape_str(have[i].tensor->shape()) + ", config expects " +
                       shape_str(expect[i].tensor->shape()));
    }
  }
}

template <typename T>
GlimpseModel<T> GlimpseModel<T>::initialized(const ModelConfig& cfg, std::uint64_t seed) {
  return GlimpseModel(cfg, ModelParams<T>::initialized(cfg, seed));
}

template <typename T>
ForwardVars GlimpseModel<T>::forward(Tape<T>& tape, const Tensor<T>& inputs,
                                     bool requires_grad) const {
  if (inputs.rank() != 2 || inputs.cols() != sz(cfg_.d_input())) {
    throw ShapeError("model input " + shape_str(inputs.shape()) + " does not match d_input " +
                     std::to_string(cfg_.d_input()));
  }
  ForwardVars fv;
  auto leaf = [&](const Tensor<T>& t) {
    Var v = tape.leaf(t, requires_grad);
    fv.params.push_back(v);
    return v;
  };
  Var pw = leaf(params_.proj_weight);
  Var pb = leaf(params_.proj_bias);
  std::vector<SsmBlockVars> blocks;
  for (const auto& b : params_.blocks) {
    SsmBlockVars v = bind_block(tape, b, requires_grad);
    for (Var x : {v.norm_weight, v.in_proj, v.conv_weight, v.conv_bias, v.dt_bias, v.a_log,
                  v.d_skip, v.gate_norm_weight, v.out_proj}) {
      fv.params.push_back(x);
    }
    blocks.push_back(v);
  }
  Var fnorm = leaf(params_.final_norm);
  Var hw = leaf(params_.head_weight);
  Var hb = leaf(params_.head_bias);

  Var z = ops::gelu(tape, ops::linear(tape, tape.constant(inputs), pw, pb));
  const BackboneConfig bb = cfg_.backbone();
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    z = block_forward_parallel(tape, z, blocks[l], bb, static_cast<int>(l));
  }
  fv.logits = ops::linear(tape, ops::rms_norm(tape, z, fnorm, bb.norm_eps), hw, hb);
  return fv;
}

template <typename T>
Tensor<T> GlimpseModel<T>::forward(const Tensor<T>& inputs) const {
  Tape<T> tape;
  return tape.value(forward(tape, inputs, false).logits);
}

template <typename T>
std::span<const T> GlimpseModel<T>::step(std::span<const T> input, RecurrentState<T>& s) const {
  const std::size_t dm = sz(cfg_.d_model);
  if (input.size() != sz(cfg_.d_input())) {
    throw ShapeError("step input of " + std::to_string(input.size()) +
                     " values does not match d_input " + std::to_string(cfg_.d_input()));
  }
  kernels::matmul(input.data(), params_.proj_weight.data(), s.hidden.data(), 1, input.size(), dm);
  for (std::size_t i = 0; i < dm; ++i) s.hidden[i] = gelu_value(s.hidden[i] + params_.proj_bias[i]);
  const BackboneConfig bb = cfg_.backbone();
  for (std::size_t l = 0; l < s.layers.size(); ++l) {
    block_step_recurrent(std::span<T>(s.hidden), s.layers[l], params_.blocks[l], bb, s.ws,
                         static_cast<int>(l));
  }
  kernels::rms_norm(s.hidden.data(), params_.final_norm.data(), s.normed.data(),
                    static_cast<T*>(nullptr), 1, dm, bb.norm_eps);
  const std::size_t nc = sz(cfg_.num_classes);
  kernels::matmul(s.normed.data(), params_.head_weight.data(), s.logits.data(), 1, dm, nc);
  for (std::size_t k = 0; k < nc; ++k) s.logits[k] += params_.head_bias[k];
  return s.logits;
}

double flops_per_step(const ModelConfig& cfg) {
  const BackboneConfig bb = cfg.backbone();
  const double dm = cfg.d_model, din = cfg.d_input(), nc = cfg.num_classes;
  const double di = bb.d_inner(), ns = bb.d_state, cd = bb.conv_dim(), heads = bb.heads();
  const double ip = bb.in_proj_dim(), k = bb.conv_width;

  const double proj = 2 * din * dm + dm + dm;
  double block = 0;
  block += 3 * dm;                  // rms norm
  block += 2 * dm * ip;             // in projection
  block += 2 * k * cd + cd + cd;    // conv, bias, SiLU
  block += 3 * heads;               // dt bias, softplus, decay
  block += di;                      // x * dt
  block += 5 * di * ns;             // state update and readout
  block += 2 * di;                  // skip term
  block += 2 * di;                  // gate
  block += 3 * di;                  // gate norm
  block += 2 * di * dm + dm;        // out projection, residual
  const double head = 3 * dm + 2 * dm * nc + nc;
  return proj + cfg.layers * block + head;
}

double count_flops(const ModelConfig& cfg, long steps) {
  return flops_per_step(cfg) * static_cast<double>(steps);
}

std::size_t count_parameters(const ModelConfig& cfg) {
  const BackboneConfig bb = cfg.backbone();
  const std::size_t dm = sz(cfg.d_model), din = sz(cfg.d_input()), nc = sz(cfg.num_classes);
  const std::size_t di = sz(bb.d_inner()), cd = sz(bb.conv_dim()), heads = sz(bb.heads());
  const std::size_t block = dm + dm * sz(bb.in_proj_dim()) + cd * sz(bb.conv_width) + cd +
                            3 * heads + di + di * dm;
  return din * dm + dm + sz(cfg.layers) * block + dm + dm * nc + nc;
}

const Tensor<float>* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

namespace {

void write_f32_le(const std::filesystem::path& path, const Tensor<float>& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  std::vector<unsigned char> bytes(t.size() * 4);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(t[i]);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<unsigned char>(u >> (8 * b));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Tensor<float> read_f32_le(const std::filesystem::path& path, Shape shape) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("missing tensor file " + path.string());
  Tensor<float> t(std::move(shape));
  std::vector<unsigned char> bytes(t.size() * 4);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size() || in.peek() != EOF) {
    throw CheckpointError(path.string() + " does not hold " + std::to_string(t.size()) +
                          " fp32 values for shape " + shape_str(t.shape()));
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
    t[i] = std::bit_cast<float>(u);
  }
  return t;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  std::filesystem::create_directories(dir);
  std::ofstream m(dir / "manifest.txt");
  if (!m) throw CheckpointError("cannot write manifest in " + dir.string());
  m << "format_version " << kCheckpointFormatVersion << "\n";
  for (const auto& [k, v] : ckpt.config.to_map()) m << "config." << k << " " << v << "\n";
  for (const auto& [k, v] : ckpt.meta) {
    if (v.find('\n') != std::string::npos) throw CheckpointError("meta value for " + k + " spans lines");
    m << "meta." << k << " " << v << "\n";
  }
  for (const auto& [name, t] : ckpt.tensors) {
    m << "tensor " << name;
    for (std::size_t d : t.shape()) m << " " << d;
    m << "\n";
    write_f32_le(dir / (name + ".f32"), t);
  }
}

Checkpoint read_checkpoint(const std::filesystem::path& dir) {
  std::ifstream m(dir / "manifest.txt");
  if (!m) throw CheckpointError("no manifest.txt in " + dir.string());
  Checkpoint ckpt;
  std::map<std::string, std::string> cfg;
  int version = -1;
  std::string line;
  while (std::getline(m, line)) {
    if (line.empty()) continue;
    const auto space = line.find(' ');
    const std::string key = line.substr(0, space);
    const std::string rest = space == std::string::npos ? "" : line.substr(space + 1);
    if (key == "format_version") {
      version = std::stoi(rest);
    } else if (key.starts_with("config.")) {
      cfg[key.substr(7)] = rest;
    } else if (key.starts_with("meta.")) {
      ckpt.meta[key.substr(5)] = rest;
    } else if (key == "tensor") {
      std::istringstream ss(rest);
      std::string name;
      ss >> name;
      Shape shape;
      std::size_t d;
      while (ss >> d) shape.push_back(d);
      ckpt.tensors.emplace_back(name, read_f32_le(dir / (name + ".f32"), shape));
    } else {
      throw CheckpointError("unrecognised manifest line: " + line);
    }
  }
  if (version != kCheckpointFormatVersion) {
    throw CheckpointError("unsupported checkpoint format version " + std::to_string(version));
  }
  ckpt.config = ModelConfig::from_map(cfg);
  return ckpt;
}

Checkpoint make_checkpoint(const GlimpseModel<float>& model, std::map<std::string, std::string> meta) {
  Checkpoint c;
  c.config = model.config();
  c.meta = std::move(meta);
  for (const auto& p : model.params().named()) c.tensors.emplace_back(p.name, *p.tensor);
  return c;
}

GlimpseModel<float> load_model(const Checkpoint& ckpt) {
  auto params = ModelParams<float>::zeros(ckpt.config);
  for (auto& p : params.named()) {
    const Tensor<float>* t = ckpt.find(p.name);
    if (t == nullptr) throw CheckpointError("checkpoint has no tensor '" + p.name + "'");
    if (t->shape() != p.tensor->shape()) {
      throw CheckpointError("tensor '" + p.name + "' has shape " + shape_str(t->shape()) +
                            ", model expects " + shape_str(p.tensor->shape()));
    }
    *p.tensor = *t;
  }
  return GlimpseModel<float>(ckpt.config, std::move(params));
}

#define MAMBAEYE_MODEL_INSTANTIATE(T)                                                         \
  template struct ModelParams<T>;                                                             \
  template struct RecurrentState<T>;                                                          \
  template class GlimpseModel<T>;                                                             \
  template Tensor<T> build_inputs<T>(const std::vector<GlimpseStep>&, const ModelConfig&);    \
  template void build_input_row<T>(const GlimpseStep&, const ModelConfig&, std::span<T>);

MAMBAEYE_MODEL_INSTANTIATE(float)
MAMBAEYE_MODEL_INSTANTIATE(double)

#undef MAMBAEYE_MODEL_INSTANTIATE

}  // namespace mambaeye
