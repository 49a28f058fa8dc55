#include "mambaeye/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mambaeye {

namespace pt = boost::property_tree;

void TrainConfig::validate() const {
  model.validate();
  if (model.num_classes != data.num_classes) {
    throw std::invalid_argument("model.num_classes and data.num_classes differ");
  }
  if (epochs < 0 || steps < 1 || batch_size < 1 || accum_steps < 1) {
    throw std::invalid_argument("epochs, steps, batch_size and accum_steps must be positive");
  }
  if (canvas_min < 1 || canvas_min > canvas_max) {
    throw std::invalid_argument("canvas sizes must satisfy 0 < canvas_min <= canvas_max");
  }
  if (eval_steps < 1 || eval_resolution < model.patch) {
    throw std::invalid_argument("eval_steps must be positive and eval_resolution >= patch");
  }
  if (optim.lr < 0 || optim.weight_decay < 0 || optim.warmup_epochs < 0) {
    throw std::invalid_argument("lr, weight_decay and warmup_epochs must be non-negative");
  }
}

namespace {

// One entry per accepted key: reads it from the tree into the config.
using Reader = std::function<void(TrainConfig&, const std::string&)>;

int to_int(const std::string& s) { return std::stoi(s); }
double to_double(const std::string& s) { return std::stod(s); }
std::uint64_t to_u64(const std::string& s) { return std::stoull(s); }
bool to_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::invalid_argument("expected a boolean, got '" + s + "'");
}

const std::map<std::string, std::map<std::string, Reader>>& readers() {
  static const std::map<std::string, std::map<std::string, Reader>> table = {
      {"model",
       {{"layers", [](TrainConfig& c, const std::string& v) { c.model.layers = to_int(v); }},
        {"d_model", [](TrainConfig& c, const std::string& v) { c.model.d_model = to_int(v); }},
        {"patch", [](TrainConfig& c, const std::string& v) { c.model.patch = to_int(v); }},
        {"channels", [](TrainConfig& c, const std::string& v) { c.model.channels = to_int(v); }},
        {"d_move_emb", [](TrainConfig& c, const std::string& v) { c.model.d_move_emb = to_int(v); }},
        {"d_state", [](TrainConfig& c, const std::string& v) { c.model.d_state = to_int(v); }},
        {"head_dim", [](TrainConfig& c, const std::string& v) { c.model.head_dim = to_int(v); }},
        {"expand", [](TrainConfig& c, const std::string& v) { c.model.expand = to_int(v); }},
        {"conv_width", [](TrainConfig& c, const std::string& v) { c.model.conv_width = to_int(v); }},
        {"chunk", [](TrainConfig& c, const std::string& v) { c.model.chunk = to_int(v); }}}},
      {"data",
       {{"source", [](TrainConfig& c, const std::string& v) { c.data.source = v; }},
        {"root", [](TrainConfig& c, const std::string& v) { c.data.root = v; }},
        {"train_path", [](TrainConfig& c, const std::string& v) { c.data.train_path = v; }},
        {"test_path", [](TrainConfig& c, const std::string& v) { c.data.test_path = v; }},
        {"num_classes", [](TrainConfig& c, const std::string& v) { c.data.num_classes = to_int(v); }},
        {"train_samples", [](TrainConfig& c, const std::string& v) { c.data.train_samples = to_u64(v); }},
        {"test_samples", [](TrainConfig& c, const std::string& v) { c.data.test_samples = to_u64(v); }},
        {"image_side", [](TrainConfig& c, const std::string& v) { c.data.image_side = to_int(v); }},
        {"seed", [](TrainConfig& c, const std::string& v) { c.data.seed = to_u64(v); }}}},
      {"optim",
       {{"lr", [](TrainConfig& c, const std::string& v) { c.optim.lr = to_double(v); }},
        {"weight_decay", [](TrainConfig& c, const std::string& v) { c.optim.weight_decay = to_double(v); }},
        {"beta1", [](TrainConfig& c, const std::string& v) { c.optim.beta1 = to_double(v); }},
        {"beta2", [](TrainConfig& c, const std::string& v) { c.optim.beta2 = to_double(v); }},
        {"eps", [](TrainConfig& c, const std::string& v) { c.optim.eps = to_double(v); }},
        {"warmup_epochs", [](TrainConfig& c, const std::string& v) { c.optim.warmup_epochs = to_double(v); }},
        {"constant_lr", [](TrainConfig& c, const std::string& v) { c.optim.constant_lr = to_bool(v); }}}},
      {"augment",
       {{"crop_prob", [](TrainConfig& c, const std::string& v) { c.augment.crop_prob = to_double(v); }},
        {"crop_min_area", [](TrainConfig& c, const std::string& v) { c.augment.crop_min_area = to_double(v); }},
        {"scale_min", [](TrainConfig& c, const std::string& v) { c.augment.scale_min = to_double(v); }},
        {"scale_max", [](TrainConfig& c, const std::string& v) { c.augment.scale_max = to_double(v); }},
        {"perspective_prob", [](TrainConfig& c, const std::string& v) { c.augment.perspective_prob = to_double(v); }},
        {"perspective_strength", [](TrainConfig& c, const std::string& v) { c.augment.perspective_strength = to_double(v); }},
        {"jitter_prob", [](TrainConfig& c, const std::string& v) { c.augment.jitter_prob = to_double(v); }},
        {"brightness", [](TrainConfig& c, const std::string& v) { c.augment.brightness = to_double(v); }},
        {"contrast", [](TrainConfig& c, const std::string& v) { c.augment.contrast = to_double(v); }},
        {"saturation", [](TrainConfig& c, const std::string& v) { c.augment.saturation = to_double(v); }}}},
      {"train",
       {{"canvas_min", [](TrainConfig& c, const std::string& v) { c.canvas_min = to_int(v); }},
        {"canvas_max", [](TrainConfig& c, const std::string& v) { c.canvas_max = to_int(v); }},
        {"epochs", [](TrainConfig& c, const std::string& v) { c.epochs = to_int(v); }},
        {"steps", [](TrainConfig& c, const std::string& v) { c.steps = to_int(v); }},
        {"batch_size", [](TrainConfig& c, const std::string& v) { c.batch_size = to_int(v); }},
        {"accum_steps", [](TrainConfig& c, const std::string& v) { c.accum_steps = to_int(v); }},
        {"loss", [](TrainConfig& c, const std::string& v) { c.loss = parse_loss_mode(v); }},
        {"policy", [](TrainConfig& c, const std::string& v) { c.policy = parse_scan_kind(v); }},
        {"seed", [](TrainConfig& c, const std::string& v) { c.seed = to_u64(v); }},
        {"eval_steps", [](TrainConfig& c, const std::string& v) { c.eval_steps = to_int(v); }},
        {"eval_resolution", [](TrainConfig& c, const std::string& v) { c.eval_resolution = to_int(v); }},
        {"eval_samples", [](TrainConfig& c, const std::string& v) { c.eval_samples = to_u64(v); }},
        {"init_checkpoint", [](TrainConfig& c, const std::string& v) { c.init_checkpoint = v; }}}},
  };
  return table;
}

}  // namespace

TrainConfig parse_train_config(const std::string& ini_text) {
  pt::ptree tree;
  std::istringstream in(ini_text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  TrainConfig c;
  if (auto model = tree.get_child_optional("model")) {
    if (auto preset = model->get_optional<std::string>("preset")) {
      c.model = ModelConfig::preset(*preset);
    }
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw std::invalid_argument("config: key '" + section + "' must be inside a section");
    }
    const auto sec = readers().find(section);
    if (sec == readers().end()) throw std::invalid_argument("config: unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      if (section == "model" && key == "preset") continue;
      const auto r = sec->second.find(key);
      if (r == sec->second.end()) {
        throw std::invalid_argument("config: unknown key '" + key + "' in [" + section + "]");
      }
      try {
        r->second(c, value.data());
      } catch (const std::invalid_argument& e) {
        throw std::invalid_argument("config: bad value '" + value.data() + "' for " + section + "." +
                                    key + ": " + e.what());
      }
    }
  }
  c.model.num_classes = c.data.num_classes;
  if (c.model.name != "custom") {
    ModelConfig named = ModelConfig::preset(c.model.name);
    named.num_classes = c.model.num_classes;
    if (!(named == c.model)) c.model.name = "custom";
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

namespace {

/// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string to_ini(const TrainConfig& c) {
  std::ostringstream o;
  const ModelConfig& m = c.model;
  o << "[model]\n";
  const auto presets = ModelConfig::preset_names();
  if (std::find(presets.begin(), presets.end(), m.name) != presets.end()) {
    o << "preset = " << m.name << "\n";
  }
  o << "layers = " << m.layers << "\nd_model = " << m.d_model << "\npatch = " << m.patch
    << "\nchannels = " << m.channels << "\nd_move_emb = " << m.d_move_emb
    << "\nd_state = " << m.d_state << "\nhead_dim = " << m.head_dim << "\nexpand = " << m.expand
    << "\nconv_width = " << m.conv_width << "\nchunk = " << m.chunk << "\n\n";
  const DataConfig& d = c.data;
  o << "[data]\n"
    << "source = " << d.source << "\nroot = " << d.root << "\ntrain_path = " << d.train_path
    << "\ntest_path = " << d.test_path << "\nnum_classes = " << d.num_classes
    << "\ntrain_samples = " << d.train_samples << "\ntest_samples = " << d.test_samples
    << "\nimage_side = " << d.image_side << "\nseed = " << d.seed << "\n\n";
  const OptimConfig& op = c.optim;
  o << "[optim]\n"
    << "lr = " << num(op.lr) << "\nweight_decay = " << num(op.weight_decay) << "\nbeta1 = " << num(op.beta1)
    << "\nbeta2 = " << num(op.beta2) << "\neps = " << num(op.eps) << "\nwarmup_epochs = " << num(op.warmup_epochs)
    << "\nconstant_lr = " << (op.constant_lr ? "true" : "false") << "\n\n";
  const AugmentConfig& a = c.augment;
  o << "[augment]\n"
    << "crop_prob = " << num(a.crop_prob) << "\ncrop_min_area = " << num(a.crop_min_area)
    << "\nscale_min = " << num(a.scale_min) << "\nscale_max = " << num(a.scale_max)
    << "\nperspective_prob = " << num(a.perspective_prob)
    << "\nperspective_strength = " << num(a.perspective_strength) << "\njitter_prob = " << num(a.jitter_prob)
    << "\nbrightness = " << num(a.brightness) << "\ncontrast = " << num(a.contrast)
    << "\nsaturation = " << num(a.saturation) << "\n\n";
  o << "[train]\n"
    << "canvas_min = " << c.canvas_min << "\ncanvas_max = " << c.canvas_max
    << "\nepochs = " << c.epochs << "\nsteps = " << c.steps << "\nbatch_size = " << c.batch_size
    << "\naccum_steps = " << c.accum_steps << "\nloss = " << to_string(c.loss)
    << "\npolicy = " << to_string(c.policy) << "\nseed = " << c.seed
    << "\neval_steps = " << c.eval_steps << "\neval_resolution = " << c.eval_resolution
    << "\neval_samples = " << c.eval_samples << "\ninit_checkpoint = " << c.init_checkpoint << "\n";
  return o.str();
}

std::filesystem::path resolve_data_root(const DataConfig& d) {
  if (const char* env = std::getenv(kDataRootEnv); env != nullptr && *env != '\0') return env;
  return d.root;
}

DataSplits load_splits(const DataConfig& d) {
  DataSplits s;
  if (d.source == "synthetic-shapes") {
    s.train = make_synthetic_shapes(d.train_samples, d.image_side, derive_seed(d.seed, {0}));
    s.test = make_synthetic_shapes(d.test_samples, d.image_side, derive_seed(d.seed, {1}));
  } else if (d.source == "synthetic-bars") {
    s.train = make_synthetic_bars(d.train_samples, d.image_side, derive_seed(d.seed, {0}));
    s.test = make_synthetic_bars(d.test_samples, d.image_side, derive_seed(d.seed, {1}));
  } else {
    const DatasetFormat format = parse_dataset_format(d.source);
    const auto root = resolve_data_root(d);
    s.train = load_dataset(root / d.train_path, format, d.num_classes);
    s.test = load_dataset(root / d.test_path, format, d.num_classes);
  }
  for (const Dataset* ds : {&s.train, &s.test}) {
    if (ds->num_classes > d.num_classes) {
      throw DatasetError("dataset has " + std::to_string(ds->num_classes) +
                         " classes but the config allows " + std::to_string(d.num_classes));
    }
  }
  return s;
}

}  // namespace mambaeye
