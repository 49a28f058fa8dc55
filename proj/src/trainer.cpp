#include "mambaeye/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mambaeye/losses.hpp"

#ifndef MAMBAEYE_VERSION
#define MAMBAEYE_VERSION "unknown"
#endif

namespace mambaeye {

namespace fs = std::filesystem;

std::string code_version() { return MAMBAEYE_VERSION; }

double lr_at(long step, long total, long warmup, double peak) {
  if (total <= 0) return 0.0;
  step = std::clamp(step, 0L, total);
  if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  if (total == warmup) return peak;
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return 0.5 * peak * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(std::vector<Tensor<float>*> params, AdamWOptions options, std::vector<bool> decay_mask)
    : params_(std::move(params)), opt_(options), decay_(std::move(decay_mask)) {
  if (decay_.empty()) decay_.assign(params_.size(), true);
  if (decay_.size() != params_.size()) throw std::invalid_argument("decay mask size mismatch");
  for (const Tensor<float>* p : params_) {
    m_.emplace_back(p->shape(), 0.0f);
    v_.emplace_back(p->shape(), 0.0f);
  }
}

bool AdamW::step(const std::vector<Tensor<float>>& grads, double lr) {
  if (grads.size() != params_.size()) throw std::invalid_argument("gradient count mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    require_same_shape(grads[i].shape(), params_[i]->shape(), "adamw");
    if (!grads[i].all_finite()) return false;
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor<float>& w = *params_[i];
    const double decay = decay_[i] ? 1.0 - lr * opt_.weight_decay : 1.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double g = grads[i][j];
      const double m = opt_.beta1 * m_[i][j] + (1.0 - opt_.beta1) * g;
      const double v = opt_.beta2 * v_[i][j] + (1.0 - opt_.beta2) * g * g;
      m_[i][j] = static_cast<float>(m);
      v_[i][j] = static_cast<float>(v);
      const double update = (m / bc1) / (std::sqrt(v / bc2) + opt_.eps);
      w[j] = static_cast<float>(w[j] * decay - lr * update);
    }
  }
  return true;
}

std::string metrics_row(const EpochMetrics& m) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%d,%s,%.9g,%.6f", m.epoch, m.split.c_str(), m.loss, m.accuracy);
  return buf;
}

SampleBatchItem make_train_item(const LabeledImage& sample, const TrainConfig& cfg,
                                std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0}));
  const Image img = augment(sample.image, cfg.augment, derive_seed(seed, {1}));
  const Canvas canvas = make_train_canvas(img, cfg.canvas_min, cfg.canvas_max, rng);
  TrajectoryCursor cursor(canvas, {cfg.policy, derive_seed(seed, {2})}, cfg.model.patch);
  SampleBatchItem item;
  item.label = sample.label;
  item.inputs = Tensor<float>({static_cast<std::size_t>(cfg.steps),
                               static_cast<std::size_t>(cfg.model.d_input())});
  std::vector<double> ratios(static_cast<std::size_t>(cfg.steps));
  GlimpseStep g;
  for (std::size_t t = 0; t < ratios.size(); ++t) {
    cursor.next(g);
    build_input_row<float>(g, cfg.model, item.inputs.row(t));
    ratios[t] = g.r;
  }
  item.targets = build_targets<float>(cfg.model.num_classes, sample.label, ratios, cfg.loss);
  return item;
}

namespace {

SampleBatchItem make_eval_item(const LabeledImage& sample, const TrainConfig& cfg,
                               std::uint64_t seed) {
  const Canvas canvas = make_eval_canvas(sample.image, cfg.eval_resolution);
  TrajectoryCursor cursor(canvas, {ScanKind::RandomImage, seed}, cfg.model.patch);
  SampleBatchItem item;
  item.label = sample.label;
  item.inputs = Tensor<float>({static_cast<std::size_t>(cfg.eval_steps),
                               static_cast<std::size_t>(cfg.model.d_input())});
  std::vector<double> ratios(static_cast<std::size_t>(cfg.eval_steps));
  GlimpseStep g;
  for (std::size_t t = 0; t < ratios.size(); ++t) {
    cursor.next(g);
    build_input_row<float>(g, cfg.model, item.inputs.row(t));
    ratios[t] = g.r;
  }
  item.targets = build_targets<float>(cfg.model.num_classes, sample.label, ratios, cfg.loss);
  return item;
}

bool final_step_correct(const Tensor<float>& logits, int label) {
  const std::size_t last = logits.rows() - 1;
  return predict_class<float>(logits.row(last)) == label;
}

}  // namespace

EpochMetrics evaluate_split(const GlimpseModel<float>& model, const Dataset& data,
                            const TrainConfig& cfg, int epoch, const std::string& split) {
  const std::size_t n = cfg.eval_samples == 0 ? data.size() : std::min(cfg.eval_samples, data.size());
  double loss = 0;
  int correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto item = make_eval_item(data.samples[i], cfg, derive_seed(cfg.seed, {3, i}));
    const auto logits = model.forward(item.inputs);
    loss += sequence_loss_value(logits, item.targets);
    correct += final_step_correct(logits, item.label);
  }
  EpochMetrics m;
  m.epoch = epoch;
  m.split = split;
  m.loss = n == 0 ? 0.0 : loss / static_cast<double>(n);
  m.accuracy = n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n);
  return m;
}

double accumulate_gradients(const GlimpseModel<float>& model, std::span<const SampleBatchItem> items,
                            std::vector<Tensor<float>>& grads, int* correct) {
  double total = 0;
  for (const auto& item : items) {
    Tape<float> tape;
    const ForwardVars fv = model.forward(tape, item.inputs, true);
    const Var loss = sequence_loss(tape, fv.logits, item.targets);
    tape.backward(loss);
    total += tape.value(loss).item();
    if (correct != nullptr) *correct += final_step_correct(tape.value(fv.logits), item.label);
    for (std::size_t i = 0; i < grads.size(); ++i) {
      const Tensor<float>& g = tape.grad_buffer(fv.params[i]);
      for (std::size_t j = 0; j < g.size(); ++j) grads[i][j] += g[j];
    }
  }
  return total;
}

namespace {

std::string format_hash(std::uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string config_hash(const TrainConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_ini(cfg)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return format_hash(h);
}

struct ResumePoint {
  int epochs_done = 0;
  long updates = 0;
  int skipped = 0;
  double best_acc = -1.0;
  std::vector<std::string> rows;
};

std::vector<std::string> read_metric_rows(const fs::path& csv, int max_epoch) {
  std::vector<std::string> rows;
  std::ifstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == kMetricsHeader) continue;
    if (std::stoi(line.substr(0, line.find(','))) <= max_epoch) rows.push_back(line);
  }
  return rows;
}

void write_metrics(const fs::path& csv, const std::vector<std::string>& rows) {
  std::ofstream out(csv, std::ios::trunc);
  out << kMetricsHeader << "\n";
  for (const auto& r : rows) out << r << "\n";
}

void replace_dir(const fs::path& tmp, const fs::path& dst) {
  fs::remove_all(dst);
  fs::rename(tmp, dst);
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const fs::path& out_dir, const TrainOptions& options) {
  cfg.validate();
  std::ostream* log = options.log;
  const DataSplits data = load_splits(cfg.data);
  if (data.train.size() == 0) throw DatasetError("training split has no samples");
  fs::create_directories(out_dir);

  GlimpseModel<float> model = [&] {
    if (cfg.init_checkpoint.empty()) {
      return GlimpseModel<float>::initialized(cfg.model, derive_seed(cfg.seed, {100}));
    }
    Checkpoint init = read_checkpoint(cfg.init_checkpoint);
    if (!(init.config == cfg.model)) {
      throw CheckpointError("init checkpoint config does not match the run's model config");
    }
    return load_model(init);
  }();

  auto named = model.params().named();
  std::vector<Tensor<float>*> tensors;
  std::vector<bool> decay;
  for (auto& p : named) {
    tensors.push_back(p.tensor);
    decay.push_back(p.tensor->rank() == 2);
  }
  AdamW opt(tensors, {cfg.optim.beta1, cfg.optim.beta2, cfg.optim.eps, cfg.optim.weight_decay},
            decay);

  const std::size_t per_update =
      static_cast<std::size_t>(cfg.batch_size) * static_cast<std::size_t>(cfg.accum_steps);
  const long updates_per_epoch =
      static_cast<long>((data.train.size() + per_update - 1) / per_update);
  const long total_updates = updates_per_epoch * cfg.epochs;
  const long warmup = std::lround(cfg.optim.warmup_epochs * static_cast<double>(updates_per_epoch));

  const fs::path last_dir = out_dir / "last";
  const fs::path best_dir = out_dir / "best";
  const fs::path csv = out_dir / "metrics.csv";
  ResumePoint rp;
  if (options.resume && fs::exists(last_dir / "manifest.txt")) {
    const Checkpoint ck = read_checkpoint(last_dir);
    if (!(ck.config == cfg.model) || ck.meta.at("config_hash") != config_hash(cfg)) {
      throw CheckpointError("resume checkpoint was written with a different config");
    }
    GlimpseModel<float> restored = load_model(ck);
    auto src = restored.params().named();
    for (std::size_t i = 0; i < named.size(); ++i) {
      *named[i].tensor = *src[i].tensor;
      const Tensor<float>* m = ck.find("adam_m." + named[i].name);
      const Tensor<float>* v = ck.find("adam_v." + named[i].name);
      if (m == nullptr || v == nullptr) throw CheckpointError("resume checkpoint lacks optimizer state");
      opt.first_moments()[i] = *m;
      opt.second_moments()[i] = *v;
    }
    rp.epochs_done = std::stoi(ck.meta.at("epochs_done"));
    rp.updates = std::stol(ck.meta.at("updates"));
    rp.skipped = std::stoi(ck.meta.at("skipped_updates"));
    rp.best_acc = std::stod(ck.meta.at("best_acc"));
    opt.set_steps_taken(std::stol(ck.meta.at("adam_steps")));
    rp.rows = read_metric_rows(csv, rp.epochs_done);
    if (log) *log << "resuming after epoch " << rp.epochs_done << "\n";
  }

  TrainResult result;
  result.skipped_updates = rp.skipped;
  result.last_checkpoint = last_dir;
  result.best_checkpoint = best_dir;
  long update = rp.updates;
  double best_acc = rp.best_acc;
  std::vector<std::string> rows = rp.rows;
  std::vector<Tensor<float>> grads;
  for (Tensor<float>* t : tensors) grads.emplace_back(t->shape(), 0.0f);

  const int last_epoch = options.stop_after_epoch >= 0 ? std::min(options.stop_after_epoch, cfg.epochs)
                                                       : cfg.epochs;
  for (int epoch = rp.epochs_done + 1; epoch <= last_epoch; ++epoch) {
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, {1, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0;
    int epoch_correct = 0;
    for (std::size_t start = 0; start < order.size(); start += per_update) {
      const std::size_t end = std::min(order.size(), start + per_update);
      for (auto& g : grads) g.fill(0.0f);
      for (std::size_t mb = start; mb < end; mb += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t mb_end = std::min(end, mb + static_cast<std::size_t>(cfg.batch_size));
        std::vector<SampleBatchItem> items;
        for (std::size_t pos = mb; pos < mb_end; ++pos) {
          const std::uint64_t seed =
              derive_seed(cfg.seed, {2, static_cast<std::uint64_t>(epoch), pos});
          items.push_back(make_train_item(data.train.samples[order[pos]], cfg, seed));
        }
        epoch_loss += accumulate_gradients(model, items, grads, &epoch_correct);
      }
      const float inv = 1.0f / static_cast<float>(end - start);
      for (auto& g : grads) {
        for (float& v : g.vec()) v *= inv;
      }
      const double lr =
          cfg.optim.constant_lr ? cfg.optim.lr : lr_at(update + 1, total_updates, warmup, cfg.optim.lr);
      if (!opt.step(grads, lr)) {
        ++result.skipped_updates;
        if (log) *log << "epoch " << epoch << " update " << update << ": non-finite gradient, update skipped\n";
      }
      ++update;
    }

    EpochMetrics train_m;
    train_m.epoch = epoch;
    train_m.split = "train";
    train_m.loss = epoch_loss / static_cast<double>(order.size());
    train_m.accuracy = static_cast<double>(epoch_correct) / static_cast<double>(order.size());
    const EpochMetrics test_m = evaluate_split(model, data.test, cfg, epoch, "test");
    rows.push_back(metrics_row(train_m));
    rows.push_back(metrics_row(test_m));
    write_metrics(csv, rows);
    if (log) {
      *log << "epoch " << epoch << "/" << cfg.epochs << "  train loss " << train_m.loss << " acc "
           << train_m.accuracy << "  test loss " << test_m.loss << " acc " << test_m.accuracy << std::endl;
    }

    const bool improved = test_m.accuracy > best_acc;
    if (improved) best_acc = test_m.accuracy;
    std::map<std::string, std::string> meta = {
        {"epochs_done", std::to_string(epoch)},
        {"updates", std::to_string(update)},
        {"adam_steps", std::to_string(opt.steps_taken())},
        {"skipped_updates", std::to_string(result.skipped_updates)},
        {"best_acc", format_double(best_acc)},
        {"seed", std::to_string(cfg.seed)},
        {"loss", to_string(cfg.loss)},
        {"policy", to_string(cfg.policy)},
        {"train_steps", std::to_string(cfg.steps)},
        {"config_hash", config_hash(cfg)},
        {"code_version", code_version()}};
    Checkpoint ck = make_checkpoint(model, meta);
    for (std::size_t i = 0; i < named.size(); ++i) {
      ck.tensors.emplace_back("adam_m." + named[i].name, opt.first_moments()[i]);
      ck.tensors.emplace_back("adam_v." + named[i].name, opt.second_moments()[i]);
    }
    write_checkpoint(out_dir / "last.tmp", ck);
    replace_dir(out_dir / "last.tmp", last_dir);
    if (improved) {
      write_checkpoint(out_dir / "best.tmp", make_checkpoint(model, meta));
      replace_dir(out_dir / "best.tmp", best_dir);
    }

    nlohmann::ordered_json manifest;
    manifest["code_version"] = code_version();
    manifest["config"] = to_ini(cfg);
    manifest["seed"] = cfg.seed;
    manifest["data_seed"] = cfg.data.seed;
    manifest["data"] = {{"source", cfg.data.source},
                        {"train_size", data.train.size()},
                        {"test_size", data.test.size()},
                        {"train_hash", format_hash(data.train.content_hash())},
                        {"test_hash", format_hash(data.test.content_hash())}};
    manifest["parameters"] = count_parameters(cfg.model);
    manifest["epochs_done"] = epoch;
    manifest["skipped_updates"] = result.skipped_updates;
    manifest["metrics"] = rows;
    std::ofstream(out_dir / "run_manifest.json") << manifest.dump(2) << "\n";
  }

  for (const auto& r : rows) {
    std::istringstream ss(r);
    EpochMetrics m;
    std::string field;
    std::getline(ss, field, ',');
    m.epoch = std::stoi(field);
    std::getline(ss, m.split, ',');
    std::getline(ss, field, ',');
    m.loss = std::stod(field);
    std::getline(ss, field, ',');
    m.accuracy = std::stod(field);
    result.metrics.push_back(m);
  }
  return result;
}

}  // namespace mambaeye
