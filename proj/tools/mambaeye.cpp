#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <optional>
#include <iostream>
#include <string>
#include <vector>

#include "mambaeye/config.hpp"
#include "mambaeye/evaluation.hpp"
#include "mambaeye/model.hpp"
#include "mambaeye/selfcheck.hpp"
#include "mambaeye/trainer.hpp"

using namespace mambaeye;
namespace fs = std::filesystem;

namespace {

struct EvalArgs {
  std::string checkpoint;
  std::string config;
  std::string out = "eval_out";
  std::string split = "test";
  std::string name;
  std::vector<int> resolutions{32, 64, 128};
  std::vector<std::string> policies{"random"};
  int t_max = 1024;
  std::vector<int> probes;
  std::uint64_t seed = 0;
  int num_seeds = 3;
  std::size_t max_samples = 0;
};

void add_eval_options(CLI::App& cmd, EvalArgs& a, bool with_policies) {
  cmd.add_option("--config", a.config, "Run config; its [data] section selects the dataset")
      ->check(CLI::ExistingFile);
  cmd.add_option("--out", a.out, "Output directory");
  cmd.add_option("--split", a.split, "Dataset split")->check(CLI::IsMember({"train", "test"}));
  cmd.add_option("--name", a.name, "Job name used in output file names");
  cmd.add_option("--resolutions", a.resolutions, "Canvas sides")->delimiter(',');
  if (with_policies) {
    cmd.add_option("--policies", a.policies, "random, raster, zigzag")->delimiter(',');
  }
  cmd.add_option("--t-max", a.t_max, "Longest trajectory");
  cmd.add_option("--probes", a.probes, "Steps to record (default: powers of two up to t-max)")
      ->delimiter(',');
  cmd.add_option("--seed", a.seed, "First evaluation seed");
  cmd.add_option("--num-seeds", a.num_seeds, "Seeds for random policies")->check(CLI::PositiveNumber);
  cmd.add_option("--max-samples", a.max_samples, "Evaluate at most this many samples (0: all)");
}

EvalJob make_job(const EvalArgs& a, const std::string& default_name) {
  EvalJob job;
  job.name = a.name.empty() ? default_name : a.name;
  job.resolutions = a.resolutions;
  job.policies.clear();
  for (const auto& p : a.policies) job.policies.push_back(parse_scan_kind(p));
  job.t_max = a.t_max;
  job.probes = a.probes.empty() ? power_of_two_probes(a.t_max) : a.probes;
  job.seeds.clear();
  for (int i = 0; i < a.num_seeds; ++i) job.seeds.push_back(a.seed + static_cast<std::uint64_t>(i));
  job.max_samples = a.max_samples;
  return job;
}

Dataset load_eval_split(const EvalArgs& a) {
  DataConfig data;
  if (!a.config.empty()) data = load_train_config(a.config).data;
  auto splits = load_splits(data);
  return a.split == "train" ? std::move(splits.train) : std::move(splits.test);
}

GlimpseModel<float> load_checkpoint_model(const std::string& dir) {
  return load_model(read_checkpoint(dir));
}

void write_eval_manifest(const fs::path& path, const EvalJob& job, const EvalArgs& a,
                         const std::vector<std::string>& checkpoints, const Dataset& data) {
  nlohmann::ordered_json j;
  j["code_version"] = code_version();
  j["job"] = job.name;
  j["checkpoints"] = checkpoints;
  j["config"] = a.config;
  j["split"] = a.split;
  j["dataset_hash"] = data.content_hash();
  j["dataset_size"] = data.size();
  j["resolutions"] = job.resolutions;
  std::vector<std::string> policies;
  for (ScanKind k : job.policies) policies.push_back(to_string(k));
  j["policies"] = policies;
  j["t_max"] = job.t_max;
  j["probes"] = job.probes;
  j["seeds"] = job.seeds;
  j["max_samples"] = job.max_samples;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

int run_train(const std::string& config_path, const std::string& out, std::optional<std::uint64_t> seed,
              bool resume, int stop_after) {
  TrainConfig cfg = load_train_config(config_path);
  if (seed) cfg.seed = *seed;
  TrainOptions opts;
  opts.resume = resume;
  opts.stop_after_epoch = stop_after;
  opts.log = &std::cout;
  const auto result = train(cfg, out, opts);
  std::cout << "metrics: " << (fs::path(out) / "metrics.csv").string() << "\n";
  if (result.skipped_updates > 0) std::cout << "skipped updates: " << result.skipped_updates << "\n";
  return 0;
}

int run_eval(const EvalArgs& a) {
  const auto model = load_checkpoint_model(a.checkpoint);
  const auto job = make_job(a, "eval");
  const Dataset data = load_eval_split(a);
  const auto tables = evaluate(model, data, job, &std::cout);
  for (const auto& p : emit_report(tables, a.out)) std::cout << "wrote " << p.string() << "\n";
  write_eval_manifest(fs::path(a.out) / (job.name + "_manifest.json"), job, a, {a.checkpoint}, data);
  return 0;
}

int run_ablate_scan(const EvalArgs& a) {
  const auto model = load_checkpoint_model(a.checkpoint);
  const auto job = make_job(a, "ablate-scan");
  const Dataset data = load_eval_split(a);
  const auto tables = ablate_scan(model, data, job, &std::cout);
  emit_report(tables, a.out);
  const fs::path table_path = fs::path(a.out) / (job.name + ".csv");
  write_scan_table(tables, table_path);
  std::cout << "wrote " << table_path.string() << "\n";

  // Row-wrap signature: autocorrelation of the raster accuracy trace at the
  // grid-width lag, next to the strongest lag found.
  const fs::path osc_path = fs::path(a.out) / (job.name + "_oscillation.csv");
  std::ofstream osc(osc_path, std::ios::binary | std::ios::trunc);
  osc << "resolution,grid_width,acf_at_grid_width,peak_lag,peak_acf\n";
  const auto& first = data.samples.front().image;
  for (const auto& t : tables) {
    if (t.policy != ScanKind::RasterHorizontal) continue;
    const int gw = eval_grid_width(t.resolution, model.config().patch, first.width, first.height);
    int peak_lag = 0;
    double peak = -2;
    for (int lag = 2; lag <= 2 * gw + 2; ++lag) {
      const double v = difference_autocorrelation(t.trace, lag);
      if (v > peak) {
        peak = v;
        peak_lag = lag;
      }
    }
    char line[160];
    std::snprintf(line, sizeof(line), "%d,%d,%.6f,%d,%.6f\n", t.resolution, gw,
                  difference_autocorrelation(t.trace, gw), peak_lag, peak);
    osc << line;
  }
  std::cout << "wrote " << osc_path.string() << "\n";
  write_eval_manifest(fs::path(a.out) / (job.name + "_manifest.json"), job, a, {a.checkpoint}, data);
  return 0;
}

int run_ablate_loss(const EvalArgs& a, const std::string& scheduled, const std::string& standard) {
  const auto m_sched = load_checkpoint_model(scheduled);
  const auto m_std = load_checkpoint_model(standard);
  auto job = make_job(a, "ablate-loss");
  const Dataset data = load_eval_split(a);
  const auto rows = ablate_loss(m_sched, m_std, data, job, &std::cout);
  const fs::path path = fs::path(a.out) / (job.name + ".csv");
  write_loss_table(rows, path);
  std::cout << "wrote " << path.string() << "\n";
  const auto& s = rows[rows.size() - 2];
  const auto& c = rows[rows.size() - 1];
  std::printf("longest probe T=%d res %d: scheduled %.4f +- %.4f, standard-ce %.4f +- %.4f (%zu seeds)\n",
              s.t, s.resolution, s.top1, s.top1_stderr, c.top1, c.top1_stderr, s.seeds);
  if (s.top1 < c.top1) std::printf("note: standard-ce ahead at the longest probe\n");
  write_eval_manifest(fs::path(a.out) / (job.name + "_manifest.json"), job, a, {scheduled, standard},
                      data);
  return 0;
}

int run_flops(std::vector<std::string> presets, const std::vector<long>& steps) {
  if (presets.empty()) presets = ModelConfig::preset_names();
  std::printf("preset,T,flops,gflops\n");
  for (const auto& name : presets) {
    const auto cfg = ModelConfig::preset(name);
    for (long t : steps) {
      const double f = count_flops(cfg, t);
      std::printf("%s,%ld,%.0f,%.3f\n", name.c_str(), t, f, f / 1e9);
    }
  }
  return 0;
}

int run_selfcheck() {
  int failed = 0;
  for (const auto& check : selfcheck_suite()) {
    const auto r = run_check(check);
    std::printf("%s  %-48s %6.1fs  %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.seconds,
                r.detail.c_str());
    std::fflush(stdout);
    if (!r.passed) ++failed;
  }
  std::printf("%d check(s) failed\n", failed);
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Glimpse-sequence image classifier: training, evaluation and checks"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "run";
  std::optional<std::uint64_t> seed;
  bool resume = false;
  int stop_after = -1;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a config file");
  train_cmd->add_option("--config", config_path, "Run config (INI)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", out_dir, "Output directory");
  train_cmd->add_option("--seed", seed, "Override the config seed");
  train_cmd->add_flag("--resume", resume, "Continue from <out>/last");
  train_cmd->add_option("--stop-after", stop_after, "Stop after this many epochs");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Accuracy-vs-t curves");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint directory")->required();
  add_eval_options(*eval_cmd, eval_args, true);

  EvalArgs scan_args;
  auto* scan_cmd = app.add_subcommand("ablate-scan", "Random vs raster vs zigzag");
  scan_cmd->add_option("--checkpoint", scan_args.checkpoint, "Checkpoint directory")->required();
  add_eval_options(*scan_cmd, scan_args, false);

  EvalArgs loss_args;
  std::string scheduled_ckpt;
  std::string standard_ckpt;
  auto* loss_cmd = app.add_subcommand("ablate-loss", "Scheduled vs standard cross-entropy");
  loss_cmd->add_option("--scheduled", scheduled_ckpt, "Checkpoint trained with the scheduled loss")
      ->required();
  loss_cmd->add_option("--standard", standard_ckpt, "Checkpoint trained with standard CE")->required();
  add_eval_options(*loss_cmd, loss_args, false);

  std::vector<std::string> presets;
  std::vector<long> flop_steps{1024, 4096};
  auto* flops_cmd = app.add_subcommand("flops", "Closed-form forward FLOPs");
  flops_cmd->add_option("--preset", presets, "Presets (default: all)")->delimiter(',');
  flops_cmd->add_option("--steps", flop_steps, "Sequence lengths")->delimiter(',');

  auto* self_cmd = app.add_subcommand("selfcheck", "Run the oracle checks");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train_cmd) return run_train(config_path, out_dir, seed, resume, stop_after);
    if (*eval_cmd) return run_eval(eval_args);
    if (*scan_cmd) return run_ablate_scan(scan_args);
    if (*loss_cmd) return run_ablate_loss(loss_args, scheduled_ckpt, standard_ckpt);
    if (*flops_cmd) return run_flops(presets, flop_steps);
    if (*self_cmd) return run_selfcheck();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
