// End-to-end acceptance run: one PASS/FAIL line per criterion. Training runs
// are cached under the runs directory and resumed, so a second invocation only
// re-evaluates; pass --fresh to retrain from scratch.

#include <CLI11.hpp>

#include <atomic>
#include <cstdarg>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "mambaeye/config.hpp"
#include "mambaeye/evaluation.hpp"
#include "mambaeye/selfcheck.hpp"
#include "mambaeye/trainer.hpp"

using namespace mambaeye;
namespace fs = std::filesystem;

namespace {

// Live and peak heap bytes requested through operator new.
std::atomic<long long> g_live{0};
std::atomic<long long> g_peak{0};
constexpr std::size_t kHeader = alignof(std::max_align_t);

void* counted_alloc(std::size_t n) {
  auto* p = static_cast<unsigned char*>(std::malloc(n + kHeader));
  if (p == nullptr) return nullptr;
  *reinterpret_cast<std::size_t*>(p) = n;
  const long long live = g_live.fetch_add(static_cast<long long>(n)) + static_cast<long long>(n);
  long long peak = g_peak.load();
  while (live > peak && !g_peak.compare_exchange_weak(peak, live)) {
  }
  return p + kHeader;
}

void counted_free(void* ptr) {
  if (ptr == nullptr) return;
  auto* p = static_cast<unsigned char*>(ptr) - kHeader;
  g_live.fetch_sub(static_cast<long long>(*reinterpret_cast<std::size_t*>(p)));
  std::free(p);
}

}  // namespace

void* operator new(std::size_t n) {
  if (void* p = counted_alloc(n)) return p;
  throw std::bad_alloc();
}
void* operator new[](std::size_t n) {
  if (void* p = counted_alloc(n)) return p;
  throw std::bad_alloc();
}
void* operator new(std::size_t n, const std::nothrow_t&) noexcept { return counted_alloc(n); }
void* operator new[](std::size_t n, const std::nothrow_t&) noexcept { return counted_alloc(n); }
void operator delete(void* p) noexcept { counted_free(p); }
void operator delete[](void* p) noexcept { counted_free(p); }
void operator delete(void* p, std::size_t) noexcept { counted_free(p); }
void operator delete[](void* p, std::size_t) noexcept { counted_free(p); }

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool passed, const std::string& detail,
            bool soft = false) {
  const char* tag = passed ? "PASS" : (soft ? "NOTE" : "FAIL");
  std::printf("[%s] criterion %2d  %s: %s\n", tag, id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!passed && !soft) ++g_failures;
}

std::string printf_str(const char* pattern, ...) __attribute__((format(printf, 1, 2)));
std::string printf_str(const char* pattern, ...) {
  char buf[512];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buf, sizeof(buf), pattern, args);
  va_end(args);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void run_selfchecks(const std::vector<std::pair<int, std::string>>& ids) {
  const auto suite = selfcheck_suite();
  for (const auto& [id, key] : ids) {
    for (const auto& check : suite) {
      if (check.name != key) continue;
      const auto r = run_check(check);
      std::string detail = r.detail + printf_str(" [%.1fs]", r.seconds);
      bool passed = r.passed;
      if (id == 1 && r.seconds >= 60.0) passed = false;
      if (id == 3 && r.seconds >= 120.0) passed = false;
      report(id, r.name, passed, detail);
    }
  }
}

long long recurrent_peak(const GlimpseModel<float>& model, const Canvas& canvas, int steps) {
  const ModelConfig& cfg = model.config();
  const long long base = g_live.load();
  g_peak.store(base);
  {
    auto state = model.make_state();
    TrajectoryCursor cursor(canvas, {ScanKind::RandomImage, 77}, cfg.patch);
    GlimpseStep glimpse;
    std::vector<float> row(static_cast<std::size_t>(cfg.d_input()));
    for (int t = 0; t < steps; ++t) {
      cursor.next(glimpse);
      build_input_row<float>(glimpse, cfg, row);
      model.step(row, state);
    }
  }
  return g_peak.load() - base;
}

void check_constant_memory() {
  const auto model = GlimpseModel<float>::initialized(ModelConfig::preset("micro-4"), 3);
  const Dataset data = make_synthetic_shapes(1, 32, 4);
  const Canvas canvas = make_eval_canvas(data.samples[0].image, 128);
  recurrent_peak(model, canvas, 8);  // warm-up
  const long long p64 = recurrent_peak(model, canvas, 64);
  const long long p4096 = recurrent_peak(model, canvas, 4096);
  const double rel = std::abs(static_cast<double>(p4096 - p64)) / static_cast<double>(std::max(p64, 1LL));
  report(7, "constant-memory recurrent inference", rel <= 0.01,
         printf_str("peak heap T=64: %lld B, T=4096: %lld B, relative gap %.4f (<= 0.01); state %zu B",
                    p64, p4096, rel, model.make_state().state_bytes()));
}

struct TrainedRun {
  TrainConfig cfg;
  TrainResult result;
  GlimpseModel<float> model;
  double seconds = 0;
};

TrainedRun train_or_resume(const fs::path& config, const fs::path& out, bool fresh) {
  TrainConfig cfg = load_train_config(config);
  if (fresh) fs::remove_all(out);
  TrainOptions opts;
  opts.resume = true;
  std::ofstream log(out.string() + ".log", std::ios::app);
  opts.log = &log;
  const auto start = std::chrono::steady_clock::now();
  auto result = train(cfg, out, opts);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  auto model = load_model(read_checkpoint(result.last_checkpoint));
  return {cfg, std::move(result), std::move(model), seconds};
}

EvalJob curve_job(const std::string& name) {
  EvalJob job;
  job.name = name;
  job.resolutions = {32};
  job.t_max = 512;
  job.probes = power_of_two_probes(512);
  job.seeds = {0, 1, 2};
  return job;
}

std::string curve_text(const CurveTable& t) {
  std::string s;
  for (const auto& p : t.points) s += printf_str("%s%d:%.3f", s.empty() ? "" : " ", p.t, p.top1);
  return s;
}

/// Largest drop between consecutive probes before the curve first comes within
/// `noise` of its maximum.
double drop_before_saturation(const CurveTable& t, double noise) {
  double best = 0;
  for (const auto& p : t.points) best = std::max(best, p.top1);
  double worst = 0;
  for (std::size_t k = 1; k < t.points.size(); ++k) {
    worst = std::max(worst, t.points[k - 1].top1 - t.points[k].top1);
    if (t.points[k].top1 >= best - noise) break;
  }
  return worst;
}

/// Largest drop between any probe and a later one.
double drop_anywhere(const CurveTable& t) {
  double worst = 0;
  double running = 0;
  for (const auto& p : t.points) {
    running = std::max(running, p.top1);
    worst = std::max(worst, running - p.top1);
  }
  return worst;
}

void check_learning(const TrainedRun& run, const CurveTable& curve, const fs::path& runs) {
  emit_report({curve}, runs / "report");
  const auto& last = curve.points.back();
  const double drop = drop_before_saturation(curve, 0.02);
  const bool acc_ok = last.t == 512 && last.top1 >= 0.45;
  const bool shape_ok = drop <= 0.02;
  const bool budget_ok = run.cfg.epochs <= 30 && run.cfg.steps == 256 &&
                         run.cfg.policy == ScanKind::RandomImage && run.cfg.model.name == "micro-4";
  report(9, "toy-scale learning", acc_ok && shape_ok && budget_ok,
         printf_str("top-1 at T=512 %.4f +- %.4f (>= 0.45) after %d epochs; largest drop before "
                    "saturation %.4f (<= 0.02), after it %.4f; curve %s",
                    last.top1, last.top1_stderr, run.cfg.epochs, drop, drop_anywhere(curve),
                    curve_text(curve).c_str()));
}

void check_scan_ablation(const TrainedRun& run, const Dataset& test, const fs::path& runs) {
  EvalJob job;
  job.name = "ablate-scan";
  job.resolutions = {32, 64, 128};
  job.t_max = 256;
  job.probes = power_of_two_probes(256);
  job.seeds = {0, 1, 2};
  const auto tables = ablate_scan(run.model, test, job);
  emit_report(tables, runs / "report");
  write_scan_table(tables, runs / "report" / "ablate-scan.csv");
  const int res = job.resolutions.back();
  const CurveTable* random = nullptr;
  const CurveTable* raster = nullptr;
  const CurveTable* zigzag = nullptr;
  for (const auto& t : tables) {
    if (t.resolution != res) continue;
    if (t.policy == ScanKind::RandomImage) random = &t;
    if (t.policy == ScanKind::RasterHorizontal) raster = &t;
    if (t.policy == ScanKind::ZigzagHorizontal) zigzag = &t;
  }
  const auto& r = random->points.back();
  const auto& ra = raster->points.back();
  const auto& zz = zigzag->points.back();
  // Fixed patterns are seed-free, so their standard error is zero.
  const double se_ra = std::hypot(r.top1_stderr, ra.top1_stderr);
  const double se_zz = std::hypot(r.top1_stderr, zz.top1_stderr);
  const bool passed = r.top1 - ra.top1 > 2 * se_ra && r.top1 - zz.top1 > 2 * se_zz;
  report(10, "scan ablation direction", passed,
         printf_str("res %d, T=%d: random %.4f +- %.4f (%zu seeds), raster %.4f, zigzag %.4f; "
                    "margins %.4f and %.4f vs 2 stderr %.4f / %.4f",
                    res, r.t, r.top1, r.top1_stderr, random->seeds.size(), ra.top1, zz.top1,
                    r.top1 - ra.top1, r.top1 - zz.top1, 2 * se_ra, 2 * se_zz));
}

void check_loss_ablation(const CurveTable& sched, const CurveTable& ce) {
  const auto& s = sched.points.back();
  const auto& c = ce.points.back();
  const double se = std::hypot(s.top1_stderr, c.top1_stderr);
  const bool ahead = s.top1 >= c.top1;
  std::string detail = printf_str("T=%d res %d: scheduled %.4f +- %.4f, standard-ce %.4f +- %.4f (%zu seeds)",
                                  s.t, sched.resolution, s.top1, s.top1_stderr, c.top1, c.top1_stderr,
                                  sched.seeds.size());
  if (!ahead) {
    detail += printf_str("; reversal of %.4f (%s 2 stderr = %.4f), flagged for investigation",
                         c.top1 - s.top1, c.top1 - s.top1 <= 2 * se ? "within" : "beyond", 2 * se);
  }
  report(11, "loss ablation direction", ahead, detail, /*soft=*/true);
}

void check_determinism(const GlimpseModel<float>& model, const Dataset& test, const fs::path& runs) {
  TrainConfig cfg;
  cfg.model = ModelConfig::preset("micro-2");
  cfg.data.source = "synthetic-shapes";
  cfg.data.train_samples = 48;
  cfg.data.test_samples = 16;
  cfg.model.num_classes = 10;
  cfg.canvas_min = 32;
  cfg.canvas_max = 40;
  cfg.epochs = 2;
  cfg.steps = 32;
  cfg.batch_size = 8;
  cfg.eval_steps = 32;
  cfg.policy = ScanKind::RandomMixed;
  cfg.augment.scale_min = 1.0;
  cfg.augment.scale_max = 1.5;
  cfg.seed = 5;
  const fs::path a = runs / "determinism_a";
  const fs::path b = runs / "determinism_b";
  fs::remove_all(a);
  fs::remove_all(b);
  train(cfg, a);
  train(cfg, b);
  const bool train_same = slurp(a / "metrics.csv") == slurp(b / "metrics.csv") &&
                          !slurp(a / "metrics.csv").empty();

  EvalJob job;
  job.name = "determinism";
  job.resolutions = {32, 64};
  job.policies = {ScanKind::RandomImage, ScanKind::RasterHorizontal};
  job.t_max = 64;
  job.probes = power_of_two_probes(64);
  job.seeds = {0, 1, 2};
  job.max_samples = 100;
  const auto files_a = emit_report(evaluate(model, test, job), runs / "determinism_eval_a");
  const auto files_b = emit_report(evaluate(model, test, job), runs / "determinism_eval_b");
  bool eval_same = files_a.size() == files_b.size();
  for (std::size_t i = 0; eval_same && i < files_a.size(); ++i) {
    eval_same = slurp(files_a[i]) == slurp(files_b[i]);
  }
  report(12, "determinism", train_same && eval_same,
         printf_str("train metrics.csv identical: %s; %zu eval report files identical: %s",
                    train_same ? "yes" : "no", files_a.size(), eval_same ? "yes" : "no"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string runs_dir = "acceptance_runs";
  std::string config_dir = MAMBAEYE_CONFIG_DIR;
  bool fresh = false;
  bool quick = false;
  app.add_option("--runs", runs_dir, "Directory for training runs and reports");
  app.add_option("--configs", config_dir, "Directory holding the training configs");
  app.add_flag("--fresh", fresh, "Discard cached training runs");
  app.add_flag("--quick", quick, "Only the criteria that need no training (1-8)");
  CLI11_PARSE(app, argc, argv);

  try {
    run_selfchecks({{1, "dual-mode"},
                    {2, "scan"},
                    {3, "gradient"},
                    {4, "loss-endpoints"},
                    {5, "coverage"},
                    {6, "translation"}});
    check_constant_memory();
    run_selfchecks({{8, "flops"}});
    if (!quick) {
      const fs::path runs = fs::absolute(runs_dir);
      fs::create_directories(runs);
      const auto sched = train_or_resume(fs::path(config_dir) / "micro4_shapes.ini", runs / "scheduled", fresh);
      std::printf("        trained scheduled run: %d epochs, %.0fs this invocation\n", sched.cfg.epochs,
                  sched.seconds);
      const Dataset test = load_splits(sched.cfg.data).test;
      const auto sched_curve = evaluate(sched.model, test, curve_job("curve-scheduled")).front();
      check_learning(sched, sched_curve, runs);
      check_scan_ablation(sched, test, runs);

      const auto ce = train_or_resume(fs::path(config_dir) / "micro4_shapes_ce.ini", runs / "standard-ce", fresh);
      std::printf("        trained standard-ce run: %d epochs, %.0fs this invocation\n", ce.cfg.epochs,
                  ce.seconds);
      const auto ce_curve = evaluate(ce.model, test, curve_job("curve-standard-ce")).front();
      emit_report({ce_curve}, runs / "report");
      check_loss_ablation(sched_curve, ce_curve);
      check_determinism(sched.model, test, runs);
    }
  } catch (const std::exception& e) {
    std::printf("[FAIL] acceptance run aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d hard criterion failure(s)\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
