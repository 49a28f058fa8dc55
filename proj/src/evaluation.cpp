#include "mambaeye/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mambaeye/rng.hpp"

namespace mambaeye {

std::vector<int> power_of_two_probes(int t_max) {
  std::vector<int> probes;
  for (long t = 1; t <= t_max; t *= 2) probes.push_back(static_cast<int>(t));
  return probes;
}

void EvalJob::validate(int patch) const {
  if (name.empty()) throw EvalError("eval job needs a name");
  if (resolutions.empty()) throw EvalError("eval job has no resolutions");
  if (policies.empty()) throw EvalError("eval job has no policies");
  if (probes.empty()) throw EvalError("eval job has an empty probe list");
  if (seeds.empty()) throw EvalError("eval job has no seeds");
  if (t_max < 1) throw EvalError("t_max must be positive");
  for (int res : resolutions) {
    if (res < patch) {
      throw EvalError("resolution " + std::to_string(res) + " is smaller than the patch size");
    }
  }
  for (std::size_t i = 0; i < probes.size(); ++i) {
    if (probes[i] < 1 || probes[i] > t_max) {
      throw EvalError("probe " + std::to_string(probes[i]) + " outside [1, " +
                      std::to_string(t_max) + "]");
    }
    if (i > 0 && probes[i] <= probes[i - 1]) throw EvalError("probes must be strictly increasing");
  }
}

namespace {

struct SampleTrace {
  std::vector<std::uint8_t> correct;  // per step
  std::vector<double> ratio;          // coverage after each step
  long ties = 0;
};

void run_sample(const GlimpseModel<float>& model, const LabeledImage& sample, int resolution,
                ScanPolicy policy, int steps, RecurrentState<float>& state, GlimpseStep& glimpse,
                std::vector<float>& row, SampleTrace& out) {
  const ModelConfig& cfg = model.config();
  const Canvas canvas = make_eval_canvas(sample.image, resolution);
  TrajectoryCursor cursor(canvas, policy, cfg.patch);
  state.reset();
  out.correct.assign(static_cast<std::size_t>(steps), 0);
  out.ratio.assign(static_cast<std::size_t>(steps), 0.0);
  out.ties = 0;
  for (int t = 0; t < steps; ++t) {
    cursor.next(glimpse);
    build_input_row<float>(glimpse, cfg, row);
    const auto logits = model.step(row, state);
    bool tied = false;
    const int pred = predict_class(logits, &tied);
    out.correct[static_cast<std::size_t>(t)] = pred == sample.label ? 1 : 0;
    out.ratio[static_cast<std::size_t>(t)] = glimpse.r;
    if (tied) ++out.ties;
  }
}

struct SeedResult {
  std::vector<double> accuracy;  // per step
  std::vector<double> mean_r;
  long ties = 0;
};

SeedResult run_seed(const GlimpseModel<float>& model, const Dataset& data, std::size_t n,
                    int resolution, ScanKind kind, std::uint64_t seed, int steps) {
  std::vector<SampleTrace> traces(n);
  const long count = static_cast<long>(n);
#pragma omp parallel
  {
    RecurrentState<float> state = model.make_state();
    GlimpseStep glimpse;
    std::vector<float> row(static_cast<std::size_t>(model.config().d_input()));
#pragma omp for schedule(dynamic)
    for (long i = 0; i < count; ++i) {
      const auto idx = static_cast<std::uint64_t>(i);
      const ScanPolicy policy{kind, derive_seed(seed, {static_cast<std::uint64_t>(resolution), idx})};
      run_sample(model, data.samples[static_cast<std::size_t>(i)], resolution, policy, steps, state,
                 glimpse, row, traces[static_cast<std::size_t>(i)]);
    }
  }
  SeedResult result;
  result.accuracy.assign(static_cast<std::size_t>(steps), 0.0);
  result.mean_r.assign(static_cast<std::size_t>(steps), 0.0);
  std::vector<long> hits(static_cast<std::size_t>(steps), 0);
  for (const auto& tr : traces) {
    for (std::size_t t = 0; t < hits.size(); ++t) {
      hits[t] += tr.correct[t];
      result.mean_r[t] += tr.ratio[t];
    }
    result.ties += tr.ties;
  }
  const double inv = n == 0 ? 0.0 : 1.0 / static_cast<double>(n);
  for (std::size_t t = 0; t < hits.size(); ++t) {
    result.accuracy[t] = static_cast<double>(hits[t]) * inv;
    result.mean_r[t] *= inv;
  }
  return result;
}

std::string format_fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw std::runtime_error("cannot create output directory " + dir.string());
  }
}

}  // namespace

std::vector<CurveTable> evaluate(const GlimpseModel<float>& model, const Dataset& data,
                                 const EvalJob& job, std::ostream* log) {
  job.validate(model.config().patch);
  if (data.size() == 0) throw EvalError("evaluation split is empty");
  const std::size_t n = job.max_samples == 0 ? data.size() : std::min(job.max_samples, data.size());
  const int steps = job.probes.back();

  std::vector<CurveTable> tables;
  for (int res : job.resolutions) {
    for (ScanKind kind : job.policies) {
      CurveTable table;
      table.job = job.name;
      table.resolution = res;
      table.policy = kind;
      table.samples = n;
      if (is_deterministic(kind)) {
        table.seeds = {job.seeds.front()};
      } else {
        table.seeds = job.seeds;
      }

      std::vector<SeedResult> runs;
      for (std::uint64_t seed : table.seeds) {
        runs.push_back(run_seed(model, data, n, res, kind, seed, steps));
        table.ties += runs.back().ties;
      }
      const double s = static_cast<double>(runs.size());
      table.trace.assign(static_cast<std::size_t>(steps), 0.0);
      for (const auto& run : runs) {
        for (std::size_t t = 0; t < table.trace.size(); ++t) table.trace[t] += run.accuracy[t] / s;
      }
      for (int probe : job.probes) {
        const auto t = static_cast<std::size_t>(probe - 1);
        CurvePoint p;
        p.t = probe;
        double sum = 0;
        double r_sum = 0;
        for (const auto& run : runs) {
          sum += run.accuracy[t];
          r_sum += run.mean_r[t];
        }
        p.top1 = sum / s;
        p.mean_r = r_sum / s;
        if (runs.size() > 1) {
          double ss = 0;
          for (const auto& run : runs) ss += (run.accuracy[t] - p.top1) * (run.accuracy[t] - p.top1);
          p.top1_stderr = std::sqrt(ss / (s - 1.0)) / std::sqrt(s);
        }
        table.points.push_back(p);
      }
      if (log != nullptr) {
        *log << job.name << " " << to_string(kind) << " res " << res << ": top-1 at t="
             << table.points.back().t << " " << format_fixed(table.points.back().top1) << " +- "
             << format_fixed(table.points.back().top1_stderr) << " (" << table.seeds.size()
             << " seed(s), " << n << " samples)\n";
        if (table.ties > 0) {
          *log << "  " << table.ties << " tied predictions resolved to the lowest class index\n";
        }
      }
      tables.push_back(std::move(table));
    }
  }
  return tables;
}

std::vector<CurveTable> ablate_scan(const GlimpseModel<float>& model, const Dataset& data,
                                    EvalJob job, std::ostream* log) {
  job.policies = {ScanKind::RandomImage, ScanKind::RasterHorizontal, ScanKind::ZigzagHorizontal};
  return evaluate(model, data, job, log);
}

std::vector<LossAblationRow> ablate_loss(const GlimpseModel<float>& scheduled,
                                         const GlimpseModel<float>& standard, const Dataset& data,
                                         const EvalJob& job, std::ostream* log) {
  if (!(scheduled.config() == standard.config())) {
    throw EvalError("loss ablation needs checkpoints with the same model config");
  }
  EvalJob random_job = job;
  random_job.policies = {ScanKind::RandomImage};
  const auto a = evaluate(scheduled, data, random_job, log);
  const auto b = evaluate(standard, data, random_job, log);
  std::vector<LossAblationRow> rows;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t k = 0; k < a[i].points.size(); ++k) {
      for (const auto* side : {&a[i], &b[i]}) {
        LossAblationRow row;
        row.loss = side == &a[i] ? LossMode::Scheduled : LossMode::StandardCE;
        row.resolution = side->resolution;
        row.t = side->points[k].t;
        row.top1 = side->points[k].top1;
        row.top1_stderr = side->points[k].top1_stderr;
        row.seeds = side->seeds.size();
        rows.push_back(row);
      }
    }
  }
  return rows;
}

double difference_autocorrelation(const std::vector<double>& trace, int lag) {
  if (trace.size() < 2 || lag < 1) return 0.0;
  std::vector<double> d(trace.size() - 1);
  for (std::size_t i = 0; i + 1 < trace.size(); ++i) d[i] = trace[i + 1] - trace[i];
  const auto l = static_cast<std::size_t>(lag);
  if (l >= d.size()) return 0.0;
  double mean = 0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(d.size());
  double num = 0;
  double den = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    den += (d[i] - mean) * (d[i] - mean);
    if (i + l < d.size()) num += (d[i] - mean) * (d[i + l] - mean);
  }
  return den == 0.0 ? 0.0 : num / den;
}

int eval_grid_width(int resolution, int patch, int image_width, int image_height) {
  const double scale = static_cast<double>(resolution) / std::max(image_width, image_height);
  const int w = image_width >= image_height
                    ? resolution
                    : std::max(1, static_cast<int>(std::lround(image_width * scale)));
  return w / patch;
}

std::string curve_svg(const CurveTable& table) {
  if (table.points.empty()) throw EvalError("cannot plot an empty curve");
  constexpr double width = 480;
  constexpr double height = 320;
  constexpr double left = 56;
  constexpr double right = 16;
  constexpr double top = 32;
  constexpr double bottom = 48;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  const double lo = std::log2(static_cast<double>(table.points.front().t));
  const double hi = std::log2(static_cast<double>(table.points.back().t));
  auto px = [&](int t) {
    if (hi <= lo) return left + plot_w / 2;
    return left + (std::log2(static_cast<double>(t)) - lo) / (hi - lo) * plot_w;
  };
  auto py = [&](double acc) { return top + (1.0 - acc) * plot_h; };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << num(width / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">"
      << table.job << " " << to_string(table.policy) << " " << table.resolution << "px</text>\n";
  svg << "<line x1=\"" << num(left) << "\" y1=\"" << num(top + plot_h) << "\" x2=\""
      << num(left + plot_w) << "\" y2=\"" << num(top + plot_h) << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << num(left) << "\" y1=\"" << num(top) << "\" x2=\"" << num(left)
      << "\" y2=\"" << num(top + plot_h) << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double acc = k / 4.0;
    svg << "<text x=\"" << num(left - 6) << "\" y=\"" << num(py(acc) + 4)
        << "\" text-anchor=\"end\" font-size=\"10\">" << num(acc) << "</text>\n";
  }
  for (const auto& p : table.points) {
    svg << "<text x=\"" << num(px(p.t)) << "\" y=\"" << num(top + plot_h + 14)
        << "\" text-anchor=\"middle\" font-size=\"10\">" << p.t << "</text>\n";
  }
  svg << "<text x=\"" << num(left + plot_w / 2) << "\" y=\"" << num(height - 8)
      << "\" text-anchor=\"middle\" font-size=\"12\">t</text>\n";
  svg << "<text x=\"14\" y=\"" << num(top + plot_h / 2) << "\" text-anchor=\"middle\" font-size=\"12\""
      << " transform=\"rotate(-90 14 " << num(top + plot_h / 2) << ")\">top-1</text>\n";
  if (table.points.size() > 1) {
    svg << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < table.points.size(); ++i) {
      if (i > 0) svg << " ";
      svg << num(px(table.points[i].t)) << "," << num(py(table.points[i].top1));
    }
    svg << "\"/>\n";
  }
  for (const auto& p : table.points) {
    svg << "<circle cx=\"" << num(px(p.t)) << "\" cy=\"" << num(py(p.top1))
        << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<std::filesystem::path> emit_report(const std::vector<CurveTable>& tables,
                                               const std::filesystem::path& out_dir) {
  if (tables.empty()) throw EvalError("no tables to report");
  for (const auto& t : tables) {
    if (t.points.empty()) throw EvalError("table " + t.job + " has no probe points");
  }
  ensure_dir(out_dir);
  std::vector<std::filesystem::path> written;
  for (const auto& t : tables) {
    const std::string stem = t.job + "_" + to_string(t.policy) + "_" + std::to_string(t.resolution);
    const auto csv_path = out_dir / (stem + ".csv");
    auto csv = open_output(csv_path);
    csv << "t,top1,top1_stderr,mean_r,seeds\n";
    for (const auto& p : t.points) {
      csv << p.t << "," << format_fixed(p.top1) << "," << format_fixed(p.top1_stderr) << ","
          << format_fixed(p.mean_r) << "," << t.seeds.size() << "\n";
    }
    if (!csv) throw std::runtime_error("write failed: " + csv_path.string());
    written.push_back(csv_path);
    const auto svg_path = out_dir / (stem + ".svg");
    auto svg = open_output(svg_path);
    svg << curve_svg(t);
    if (!svg) throw std::runtime_error("write failed: " + svg_path.string());
    written.push_back(svg_path);
  }
  return written;
}

void write_scan_table(const std::vector<CurveTable>& tables, const std::filesystem::path& path) {
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  auto out = open_output(path);
  out << "policy,resolution,T,top1,top1_stderr,seeds\n";
  for (const auto& t : tables) {
    for (const auto& p : t.points) {
      out << to_string(t.policy) << "," << t.resolution << "," << p.t << "," << format_fixed(p.top1)
          << "," << format_fixed(p.top1_stderr) << "," << t.seeds.size() << "\n";
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_loss_table(const std::vector<LossAblationRow>& rows, const std::filesystem::path& path) {
  if (rows.empty()) throw EvalError("no loss ablation rows");
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  auto out = open_output(path);
  out << "loss_mode,resolution,T,top1\n";
  for (const auto& r : rows) {
    out << to_string(r.loss) << "," << r.resolution << "," << r.t << "," << format_fixed(r.top1) << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
  auto detail_path = path;
  detail_path.replace_filename(path.stem().string() + "_stderr.csv");
  auto detail = open_output(detail_path);
  detail << "loss_mode,resolution,T,top1,top1_stderr,seeds\n";
  for (const auto& r : rows) {
    detail << to_string(r.loss) << "," << r.resolution << "," << r.t << "," << format_fixed(r.top1)
           << "," << format_fixed(r.top1_stderr) << "," << r.seeds << "\n";
  }
  if (!detail) throw std::runtime_error("write failed: " + detail_path.string());
}

}  // namespace mambaeye
