#pragma once

// Recurrent-mode evaluation: accuracy-vs-t curves per (resolution, policy),
// scan and loss ablations, and CSV/SVG report emission.

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mambaeye/dataset.hpp"
#include "mambaeye/losses.hpp"
#include "mambaeye/model.hpp"
#include "mambaeye/patchio.hpp"

namespace mambaeye {

class EvalError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// 1, 2, 4, ... up to and including t_max when it is a power of two.
std::vector<int> power_of_two_probes(int t_max);

struct EvalJob {
  std::string name = "eval";
  std::vector<int> resolutions{32, 64, 128};
  std::vector<ScanKind> policies{ScanKind::RandomImage};
  int t_max = 1024;
  /// Steps (1-based glimpse counts) at which accuracy is recorded.
  std::vector<int> probes = power_of_two_probes(1024);
  /// Random policies run once per seed; deterministic ones run once.
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t max_samples = 0;  // 0: whole split

  /// Rejects empty lists, probes outside [1, t_max], unsorted probes and
  /// resolutions smaller than `patch`.
  void validate(int patch) const;
};

struct CurvePoint {
  int t = 0;
  double top1 = 0.0;         // mean over seeds
  double top1_stderr = 0.0;  // standard error of the mean; 0 for one seed
  double mean_r = 0.0;
};

/// One (resolution, policy) curve.
struct CurveTable {
  std::string job;
  int resolution = 0;
  ScanKind policy = ScanKind::RandomImage;
  std::size_t samples = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<CurvePoint> points;
  /// Accuracy at every step 1..t_max, seed-averaged.
  std::vector<double> trace;
  /// Predictions where the top logit was shared; counted over all steps.
  long ties = 0;
};

/// Runs every (resolution, policy) pair of the job with the recurrent step.
/// Samples are evaluated in parallel; results do not depend on thread count.
std::vector<CurveTable> evaluate(const GlimpseModel<float>& model, const Dataset& data,
                                 const EvalJob& job, std::ostream* log = nullptr);

/// The fixed-pattern comparison: random-image, raster and zigzag.
std::vector<CurveTable> ablate_scan(const GlimpseModel<float>& model, const Dataset& data,
                                    EvalJob job, std::ostream* log = nullptr);

struct LossAblationRow {
  LossMode loss = LossMode::Scheduled;
  int resolution = 0;
  int t = 0;
  double top1 = 0.0;
  double top1_stderr = 0.0;
  std::size_t seeds = 0;
};

/// Evaluates both checkpoints on the same job; their model configs must match.
std::vector<LossAblationRow> ablate_loss(const GlimpseModel<float>& scheduled,
                                         const GlimpseModel<float>& standard, const Dataset& data,
                                         const EvalJob& job, std::ostream* log = nullptr);

/// Autocorrelation of the first difference of `trace` at `lag`.
double difference_autocorrelation(const std::vector<double>& trace, int lag);

/// Grid width (in patches) of the image region on an eval canvas.
int eval_grid_width(int resolution, int patch, int image_width, int image_height);

/// Writes `<job>_<policy>_<res>.csv` and `.svg` per table; returns the paths.
std::vector<std::filesystem::path> emit_report(const std::vector<CurveTable>& tables,
                                               const std::filesystem::path& out_dir);

/// `policy,resolution,T,top1,top1_stderr,seeds` for every probe.
void write_scan_table(const std::vector<CurveTable>& tables, const std::filesystem::path& path);

/// `loss_mode,resolution,T,top1`, plus a `<stem>_stderr.csv` with the seed
/// count and standard error per row.
void write_loss_table(const std::vector<LossAblationRow>& rows, const std::filesystem::path& path);

/// SVG line plot of top-1 against t (log2 axis). One point gives a marker.
std::string curve_svg(const CurveTable& table);

}  // namespace mambaeye
