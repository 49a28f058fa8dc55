#include "mambaeye/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace mambaeye {

GradCheckReport fd_gradient_check(const std::function<double(std::span<const double>)>& f,
                                  std::span<const double> x, std::span<const double> analytic,
                                  const GradCheckOptions& options) {
  if (!(options.eps > 0.0)) throw std::invalid_argument("fd_gradient_check: eps must be > 0");
  if (x.size() != analytic.size()) {
    throw std::invalid_argument("fd_gradient_check: gradient length does not match parameters");
  }
  const double first = f(x);
  const double second = f(x);
  if (first != second && !(std::isnan(first) && std::isnan(second))) {
    throw NonDeterministicError("fd_gradient_check: f is not deterministic under a fixed seed");
  }

  std::vector<std::size_t> coords(x.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (coords.size() > options.max_coords) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.max_coords);
    std::sort(coords.begin(), coords.end());
  }

  std::vector<double> probe(x.begin(), x.end());
  GradCheckReport report;
  for (std::size_t i : coords) {
    const double orig = probe[i];
    probe[i] = orig + options.eps;
    const double up = f(probe);
    probe[i] = orig - options.eps;
    const double down = f(probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * options.eps);
    const double err = std::abs(analytic[i] - numeric) / (std::abs(numeric) + 1e-12);
    if (err > report.max_rel_error || report.coords_checked == 0) {
      report.max_rel_error = err;
      report.worst_index = i;
      report.worst_analytic = analytic[i];
      report.worst_numeric = numeric;
    }
    ++report.coords_checked;
  }
  return report;
}

}  // namespace mambaeye
