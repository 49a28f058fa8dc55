#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>

namespace mambaeye {

class NonDeterministicError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GradCheckOptions {
  double eps = 1e-5;
  /// Coordinates to probe; all of them when the parameter vector is smaller.
  std::size_t max_coords = 200;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Central-difference check of `analytic` against f at x. The error per
/// coordinate is |analytic - numeric| / (|numeric| + 1e-12). Throws
/// NonDeterministicError if two evaluations of f(x) differ.
GradCheckReport fd_gradient_check(const std::function<double(std::span<const double>)>& f,
                                  std::span<const double> x, std::span<const double> analytic,
                                  const GradCheckOptions& options = {});

}  // namespace mambaeye
