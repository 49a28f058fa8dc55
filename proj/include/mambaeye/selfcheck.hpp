#pragma once

// Oracle checks that need no data or checkpoint: dual-mode equivalence, the
// brute-force scan, finite-difference gradients, loss endpoints, coverage,
// translation invariance and FLOP linearity.

#include <functional>
#include <string>
#include <vector>

namespace mambaeye {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

CheckResult check_dual_mode();
CheckResult check_scan_bruteforce();
CheckResult check_gradient();
CheckResult check_loss_endpoints();
CheckResult check_coverage();
CheckResult check_translation_invariance();
CheckResult check_flops_linearity();

struct NamedCheck {
  std::string name;
  std::function<CheckResult()> run;
};

std::vector<NamedCheck> selfcheck_suite();

/// Runs a check, filling in timing and turning exceptions into failures.
CheckResult run_check(const NamedCheck& check);

}  // namespace mambaeye
