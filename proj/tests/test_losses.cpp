#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "grad_helpers.hpp"
#include "mambaeye/losses.hpp"

using namespace mambaeye;

TEST(ScheduledTarget, HalfRatioExample) {
  const auto p = scheduled_target(4, 2, 0.5);
  EXPECT_DOUBLE_EQ(p[0], 0.125);
  EXPECT_DOUBLE_EQ(p[1], 0.125);
  EXPECT_DOUBLE_EQ(p[2], 0.625);
  EXPECT_DOUBLE_EQ(p[3], 0.125);
}

TEST(ScheduledTarget, RejectsRatioOutsideUnitInterval) {
  EXPECT_THROW(scheduled_target(4, 0, -0.01), std::invalid_argument);
  EXPECT_THROW(scheduled_target(4, 0, 1.01), std::invalid_argument);
  EXPECT_THROW(scheduled_target(4, 0, std::nan("")), std::invalid_argument);
  EXPECT_THROW(scheduled_target(4, 4, 0.5), std::invalid_argument);
}

TEST(ScheduledTarget, SumsToOneAndIsMonotone) {
  for (int n : {2, 3, 10, 1000}) {
    double prev = -1;
    for (int i = 0; i <= 100; ++i) {
      const double r = i / 100.0;
      const auto p = scheduled_target(n, n - 1, r);
      EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
      EXPECT_GE(p.back(), prev);
      prev = p.back();
    }
  }
}

TEST(SequenceLoss, ZeroLogitsGiveLogN) {
  const std::vector<double> r{0.0, 0.3, 1.0};
  const auto targets = build_targets<double>(7, 2, r, LossMode::Scheduled);
  EXPECT_NEAR(sequence_loss_value(Tensor<double>({3, 7}, 0.0), targets), std::log(7.0), 1e-12);
}

TEST(SequenceLoss, TwoStepExample) {
  // Rows (ln 3, 0) with label 0, ratios (0, 1): step 0 has a uniform target,
  // step 1 is one-hot. Per-step CE: ln 4 - ln(3)/2 and ln 4 - ln 3.
  Tensor<double> logits({2, 2}, {std::log(3.0), 0.0, std::log(3.0), 0.0});
  const std::vector<double> r{0.0, 1.0};
  const double want = 0.5 * ((std::log(4.0) - 0.5 * std::log(3.0)) + (std::log(4.0) - std::log(3.0)));
  EXPECT_NEAR(sequence_loss_value(logits, build_targets<double>(2, 0, r, LossMode::Scheduled)),
              want, 1e-12);
}

TEST(SequenceLoss, FullRatioEqualsStandardCrossEntropyBitwise) {
  const auto logits = testutil::random_tensor({16, 10}, 3, -4, 4);
  const std::vector<double> ones(16, 1.0), ratios(16, 0.4);
  const auto sched = build_targets<double>(10, 6, ones, LossMode::Scheduled);
  const auto ce = build_targets<double>(10, 6, ratios, LossMode::StandardCE);
  EXPECT_EQ(sched.vec(), ce.vec());
  EXPECT_EQ(sequence_loss_value(logits, sched), sequence_loss_value(logits, ce));
}

TEST(SequenceLoss, PermutationEquivariant) {
  const auto logits = testutil::random_tensor({4, 5}, 4);
  const std::vector<double> r{0.1, 0.2, 0.6, 0.9};
  const int perm[5] = {3, 0, 4, 1, 2};
  Tensor<double> permuted({4, 5});
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t k = 0; k < 5; ++k) permuted.at(t, static_cast<std::size_t>(perm[k])) = logits.at(t, k);
  const double a = sequence_loss_value(logits, build_targets<double>(5, 1, r, LossMode::Scheduled));
  const double b =
      sequence_loss_value(permuted, build_targets<double>(5, perm[1], r, LossMode::Scheduled));
  EXPECT_NEAR(a, b, 1e-12);
}

TEST(SequenceLoss, RejectsNonFiniteLogits) {
  Tensor<double> logits({1, 3}, 0.0);
  logits[1] = std::numeric_limits<double>::infinity();
  const std::vector<double> r{0.5};
  EXPECT_THROW(sequence_loss_value(logits, build_targets<double>(3, 0, r, LossMode::Scheduled)),
               std::domain_error);
}

TEST(SequenceLoss, GradientMatchesFiniteDifferences) {
  const std::vector<double> r{0.05, 0.4, 0.7, 1.0};
  const auto targets = build_targets<double>(6, 4, r, LossMode::Scheduled);
  const double err = testutil::check_graph(
      [&](Tape<double>& t, const std::vector<Var>& v) { return sequence_loss(t, v[0], targets); },
      {testutil::random_tensor({4, 6}, 5, -2, 2)});
  EXPECT_LE(err, 1e-6);
}
