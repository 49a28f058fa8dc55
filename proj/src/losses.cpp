#include "mambaeye/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "mambaeye/ops.hpp"

namespace mambaeye {

LossMode parse_loss_mode(std::string_view name) {
  if (name == "scheduled") return LossMode::Scheduled;
  if (name == "standard-ce" || name == "ce") return LossMode::StandardCE;
  throw std::invalid_argument("unknown loss mode '" + std::string(name) + "'");
}

std::string to_string(LossMode mode) {
  return mode == LossMode::Scheduled ? "scheduled" : "standard-ce";
}

std::vector<double> scheduled_target(int num_classes, int label, double r) {
  if (!(r >= 0.0 && r <= 1.0)) {
    throw std::invalid_argument("information ratio " + std::to_string(r) + " is outside [0, 1]");
  }
  if (num_classes < 1 || label < 0 || label >= num_classes) {
    throw std::invalid_argument("label " + std::to_string(label) + " is out of range for " +
                                std::to_string(num_classes) + " classes");
  }
  std::vector<double> p(static_cast<std::size_t>(num_classes), (1.0 - r) / num_classes);
  p[static_cast<std::size_t>(label)] += r;
  return p;
}

template <typename T>
Tensor<T> build_targets(int num_classes, int label, std::span<const double> ratios, LossMode mode) {
  const std::size_t n = static_cast<std::size_t>(num_classes);
  Tensor<T> out({ratios.size(), n});
  for (std::size_t t = 0; t < ratios.size(); ++t) {
    const double r = mode == LossMode::Scheduled ? ratios[t] : 1.0;
    const auto row = scheduled_target(num_classes, label, r);
    for (std::size_t k = 0; k < n; ++k) out[t * n + k] = static_cast<T>(row[k]);
  }
  return out;
}

template <typename T>
Var sequence_loss(Tape<T>& tape, Var logits, const Tensor<T>& targets) {
  if (!tape.value(logits).all_finite()) throw std::domain_error("non-finite logits in loss");
  return ops::soft_cross_entropy(tape, logits, targets);
}

template <typename T>
double sequence_loss_value(const Tensor<T>& logits, const Tensor<T>& targets) {
  Tape<T> tape;
  return static_cast<double>(tape.value(sequence_loss(tape, tape.constant(logits), targets)).item());
}

#define MAMBAEYE_LOSSES_INSTANTIATE(T)                                                        \
  template Tensor<T> build_targets<T>(int, int, std::span<const double>, LossMode);           \
  template Var sequence_loss<T>(Tape<T>&, Var, const Tensor<T>&);                             \
  template double sequence_loss_value<T>(const Tensor<T>&, const Tensor<T>&);

MAMBAEYE_LOSSES_INSTANTIATE(float)
MAMBAEYE_LOSSES_INSTANTIATE(double)

#undef MAMBAEYE_LOSSES_INSTANTIATE

}  // namespace mambaeye
