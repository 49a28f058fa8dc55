#pragma once

// Information-ratio scheduled targets: the label mass grows with the fraction
// of the image seen so far, the rest is spread uniformly.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mambaeye/autograd.hpp"
#include "mambaeye/tensor.hpp"

namespace mambaeye {

enum class LossMode { Scheduled, StandardCE };

LossMode parse_loss_mode(std::string_view name);
std::string to_string(LossMode mode);

/// target[n] = (1 - r) / N + r * [n == label]. Throws for r outside [0, 1].
std::vector<double> scheduled_target(int num_classes, int label, double r);

/// steps x num_classes targets. `ratios[t]` is the coverage after absorbing
/// glimpse t; StandardCE ignores it and uses one-hot rows.
template <typename T>
Tensor<T> build_targets(int num_classes, int label, std::span<const double> ratios, LossMode mode);

/// Mean over steps of the per-step cross-entropy. Rejects non-finite logits.
template <typename T>
Var sequence_loss(Tape<T>& tape, Var logits, const Tensor<T>& targets);

template <typename T>
double sequence_loss_value(const Tensor<T>& logits, const Tensor<T>& targets);

}  // namespace mambaeye
