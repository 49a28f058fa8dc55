#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mambaeye/rng.hpp"
#include "mambaeye/tensor.hpp"

namespace mambaeye {

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T>* tensor;
};

template <typename T>
struct ConstNamedParam {
  std::string name;
  const Tensor<T>* tensor;
};

template <typename T>
std::size_t count_parameters(const std::vector<ConstNamedParam<T>>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor->size();
  return n;
}

namespace init {

/// Normal(0, std) resampled outside +-2 std.
template <typename T>
void truncated_normal(Tensor<T>& t, double std, Rng& rng);

template <typename T>
void uniform(Tensor<T>& t, double lo, double hi, Rng& rng);

}  // namespace init

}  // namespace mambaeye
