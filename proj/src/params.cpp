#include "mambaeye/params.hpp"

#include <cmath>
#include <random>

namespace mambaeye::init {

template <typename T>
void truncated_normal(Tensor<T>& t, double std, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  for (T& v : t.vec()) {
    double x = dist(rng);
    while (std::abs(x) > 2.0) x = dist(rng);
    v = static_cast<T>(x * std);
  }
}

template <typename T>
void uniform(Tensor<T>& t, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (T& v : t.vec()) v = static_cast<T>(dist(rng));
}

template void truncated_normal<float>(Tensor<float>&, double, Rng&);
template void truncated_normal<double>(Tensor<double>&, double, Rng&);
template void uniform<float>(Tensor<float>&, double, double, Rng&);
template void uniform<double>(Tensor<double>&, double, double, Rng&);

}  // namespace mambaeye::init
