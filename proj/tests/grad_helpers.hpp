#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "mambaeye/autograd.hpp"
#include "mambaeye/gradcheck.hpp"
#include "mambaeye/rng.hpp"
#include "mambaeye/tensor.hpp"

namespace testutil {

using mambaeye::Tape;
using mambaeye::Tensor;
using mambaeye::Var;

using Builder = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

inline Tensor<double> random_tensor(mambaeye::Shape shape, std::uint64_t seed, double lo = -1.0,
                                    double hi = 1.0) {
  mambaeye::Rng rng(seed);
  Tensor<double> t(std::move(shape));
  for (double& v : t.vec()) v = mambaeye::uniform(rng, lo, hi);
  return t;
}

inline Tensor<float> random_tensor_f(mambaeye::Shape shape, std::uint64_t seed, double lo = -1.0,
                                     double hi = 1.0) {
  return mambaeye::tensor_cast<float>(random_tensor(std::move(shape), seed, lo, hi));
}

/// Runs the builder on a fresh tape over `inputs` and checks the tape
/// gradient against central differences; returns the max relative error.
inline double check_graph(const Builder& build, const std::vector<Tensor<double>>& inputs,
                          mambaeye::GradCheckOptions options = {}) {
  std::vector<double> flat;
  for (const auto& t : inputs) flat.insert(flat.end(), t.vec().begin(), t.vec().end());

  auto unflatten = [&](std::span<const double> x) {
    std::vector<Tensor<double>> ts;
    std::size_t off = 0;
    for (const auto& t : inputs) {
      Tensor<double> u(t.shape());
      for (std::size_t i = 0; i < u.size(); ++i) u[i] = x[off + i];
      off += u.size();
      ts.push_back(std::move(u));
    }
    return ts;
  };

  Tape<double> tape;
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
  tape.backward(build(tape, leaves));
  std::vector<double> analytic;
  for (Var v : leaves) {
    const auto g = tape.grad(v);
    analytic.insert(analytic.end(), g.vec().begin(), g.vec().end());
  }

  auto f = [&](std::span<const double> x) {
    Tape<double> t;
    std::vector<Var> ls;
    for (auto& u : unflatten(x)) ls.push_back(t.leaf(std::move(u)));
    return t.value(build(t, ls)).item();
  };
  return mambaeye::fd_gradient_check(f, flat, analytic, options).max_rel_error;
}

}  // namespace testutil
