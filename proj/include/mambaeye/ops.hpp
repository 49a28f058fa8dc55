#pragma once

// Differentiable tensor ops recorded on a Tape. Matrices are rank-2 views
// (rows x cols); a "row" operand is any tensor with exactly `cols` elements.
// Shape mismatches throw ShapeError naming both shapes.

#include <cstddef>
#include <vector>

#include "mambaeye/autograd.hpp"
#include "mambaeye/tensor.hpp"

namespace mambaeye::ops {

template <typename T> Var matmul(Tape<T>& tape, Var a, Var b);
/// x * w + bias; `bias` may be an invalid Var.
template <typename T> Var linear(Tape<T>& tape, Var x, Var w, Var bias);

template <typename T> Var add(Tape<T>& tape, Var a, Var b);
template <typename T> Var mul(Tape<T>& tape, Var a, Var b);
template <typename T> Var add_row(Tape<T>& tape, Var a, Var row);
template <typename T> Var mul_row(Tape<T>& tape, Var a, Var row);
/// x is rows x (heads * head_dim), s is rows x heads (or 1 x heads, broadcast);
/// scales each head block.
template <typename T> Var mul_heads(Tape<T>& tape, Var x, Var s);
template <typename T> Var scale(Tape<T>& tape, Var a, T factor);

template <typename T> Var exp(Tape<T>& tape, Var a);
template <typename T> Var log(Tape<T>& tape, Var a);
template <typename T> Var neg(Tape<T>& tape, Var a);
template <typename T> Var silu(Tape<T>& tape, Var a);
/// Exact (erf) GELU.
template <typename T> Var gelu(Tape<T>& tape, Var a);
template <typename T> Var softplus(Tape<T>& tape, Var a);

template <typename T> Var softmax(Tape<T>& tape, Var a);
template <typename T> Var log_softmax(Tape<T>& tape, Var a);
/// Row-wise log-sum-exp; result is rows x 1.
template <typename T> Var logsumexp(Tape<T>& tape, Var a);

template <typename T> Var rms_norm(Tape<T>& tape, Var x, Var weight, double eps);
template <typename T> Var conv1d_causal(Tape<T>& tape, Var x, Var weight, Var bias);

/// Selective scan (see kernels::scan_chunked). decay: steps x heads,
/// u: steps x (heads * head_dim), b, c: steps x state.
template <typename T>
Var selective_scan(Tape<T>& tape, Var decay, Var u, Var b, Var c, std::size_t chunk);

template <typename T> Var slice_cols(Tape<T>& tape, Var x, std::size_t begin, std::size_t end);
template <typename T> Var concat_cols(Tape<T>& tape, const std::vector<Var>& parts);

template <typename T> Var sum(Tape<T>& tape, Var a);
template <typename T> Var mean(Tape<T>& tape, Var a);

/// Mean over rows of CE(p_r, y_r) = sum_n p_rn * (logsumexp(y_r) - y_rn).
template <typename T>
Var soft_cross_entropy(Tape<T>& tape, Var logits, const Tensor<T>& target);

}  // namespace mambaeye::ops
