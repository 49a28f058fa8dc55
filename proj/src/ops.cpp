#include "mambaeye/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "mambaeye/kernels.hpp"

namespace mambaeye::ops {

namespace {

using Index = std::ptrdiff_t;

template <typename T>
Tensor<T>* grad_if(Tape<T>& tape, Var v) {
  return tape.requires_grad(v) ? &tape.grad_buffer(v) : nullptr;
}

void require_rank2_compatible(const Shape& a, const Shape& b, std::size_t a_dim, std::size_t b_dim,
                              const char* op) {
  if (a_dim != b_dim) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                     shape_str(b));
  }
}

Shape matrix_shape(std::size_t rows, std::size_t cols) { return Shape{rows, cols}; }

template <typename T, typename Fwd, typename Bwd>
Var unary(Tape<T>& tape, Var a, Fwd fwd, Bwd bwd) {
  const Tensor<T>& x = tape.value(a);
  Tensor<T> y(x.shape());
  const Index n = static_cast<Index>(x.size());
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) y[i] = fwd(x[i]);
  return tape.record(std::move(y), {a}, [a, bwd](Tape<T>& tp, const Tensor<T>& g) {
    Tensor<T>& dx = tp.grad_buffer(a);
    const Tensor<T>& xv = tp.value(a);
    const Index m = static_cast<Index>(xv.size());
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < m; ++i) dx[i] += g[i] * bwd(xv[i]);
  });
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
T softplus_value(T x) {
  return x > T(20) ? x : std::log1p(std::exp(x));
}

}  // namespace

template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  const std::size_t m = av.rows(), k = av.cols();
  const std::size_t bk = bv.rank() == 1 ? bv.size() : bv.dim(0);
  require_rank2_compatible(av.shape(), bv.shape(), k, bk, "matmul");
  const std::size_t n = bv.size() / bk;
  Tensor<T> out(matrix_shape(m, n));
  kernels::matmul(av.data(), bv.data(), out.data(), m, k, n);
  return tape.record(std::move(out), {a, b}, [a, b, m, k, n](Tape<T>& tp, const Tensor<T>& g) {
    if (Tensor<T>* da = grad_if(tp, a)) {
      kernels::matmul_nt(g.data(), tp.value(b).data(), da->data(), m, n, k, true);
    }
    if (Tensor<T>* db = grad_if(tp, b)) {
      kernels::matmul_tn(tp.value(a).data(), g.data(), db->data(), k, m, n, true);
    }
  });
}

template <typename T>
Var linear(Tape<T>& tape, Var x, Var w, Var bias) {
  Var y = matmul(tape, x, w);
  return bias.valid() ? add_row(tape, y, bias) : y;
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  require_same_shape(tape.shape(a), tape.shape(b), "add");
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& tp, const Tensor<T>& g) {
    if (Tensor<T>* da = grad_if(tp, a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i];
    }
    if (Tensor<T>* db = grad_if(tp, b)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] += g[i];
    }
  });
}

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) {
  require_same_shape(tape.shape(a), tape.shape(b), "mul");
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& tp, const Tensor<T>& g) {
    const Tensor<T>& av2 = tp.value(a);
    const Tensor<T>& bv2 = tp.value(b);
    if (Tensor<T>* da = grad_if(tp, a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * bv2[i];
    }
    if (Tensor<T>* db = grad_if(tp, b)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] += g[i] * av2[i];
    }
  });
}

template <typename T>
Var add_row(Tape<T>& tape, Var a, Var row) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& rv = tape.value(row);
  require_rank2_compatible(av.shape(), rv.shape(), av.cols(), rv.size(), "add_row");
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor<T> out(av.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = av[r * cols + j] + rv[j];
  }
  return tape.record(std::move(out), {a, row},
                     [a, row, rows, cols](Tape<T>& tp, const Tensor<T>& g) {
                       if (Tensor<T>* da = grad_if(tp, a)) {
                         for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i];
                       }
                       if (Tensor<T>* dr = grad_if(tp, row)) {
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t j = 0; j < cols; ++j) (*dr)[j] += g[r * cols + j];
                         }
                       }
                     });
}

template <typename T>
Var mul_row(Tape<T>& tape, Var a, Var row) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& rv = tape.value(row);
  require_rank2_compatible(av.shape(), rv.shape(), av.cols(), rv.size(), "mul_row");
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor<T> out(av.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = av[r * cols + j] * rv[j];
  }
  return tape.record(std::move(out), {a, row},
                     [a, row, rows, cols](Tape<T>& tp, const Tensor<T>& g) {
                       const Tensor<T>& av2 = tp.value(a);
                       const Tensor<T>& rv2 = tp.value(row);
                       if (Tensor<T>* da = grad_if(tp, a)) {
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t j = 0; j < cols; ++j) {
                             (*da)[r * cols + j] += g[r * cols + j] * rv2[j];
                           }
                         }
                       }
                       if (Tensor<T>* dr = grad_if(tp, row)) {
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t j = 0; j < cols; ++j) {
                             (*dr)[j] += g[r * cols + j] * av2[r * cols + j];
                           }
                         }
                       }
                     });
}

template <typename T>
Var mul_heads(Tape<T>& tape, Var x, Var s) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& sv = tape.value(s);
  const std::size_t rows = xv.rows();
  const std::size_t heads = sv.cols();
  const bool broadcast = sv.rows() == 1;
  if ((!broadcast && sv.rows() != rows) || heads == 0 || xv.cols() % heads != 0) {
    throw ShapeError("mul_heads: incompatible shapes " + shape_str(xv.shape()) + " and " +
                     shape_str(sv.shape()));
  }
  const std::size_t hd = xv.cols() / heads;
  Tensor<T> out(xv.shape());
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < static_cast<Index>(rows); ++r) {
    const std::size_t srow = broadcast ? 0 : static_cast<std::size_t>(r);
    for (std::size_t h = 0; h < heads; ++h) {
      const T f = sv[srow * heads + h];
      for (std::size_t p = 0; p < hd; ++p) {
        const std::size_t i = (r * heads + h) * hd + p;
        out[i] = xv[i] * f;
      }
    }
  }
  return tape.record(std::move(out), {x, s},
                     [x, s, rows, heads, hd, broadcast](Tape<T>& tp, const Tensor<T>& g) {
                       const Tensor<T>& xv2 = tp.value(x);
                       const Tensor<T>& sv2 = tp.value(s);
                       Tensor<T>* dx = grad_if(tp, x);
                       Tensor<T>* ds = grad_if(tp, s);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const std::size_t srow = broadcast ? 0 : r;
                         for (std::size_t h = 0; h < heads; ++h) {
                           const T f = sv2[srow * heads + h];
                           T acc = 0;
                           for (std::size_t p = 0; p < hd; ++p) {
                             const std::size_t i = (r * heads + h) * hd + p;
                             if (dx) (*dx)[i] += g[i] * f;
                             acc += g[i] * xv2[i];
                           }
                           if (ds) (*ds)[srow * heads + h] += acc;
                         }
                       }
                     });
}

template <typename T>
Var scale(Tape<T>& tape, Var a, T factor) {
  return unary(
      tape, a, [factor](T x) { return x * factor; }, [factor](T) { return factor; });
}

template <typename T>
Var exp(Tape<T>& tape, Var a) {
  return unary(
      tape, a, [](T x) { return std::exp(x); }, [](T x) { return std::exp(x); });
}

template <typename T>
Var log(Tape<T>& tape, Var a) {
  return unary(
      tape, a, [](T x) { return std::log(x); }, [](T x) { return T(1) / x; });
}

template <typename T>
Var neg(Tape<T>& tape, Var a) {
  return unary(
      tape, a, [](T x) { return -x; }, [](T) { return T(-1); });
}

template <typename T>
Var silu(Tape<T>& tape, Var a) {
  return unary(
      tape, a, [](T x) { return x * sigmoid(x); },
      [](T x) {
        const T s = sigmoid(x);
        return s * (T(1) + x * (T(1) - s));
      });
}

template <typename T>
Var gelu(Tape<T>& tape, Var a) {
  return unary(
      tape, a,
      [](T x) { return T(0.5) * x * std::erfc(-x / std::numbers::sqrt2_v<T>); },
      [](T x) {
        const T cdf = T(0.5) * std::erfc(-x / std::numbers::sqrt2_v<T>);
        const T pdf = std::exp(T(-0.5) * x * x) * std::numbers::inv_sqrtpi_v<T> /
                      std::numbers::sqrt2_v<T>;
        return cdf + x * pdf;
      });
}

template <typename T>
Var softplus(Tape<T>& tape, Var a) {
  return unary(
      tape, a, [](T x) { return softplus_value(x); }, [](T x) { return sigmoid(x); });
}

namespace {

template <typename T>
T row_logsumexp(const T* y, std::size_t n) {
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, y[i]);
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(y[i] - mx);
  return mx + std::log(s);
}

}  // namespace

template <typename T>
Var softmax(Tape<T>& tape, Var a) {
  const Tensor<T>& x = tape.value(a);
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T lse = row_logsumexp(x.data() + r * cols, cols);
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = std::exp(x[r * cols + j] - lse);
  }
  auto saved = std::make_shared<Tensor<T>>(out);
  return tape.record(std::move(out), {a}, [a, saved, rows, cols](Tape<T>& tp, const Tensor<T>& g) {
    const Tensor<T>& s = *saved;
    Tensor<T>& dx = tp.grad_buffer(a);
    for (std::size_t r = 0; r < rows; ++r) {
      T dotv = 0;
      for (std::size_t j = 0; j < cols; ++j) dotv += g[r * cols + j] * s[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) {
        dx[r * cols + j] += s[r * cols + j] * (g[r * cols + j] - dotv);
      }
    }
  });
}

template <typename T>
Var log_softmax(Tape<T>& tape, Var a) {
  const Tensor<T>& x = tape.value(a);
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T lse = row_logsumexp(x.data() + r * cols, cols);
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = x[r * cols + j] - lse;
  }
  return tape.record(std::move(out), {a}, [a, rows, cols](Tape<T>& tp, const Tensor<T>& g) {
    const Tensor<T>& xv = tp.value(a);
    Tensor<T>& dx = tp.grad_buffer(a);
    for (std::size_t r = 0; r < rows; ++r) {
      const T lse = row_logsumexp(xv.data() + r * cols, cols);
      T gsum = 0;
      for (std::size_t j = 0; j < cols; ++j) gsum += g[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) {
        dx[r * cols + j] += g[r * cols + j] - std::exp(xv[r * cols + j] - lse) * gsum;
      }
    }
  });
}

template <typename T>
Var logsumexp(Tape<T>& tape, Var a) {
  const Tensor<T>& x = tape.value(a);
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor<T> out(Shape{rows, 1});
  for (std::size_t r = 0; r < rows; ++r) out[r] = row_logsumexp(x.data() + r * cols, cols);
  return tape.record(std::move(out), {a}, [a, rows, cols](Tape<T>& tp, const Tensor<T>& g) {
    const Tensor<T>& xv = tp.value(a);
    Tensor<T>& dx = tp.grad_buffer(a);
    for (std::size_t r = 0; r < rows; ++r) {
      const T lse = row_logsumexp(xv.data() + r * cols, cols);
      for (std::size_t j = 0; j < cols; ++j) {
        dx[r * cols + j] += g[r] * std::exp(xv[r * cols + j] - lse);
      }
    }
  });
}

template <typename T>
Var rms_norm(Tape<T>& tape, Var x, Var weight, double eps) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(weight);
  require_rank2_compatible(xv.shape(), wv.shape(), xv.cols(), wv.size(), "rms_norm");
  const std::size_t rows = xv.rows(), cols = xv.cols();
  Tensor<T> out(xv.shape());
  auto inv = std::make_shared<std::vector<T>>(rows);
  kernels::rms_norm(xv.data(), wv.data(), out.data(), inv->data(), rows, cols, eps);
  return tape.record(std::move(out), {x, weight},
                     [x, weight, inv, rows, cols](Tape<T>& tp, const Tensor<T>& g) {
                       Tensor<T>* dx = grad_if(tp, x);
                       Tensor<T>* dw = grad_if(tp, weight);
                       kernels::rms_norm_backward(tp.value(x).data(), tp.value(weight).data(),
                                                  inv->data(), g.data(),
                                                  dx ? dx->data() : nullptr,
                                                  dw ? dw->data() : nullptr, rows, cols);
                     });
}

template <typename T>
Var conv1d_causal(Tape<T>& tape, Var x, Var weight, Var bias) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(weight);
  const std::size_t steps = xv.rows(), channels = xv.cols();
  if (wv.rows() != channels) {
    throw ShapeError("conv1d_causal: incompatible shapes " + shape_str(xv.shape()) + " and " +
                     shape_str(wv.shape()));
  }
  const std::size_t width = wv.cols();
  const T* bptr = nullptr;
  if (bias.valid()) {
    require_rank2_compatible(xv.shape(), tape.shape(bias), channels, tape.value(bias).size(),
                             "conv1d_causal bias");
    bptr = tape.value(bias).data();
  }
  Tensor<T> out(xv.shape());
  kernels::conv1d_causal(xv.data(), wv.data(), bptr, out.data(), steps, channels, width);
  std::vector<Var> inputs{x, weight};
  if (bias.valid()) inputs.push_back(bias);
  return tape.record(std::move(out), inputs,
                     [x, weight, bias, steps, channels, width](Tape<T>& tp, const Tensor<T>& g) {
                       Tensor<T>* dx = grad_if(tp, x);
                       Tensor<T>* dw = grad_if(tp, weight);
                       Tensor<T>* db = bias.valid() ? grad_if(tp, bias) : nullptr;
                       kernels::conv1d_causal_backward(
                           tp.value(x).data(), tp.value(weight).data(), g.data(),
                           dx ? dx->data() : nullptr, dw ? dw->data() : nullptr,
                           db ? db->data() : nullptr, steps, channels, width);
                     });
}

template <typename T>
Var selective_scan(Tape<T>& tape, Var decay, Var u, Var b, Var c, std::size_t chunk) {
  const Tensor<T>& dv = tape.value(decay);
  const Tensor<T>& uv = tape.value(u);
  const Tensor<T>& bv = tape.value(b);
  const Tensor<T>& cv = tape.value(c);
  kernels::ScanDims dims;
  dims.steps = dv.rows();
  dims.heads = dv.cols();
  dims.state = bv.cols();
  if (uv.rows() != dims.steps || dims.heads == 0 || uv.cols() % dims.heads != 0) {
    throw ShapeError("selective_scan: incompatible shapes " + shape_str(dv.shape()) + " and " +
                     shape_str(uv.shape()));
  }
  require_same_shape(bv.shape(), cv.shape(), "selective_scan b/c");
  if (bv.rows() != dims.steps) {
    throw ShapeError("selective_scan: incompatible shapes " + shape_str(dv.shape()) + " and " +
                     shape_str(bv.shape()));
  }
  dims.head_dim = uv.cols() / dims.heads;
  Tensor<T> out(uv.shape());
  auto boundary = std::make_shared<std::vector<T>>();
  kernels::scan_chunked(dims, dv.data(), uv.data(), bv.data(), cv.data(), out.data(), chunk,
                        boundary.get());
  return tape.record(
      std::move(out), {decay, u, b, c},
      [decay, u, b, c, dims, chunk, boundary](Tape<T>& tp, const Tensor<T>& g) {
        // The kernel writes every operand's gradient; unused ones go to scratch.
        auto target = [&tp](Var v, Tensor<T>& scratch) -> T* {
          if (tp.requires_grad(v)) return tp.grad_buffer(v).data();
          scratch = Tensor<T>(tp.shape(v), T(0));
          return scratch.data();
        };
        Tensor<T> s0, s1, s2, s3;
        T* dd = target(decay, s0);
        T* du = target(u, s1);
        T* db = target(b, s2);
        T* dc = target(c, s3);
        kernels::scan_chunked_backward(dims, tp.value(decay).data(), tp.value(u).data(),
                                       tp.value(b).data(), tp.value(c).data(), *boundary,
                                       g.data(), chunk, dd, du, db, dc);
      });
}

template <typename T>
Var slice_cols(Tape<T>& tape, Var x, std::size_t begin, std::size_t end) {
  const Tensor<T>& xv = tape.value(x);
  if (begin > end || end > xv.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of bounds for shape " + shape_str(xv.shape()));
  }
  const std::size_t rows = xv.rows(), cols = xv.cols(), width = end - begin;
  Tensor<T> out(matrix_shape(rows, width));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(xv.data() + r * cols + begin, width, out.data() + r * width);
  }
  return tape.record(std::move(out), {x},
                     [x, begin, rows, cols, width](Tape<T>& tp, const Tensor<T>& g) {
                       Tensor<T>& dx = tp.grad_buffer(x);
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t j = 0; j < width; ++j) {
                           dx[r * cols + begin + j] += g[r * width + j];
                         }
                       }
                     });
}

template <typename T>
Var concat_cols(Tape<T>& tape, const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = tape.value(parts.front()).rows();
  std::size_t total = 0;
  for (Var p : parts) {
    if (tape.value(p).rows() != rows) {
      throw ShapeError("concat_cols: incompatible shapes " +
                       shape_str(tape.shape(parts.front())) + " and " + shape_str(tape.shape(p)));
    }
    total += tape.value(p).cols();
  }
  Tensor<T> out(matrix_shape(rows, total));
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor<T>& pv = tape.value(p);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(pv.data() + r * pv.cols(), pv.cols(), out.data() + r * total + offset);
    }
    offset += pv.cols();
  }
  return tape.record(std::move(out), parts,
                     [parts, rows, total](Tape<T>& tp, const Tensor<T>& g) {
                       std::size_t off = 0;
                       for (Var p : parts) {
                         const std::size_t w = tp.value(p).cols();
                         if (Tensor<T>* dp = grad_if(tp, p)) {
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t j = 0; j < w; ++j) {
                               (*dp)[r * w + j] += g[r * total + off + j];
                             }
                           }
                         }
                         off += w;
                       }
                     });
}

template <typename T>
Var sum(Tape<T>& tape, Var a) {
  const Tensor<T>& x = tape.value(a);
  T s = 0;
  for (T v : x.vec()) s += v;
  return tape.record(Tensor<T>::scalar(s), {a}, [a](Tape<T>& tp, const Tensor<T>& g) {
    Tensor<T>& dx = tp.grad_buffer(a);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[0];
  });
}

template <typename T>
Var mean(Tape<T>& tape, Var a) {
  const T n = static_cast<T>(tape.value(a).size());
  return scale(tape, sum(tape, a), T(1) / n);
}

template <typename T>
Var soft_cross_entropy(Tape<T>& tape, Var logits, const Tensor<T>& target) {
  const Tensor<T>& y = tape.value(logits);
  require_same_shape(y.shape(), target.shape(), "soft_cross_entropy");
  const std::size_t rows = y.rows(), cols = y.cols();
  T total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const T lse = row_logsumexp(y.data() + r * cols, cols);
    T ce = 0;
    for (std::size_t j = 0; j < cols; ++j) ce += target[r * cols + j] * (lse - y[r * cols + j]);
    total += ce;
  }
  const T inv_rows = T(1) / static_cast<T>(rows);
  return tape.record(
      Tensor<T>::scalar(total * inv_rows), {logits},
      [logits, target, rows, cols, inv_rows](Tape<T>& tp, const Tensor<T>& g) {
        const Tensor<T>& yv = tp.value(logits);
        Tensor<T>& dy = tp.grad_buffer(logits);
        for (std::size_t r = 0; r < rows; ++r) {
          const T lse = row_logsumexp(yv.data() + r * cols, cols);
          T mass = 0;
          for (std::size_t j = 0; j < cols; ++j) mass += target[r * cols + j];
          for (std::size_t j = 0; j < cols; ++j) {
            const T p = std::exp(yv[r * cols + j] - lse);
            dy[r * cols + j] += g[0] * inv_rows * (mass * p - target[r * cols + j]);
          }
        }
      });
}

#define MAMBAEYE_OPS_INSTANTIATE(T)                                                  \
  template Var matmul<T>(Tape<T>&, Var, Var);                                        \
  template Var linear<T>(Tape<T>&, Var, Var, Var);                                   \
  template Var add<T>(Tape<T>&, Var, Var);                                           \
  template Var mul<T>(Tape<T>&, Var, Var);                                           \
  template Var add_row<T>(Tape<T>&, Var, Var);                                       \
  template Var mul_row<T>(Tape<T>&, Var, Var);                                       \
  template Var mul_heads<T>(Tape<T>&, Var, Var);                                     \
  template Var scale<T>(Tape<T>&, Var, T);                                           \
  template Var exp<T>(Tape<T>&, Var);                                                \
  template Var log<T>(Tape<T>&, Var);                                                \
  template Var neg<T>(Tape<T>&, Var);                                                \
  template Var silu<T>(Tape<T>&, Var);                                               \
  template Var gelu<T>(Tape<T>&, Var);                                               \
  template Var softplus<T>(Tape<T>&, Var);                                           \
  template Var softmax<T>(Tape<T>&, Var);                                            \
  template Var log_softmax<T>(Tape<T>&, Var);                                        \
  template Var logsumexp<T>(Tape<T>&, Var);                                          \
  template Var rms_norm<T>(Tape<T>&, Var, Var, double);                              \
  template Var conv1d_causal<T>(Tape<T>&, Var, Var, Var);                            \
  template Var selective_scan<T>(Tape<T>&, Var, Var, Var, Var, std::size_t);         \
  template Var slice_cols<T>(Tape<T>&, Var, std::size_t, std::size_t);               \
  template Var concat_cols<T>(Tape<T>&, const std::vector<Var>&);                    \
  template Var sum<T>(Tape<T>&, Var);                                                \
  template Var mean<T>(Tape<T>&, Var);                                               \
  template Var soft_cross_entropy<T>(Tape<T>&, Var, const Tensor<T>&);

MAMBAEYE_OPS_INSTANTIATE(float)
MAMBAEYE_OPS_INSTANTIATE(double)

#undef MAMBAEYE_OPS_INSTANTIATE

}  // namespace mambaeye::ops
