#include "mambaeye/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <stdexcept>
#include <vector>

namespace mambaeye::kernels {

namespace {

using Index = std::ptrdiff_t;

template <typename T>
T dot(const T* __restrict a, const T* __restrict b, std::size_t n) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
std::vector<T> transpose(const T* a, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  constexpr std::size_t kTile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile) {
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t r1 = std::min(rows, r0 + kTile);
      const std::size_t c1 = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) out[c * rows + r] = a[r * cols + c];
      }
    }
  }
  return out;
}

}  // namespace

// Register tile: kRowTile rows of C by two vectors of columns, accumulated over
// the full k range before touching memory.
constexpr std::size_t kRowTile = 4;
constexpr std::size_t kVecBytes = 32;

template <typename T>
using Vec [[gnu::vector_size(kVecBytes)]] = T;

template <typename T>
constexpr std::size_t col_tile() {
  return 2 * kVecBytes / sizeof(T);
}

template <typename T>
[[gnu::always_inline]] inline Vec<T> load_vec(const T* p) {
  Vec<T> v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

template <typename T>
void matmul_tile(const T* __restrict a, const T* __restrict b, T* __restrict c, std::size_t i,
                 std::size_t j0, std::size_t k, std::size_t n, bool accumulate) {
  constexpr std::size_t lanes = kVecBytes / sizeof(T);
  Vec<T> acc0[kRowTile] = {};
  Vec<T> acc1[kRowTile] = {};
  for (std::size_t kk = 0; kk < k; ++kk) {
    const T* br = b + kk * n + j0;
    const Vec<T> b0 = load_vec(br);
    const Vec<T> b1 = load_vec(br + lanes);
    for (std::size_t r = 0; r < kRowTile; ++r) {
      const T av = a[(i + r) * k + kk];
      acc0[r] += av * b0;
      acc1[r] += av * b1;
    }
  }
  for (std::size_t r = 0; r < kRowTile; ++r) {
    T* cr = c + (i + r) * n + j0;
    if (accumulate) {
      acc0[r] += load_vec(cr);
      acc1[r] += load_vec(cr + lanes);
    }
    std::memcpy(cr, &acc0[r], sizeof(Vec<T>));
    std::memcpy(cr + lanes, &acc1[r], sizeof(Vec<T>));
  }
}

template <typename T>
void matmul(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
            bool accumulate) {
  const Index blocks = static_cast<Index>((m + kRowTile - 1) / kRowTile);
  const std::size_t full_cols = n - n % col_tile<T>();
#pragma omp parallel for schedule(static)
  for (Index blk = 0; blk < blocks; ++blk) {
    const std::size_t i = static_cast<std::size_t>(blk) * kRowTile;
    const std::size_t nrows = std::min(kRowTile, m - i);
    if (nrows == kRowTile) {
      for (std::size_t j0 = 0; j0 < full_cols; j0 += col_tile<T>()) {
        matmul_tile(a, b, c, i, j0, k, n, accumulate);
      }
    }
    // Ragged edges: leftover rows use every column, full rows only the tail.
    const std::size_t col_begin = nrows == kRowTile ? full_cols : 0;
    if (col_begin == n) continue;
    for (std::size_t r = 0; r < nrows; ++r) {
      T* __restrict crow = c + (i + r) * n;
      if (!accumulate) std::fill(crow + col_begin, crow + n, T(0));
      for (std::size_t kk = 0; kk < k; ++kk) {
        const T av = a[(i + r) * k + kk];
        const T* __restrict brow = b + kk * n;
        for (std::size_t j = col_begin; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

template <typename T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
  const std::vector<T> bt = transpose(b, n, k);
  matmul(a, bt.data(), c, m, k, n, accumulate);
}

template <typename T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
  const std::vector<T> at = transpose(a, k, m);
  matmul(at.data(), b, c, m, k, n, accumulate);
}

template <typename T>
void rms_norm(const T* x, const T* w, T* y, T* inv_rms, std::size_t rows, std::size_t cols,
              double eps) {
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < static_cast<Index>(rows); ++r) {
    const T* xr = x + r * cols;
    T* yr = y + r * cols;
    const T ms = dot(xr, xr, cols) / static_cast<T>(cols);
    const T inv = T(1) / std::sqrt(ms + static_cast<T>(eps));
    if (inv_rms) inv_rms[r] = inv;
    for (std::size_t j = 0; j < cols; ++j) yr[j] = xr[j] * inv * w[j];
  }
}

template <typename T>
void rms_norm_backward(const T* x, const T* w, const T* inv_rms, const T* dy, T* dx, T* dw,
                       std::size_t rows, std::size_t cols) {
  if (dx) {
#pragma omp parallel for schedule(static)
    for (Index r = 0; r < static_cast<Index>(rows); ++r) {
      const T* xr = x + r * cols;
      const T* dyr = dy + r * cols;
      const T inv = inv_rms[r];
      T proj = 0;
      for (std::size_t j = 0; j < cols; ++j) proj += dyr[j] * w[j] * xr[j] * inv;
      proj /= static_cast<T>(cols);
      T* dxr = dx + r * cols;
      for (std::size_t j = 0; j < cols; ++j) {
        const T xhat = xr[j] * inv;
        dxr[j] += inv * (dyr[j] * w[j] - xhat * proj);
      }
    }
  }
  if (dw) {
    for (std::size_t r = 0; r < rows; ++r) {
      const T inv = inv_rms[r];
      for (std::size_t j = 0; j < cols; ++j) dw[j] += dy[r * cols + j] * x[r * cols + j] * inv;
    }
  }
}

template <typename T>
void conv1d_causal(const T* x, const T* w, const T* bias, T* y, std::size_t steps,
                   std::size_t channels, std::size_t width) {
#pragma omp parallel for schedule(static)
  for (Index t = 0; t < static_cast<Index>(steps); ++t) {
    T* yr = y + t * channels;
    for (std::size_t ch = 0; ch < channels; ++ch) yr[ch] = bias ? bias[ch] : T(0);
    for (std::size_t j = 0; j < width; ++j) {
      const Index src = t - static_cast<Index>(width) + 1 + static_cast<Index>(j);
      if (src < 0) continue;
      const T* xr = x + src * channels;
      for (std::size_t ch = 0; ch < channels; ++ch) yr[ch] += w[ch * width + j] * xr[ch];
    }
  }
}

template <typename T>
void conv1d_causal_backward(const T* x, const T* w, const T* dy, T* dx, T* dw, T* dbias,
                            std::size_t steps, std::size_t channels, std::size_t width) {
  if (dx) {
#pragma omp parallel for schedule(static)
    for (Index t = 0; t < static_cast<Index>(steps); ++t) {
      T* dxr = dx + t * channels;
      for (std::size_t j = 0; j < width; ++j) {
        const std::size_t out = static_cast<std::size_t>(t) + width - 1 - j;
        if (out >= steps) continue;
        const T* dyr = dy + out * channels;
        for (std::size_t ch = 0; ch < channels; ++ch) dxr[ch] += w[ch * width + j] * dyr[ch];
      }
    }
  }
  if (dw || dbias) {
    constexpr std::size_t kBlock = 64;
    const Index blocks = static_cast<Index>((channels + kBlock - 1) / kBlock);
#pragma omp parallel for schedule(static)
    for (Index blk = 0; blk < blocks; ++blk) {
      const std::size_t c0 = static_cast<std::size_t>(blk) * kBlock;
      const std::size_t c1 = std::min(channels, c0 + kBlock);
      for (std::size_t t = 0; t < steps; ++t) {
        const T* dyr = dy + t * channels;
        if (dbias) {
          for (std::size_t ch = c0; ch < c1; ++ch) dbias[ch] += dyr[ch];
        }
        if (!dw) continue;
        for (std::size_t j = 0; j < width; ++j) {
          const Index src = static_cast<Index>(t) - static_cast<Index>(width) + 1 +
                            static_cast<Index>(j);
          if (src < 0) continue;
          const T* xr = x + src * channels;
          for (std::size_t ch = c0; ch < c1; ++ch) dw[ch * width + j] += dyr[ch] * xr[ch];
        }
      }
    }
  }
}

template <typename T>
void scan_chunked(const ScanDims& dims, const T* decay, const T* u, const T* b, const T* c,
                  T* y, std::size_t chunk, std::vector<T>* boundary_states) {
  if (chunk == 0) throw std::invalid_argument("scan chunk length must be positive");
  const std::size_t steps = dims.steps;
  const std::size_t heads = dims.heads;
  const std::size_t hd = dims.head_dim;
  const std::size_t ns = dims.state;
  const std::size_t row = heads * hd;
  const std::size_t per_head = hd * ns;
  const std::size_t nchunks = (steps + chunk - 1) / chunk;
  if (boundary_states) boundary_states->assign(nchunks * dims.state_size(), T(0));

  // gram[t, s - t0] = c_t . b_s for s in [t0, t], shared by every head.
  std::vector<T> gram(steps * chunk, T(0));
#pragma omp parallel for schedule(static)
  for (Index t = 0; t < static_cast<Index>(steps); ++t) {
    const std::size_t t0 = (static_cast<std::size_t>(t) / chunk) * chunk;
    for (std::size_t s = t0; s <= static_cast<std::size_t>(t); ++s) {
      gram[t * chunk + (s - t0)] = dot(c + t * ns, b + s * ns, ns);
    }
  }

#pragma omp parallel
  {
    std::vector<T> state(per_head);
    std::vector<T> seg(chunk * chunk);
    std::vector<T> prefix(chunk);
#pragma omp for schedule(static)
    for (Index hi = 0; hi < static_cast<Index>(heads); ++hi) {
      const std::size_t h = static_cast<std::size_t>(hi);
      std::fill(state.begin(), state.end(), T(0));
      for (std::size_t ci = 0; ci < nchunks; ++ci) {
        const std::size_t t0 = ci * chunk;
        const std::size_t len = std::min(chunk, steps - t0);
        if (boundary_states) {
          std::copy(state.begin(), state.end(),
                    boundary_states->begin() + (ci * heads + h) * per_head);
        }
        // seg[i, s] = prod_{v = s+1..i} decay, prefix[i] = prod_{v = 0..i} decay.
        for (std::size_t i = 0; i < len; ++i) {
          const T a = decay[(t0 + i) * heads + h];
          for (std::size_t s = 0; s < i; ++s) seg[i * chunk + s] = seg[(i - 1) * chunk + s] * a;
          seg[i * chunk + i] = T(1);
          prefix[i] = i == 0 ? a : prefix[i - 1] * a;
        }
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t t = t0 + i;
          T* __restrict yrow = y + t * row + h * hd;
          const T* crow = c + t * ns;
          for (std::size_t p = 0; p < hd; ++p) yrow[p] = prefix[i] * dot(&state[p * ns], crow, ns);
          for (std::size_t s = 0; s <= i; ++s) {
            const T wgt = seg[i * chunk + s] * gram[t * chunk + s];
            const T* __restrict urow = u + (t0 + s) * row + h * hd;
            for (std::size_t p = 0; p < hd; ++p) yrow[p] += wgt * urow[p];
          }
        }
        const std::size_t last = len - 1;
        for (T& v : state) v *= prefix[last];
        for (std::size_t s = 0; s < len; ++s) {
          const T wgt = seg[last * chunk + s];
          const T* urow = u + (t0 + s) * row + h * hd;
          const T* __restrict brow = b + (t0 + s) * ns;
          for (std::size_t p = 0; p < hd; ++p) {
            const T coef = wgt * urow[p];
            T* __restrict srow = &state[p * ns];
            for (std::size_t n = 0; n < ns; ++n) srow[n] += coef * brow[n];
          }
        }
      }
    }
  }
}

template <typename T>
void scan_chunked_backward(const ScanDims& dims, const T* decay, const T* u, const T* b,
                           const T* c, const std::vector<T>& boundary_states, const T* dy,
                           std::size_t chunk, T* d_decay, T* du, T* db, T* dc) {
  const std::size_t steps = dims.steps;
  const std::size_t heads = dims.heads;
  const std::size_t hd = dims.head_dim;
  const std::size_t ns = dims.state;
  const std::size_t row = heads * hd;
  const std::size_t per_head = hd * ns;
  const std::size_t nchunks = (steps + chunk - 1) / chunk;
  if (boundary_states.size() != nchunks * dims.state_size()) {
    throw std::invalid_argument("scan backward: boundary state buffer has wrong size");
  }
  // Per-head partials for the shared b/c operands, reduced in head order below.
  std::vector<T> db_heads(heads * steps * ns, T(0));
  std::vector<T> dc_heads(heads * steps * ns, T(0));

#pragma omp parallel
  {
    std::vector<T> states((chunk + 1) * per_head);
    std::vector<T> adj(per_head);
#pragma omp for schedule(static)
    for (Index hi = 0; hi < static_cast<Index>(heads); ++hi) {
      const std::size_t h = static_cast<std::size_t>(hi);
      std::fill(adj.begin(), adj.end(), T(0));
      T* dbh = db_heads.data() + h * steps * ns;
      T* dch = dc_heads.data() + h * steps * ns;
      for (std::size_t ci = nchunks; ci-- > 0;) {
        const std::size_t t0 = ci * chunk;
        const std::size_t len = std::min(chunk, steps - t0);
        std::copy_n(boundary_states.begin() + (ci * heads + h) * per_head, per_head,
                    states.begin());
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t t = t0 + i;
          const T a = decay[t * heads + h];
          const T* prev = &states[i * per_head];
          T* cur = &states[(i + 1) * per_head];
          const T* urow = u + t * row + h * hd;
          const T* brow = b + t * ns;
          for (std::size_t p = 0; p < hd; ++p) {
            for (std::size_t n = 0; n < ns; ++n) {
              cur[p * ns + n] = a * prev[p * ns + n] + urow[p] * brow[n];
            }
          }
        }
        for (std::size_t i = len; i-- > 0;) {
          const std::size_t t = t0 + i;
          const T a_next = t + 1 < steps ? decay[(t + 1) * heads + h] : T(0);
          const T* dyrow = dy + t * row + h * hd;
          const T* crow = c + t * ns;
          const T* brow = b + t * ns;
          const T* urow = u + t * row + h * hd;
          for (std::size_t p = 0; p < hd; ++p) {
            T* __restrict arow = &adj[p * ns];
            for (std::size_t n = 0; n < ns; ++n) arow[n] = a_next * arow[n] + dyrow[p] * crow[n];
          }
          const T* s_cur = &states[(i + 1) * per_head];
          const T* s_prev = &states[i * per_head];
          d_decay[t * heads + h] += dot(adj.data(), s_prev, per_head);
          T* durow = du + t * row + h * hd;
          T* dbrow = dbh + t * ns;
          T* dcrow = dch + t * ns;
          for (std::size_t p = 0; p < hd; ++p) {
            const T* arow = &adj[p * ns];
            durow[p] += dot(arow, brow, ns);
            const T up = urow[p];
            const T dyp = dyrow[p];
            const T* srow = &s_cur[p * ns];
            for (std::size_t n = 0; n < ns; ++n) {
              dbrow[n] += arow[n] * up;
              dcrow[n] += srow[n] * dyp;
            }
          }
        }
      }
    }
  }

#pragma omp parallel for schedule(static)
  for (Index t = 0; t < static_cast<Index>(steps); ++t) {
    for (std::size_t h = 0; h < heads; ++h) {
      const T* dbh = db_heads.data() + (h * steps + t) * ns;
      const T* dch = dc_heads.data() + (h * steps + t) * ns;
      for (std::size_t n = 0; n < ns; ++n) {
        db[t * ns + n] += dbh[n];
        dc[t * ns + n] += dch[n];
      }
    }
  }
}

template <typename T>
void scan_step(std::size_t heads, std::size_t head_dim, std::size_t state_dim, const T* decay,
               const T* u, const T* b, const T* c, T* state, T* y) {
  for (std::size_t h = 0; h < heads; ++h) {
    const T a = decay[h];
    for (std::size_t p = 0; p < head_dim; ++p) {
      const std::size_t idx = h * head_dim + p;
      const T up = u[idx];
      T* __restrict srow = state + idx * state_dim;
      for (std::size_t n = 0; n < state_dim; ++n) srow[n] = a * srow[n] + up * b[n];
      y[idx] = dot(srow, c, state_dim);
    }
  }
}

namespace reference {

template <typename T>
void matmul(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T s = 0;
      for (std::size_t kk = 0; kk < k; ++kk) s += a[i * k + kk] * b[kk * n + j];
      c[i * n + j] = s;
    }
  }
}

template <typename T>
void rms_norm(const T* x, const T* w, T* y, std::size_t rows, std::size_t cols, double eps) {
  for (std::size_t r = 0; r < rows; ++r) {
    double ms = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      ms += static_cast<double>(x[r * cols + j]) * static_cast<double>(x[r * cols + j]);
    }
    ms /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(ms + eps);
    for (std::size_t j = 0; j < cols; ++j) {
      y[r * cols + j] = static_cast<T>(static_cast<double>(x[r * cols + j]) * inv * w[j]);
    }
  }
}

template <typename T>
void conv1d_causal(const T* x, const T* w, const T* bias, T* y, std::size_t steps,
                   std::size_t channels, std::size_t width) {
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t ch = 0; ch < channels; ++ch) {
      T s = bias ? bias[ch] : T(0);
      for (std::size_t j = 0; j < width; ++j) {
        if (t + j + 1 < width) continue;
        s += w[ch * width + j] * x[(t + j + 1 - width) * channels + ch];
      }
      y[t * channels + ch] = s;
    }
  }
}

template <typename T>
void scan_sequential(const ScanDims& dims, const T* decay, const T* u, const T* b, const T* c,
                     T* y) {
  std::vector<T> state(dims.state_size(), T(0));
  for (std::size_t t = 0; t < dims.steps; ++t) {
    const std::size_t row = dims.heads * dims.head_dim;
    scan_step(dims.heads, dims.head_dim, dims.state, decay + t * dims.heads, u + t * row,
              b + t * dims.state, c + t * dims.state, state.data(), y + t * row);
  }
}

}  // namespace reference

#define MAMBAEYE_KERNELS_INSTANTIATE(T)                                                        \
  template void matmul<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, bool); \
  template void matmul_nt<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t,     \
                             bool);                                                             \
  template void matmul_tn<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t,     \
                             bool);                                                             \
  template void rms_norm<T>(const T*, const T*, T*, T*, std::size_t, std::size_t, double);      \
  template void rms_norm_backward<T>(const T*, const T*, const T*, const T*, T*, T*,            \
                                     std::size_t, std::size_t);                                 \
  template void conv1d_causal<T>(const T*, const T*, const T*, T*, std::size_t, std::size_t,    \
                                 std::size_t);                                                  \
  template void conv1d_causal_backward<T>(const T*, const T*, const T*, T*, T*, T*,             \
                                          std::size_t, std::size_t, std::size_t);               \
  template void scan_chunked<T>(const ScanDims&, const T*, const T*, const T*, const T*, T*,    \
                                std::size_t, std::vector<T>*);                                  \
  template void scan_chunked_backward<T>(const ScanDims&, const T*, const T*, const T*,         \
                                         const T*, const std::vector<T>&, const T*,             \
                                         std::size_t, T*, T*, T*, T*);                          \
  template void scan_step<T>(std::size_t, std::size_t, std::size_t, const T*, const T*,         \
                             const T*, const T*, T*, T*);                                       \
  template void reference::matmul<T>(const T*, const T*, T*, std::size_t, std::size_t,          \
                                     std::size_t);                                              \
  template void reference::rms_norm<T>(const T*, const T*, T*, std::size_t, std::size_t,        \
                                       double);                                                 \
  template void reference::conv1d_causal<T>(const T*, const T*, const T*, T*, std::size_t,      \
                                            std::size_t, std::size_t);                          \
  template void reference::scan_sequential<T>(const ScanDims&, const T*, const T*, const T*,    \
                                              const T*, T*);

MAMBAEYE_KERNELS_INSTANTIATE(float)
MAMBAEYE_KERNELS_INSTANTIATE(double)

#undef MAMBAEYE_KERNELS_INSTANTIATE

}  // namespace mambaeye::kernels
