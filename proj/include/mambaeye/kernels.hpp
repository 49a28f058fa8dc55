#pragma once

// Compute kernels used by the tensor ops. Every kernel in `mambaeye::kernels`
// is OpenMP-parallel over an axis whose elements are written by exactly one
// thread, so results do not depend on the thread count. The naive serial
// versions in `kernels::reference` are kept as test oracles and as the
// baseline for bench/kernel_bench.

#include <cstddef>
#include <vector>

namespace mambaeye::kernels {

/// C[m,n] (+)= A[m,k] * B[k,n]
template <typename T>
void matmul(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
            bool accumulate = false);

/// C[m,n] (+)= A[m,k] * B[n,k]^T
template <typename T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate = false);

/// C[m,n] (+)= A[k,m]^T * B[k,n]
template <typename T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate = false);

/// y = x / sqrt(mean(x^2) + eps) * w, row-wise over a rows x cols matrix.
/// `inv_rms` receives one value per row for the backward pass.
template <typename T>
void rms_norm(const T* x, const T* w, T* y, T* inv_rms, std::size_t rows, std::size_t cols,
              double eps);

/// Accumulates dx and dw.
template <typename T>
void rms_norm_backward(const T* x, const T* w, const T* inv_rms, const T* dy, T* dx, T* dw,
                       std::size_t rows, std::size_t cols);

/// Causal depthwise conv over time: x is steps x channels, w is channels x width,
/// y[t,c] = bias[c] + sum_j w[c,j] * x[t - width + 1 + j, c] (zero before t = 0).
template <typename T>
void conv1d_causal(const T* x, const T* w, const T* bias, T* y, std::size_t steps,
                   std::size_t channels, std::size_t width);

/// Accumulates dx, dw and dbias (any of them may be null).
template <typename T>
void conv1d_causal_backward(const T* x, const T* w, const T* dy, T* dx, T* dw, T* dbias,
                            std::size_t steps, std::size_t channels, std::size_t width);

// Selective scan over `steps` positions with `heads` heads, each carrying a
// head_dim x state matrix. Layouts (row-major): decay steps x heads,
// u steps x heads x head_dim, b and c steps x state, y steps x heads x head_dim.
//   S_t = decay_t * S_{t-1} + u_t b_t^T,   y_t = S_t c_t,   S_{-1} = 0.
struct ScanDims {
  std::size_t steps = 0;
  std::size_t heads = 0;
  std::size_t head_dim = 0;
  std::size_t state = 0;

  std::size_t state_size() const { return heads * head_dim * state; }
};

/// Chunked (matrix-form) scan. When `boundary_states` is non-null it receives
/// the state entering every chunk, ceil(steps / chunk) * state_size() values.
template <typename T>
void scan_chunked(const ScanDims& dims, const T* decay, const T* u, const T* b, const T* c,
                  T* y, std::size_t chunk, std::vector<T>* boundary_states = nullptr);

/// Reverse-mode pass of the scan. Recomputes in-chunk states from the saved
/// boundaries. Accumulates into d_decay, du, db, dc.
template <typename T>
void scan_chunked_backward(const ScanDims& dims, const T* decay, const T* u, const T* b,
                           const T* c, const std::vector<T>& boundary_states, const T* dy,
                           std::size_t chunk, T* d_decay, T* du, T* db, T* dc);

/// One recurrent step in place on `state` (heads x head_dim x state).
template <typename T>
void scan_step(std::size_t heads, std::size_t head_dim, std::size_t state_dim, const T* decay,
               const T* u, const T* b, const T* c, T* state, T* y);

namespace reference {

template <typename T>
void matmul(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);

template <typename T>
void rms_norm(const T* x, const T* w, T* y, std::size_t rows, std::size_t cols, double eps);

template <typename T>
void conv1d_causal(const T* x, const T* w, const T* bias, T* y, std::size_t steps,
                   std::size_t channels, std::size_t width);

/// Plain sequential loop over time, one head at a time.
template <typename T>
void scan_sequential(const ScanDims& dims, const T* decay, const T* u, const T* b, const T* c,
                     T* y);

}  // namespace reference

}  // namespace mambaeye::kernels
