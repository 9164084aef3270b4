#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "hippo/nn/autograd.hpp"

namespace hippo::nn {

/// C = alpha * op(A) * op(B) + beta * C, row-major.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

/// Caps BLAS worker threads; 0 leaves the library default.
void set_num_threads(int threads);

/// Square k x k convolution, stride 1, zero "same" padding (k odd).
/// weight: out x in x k x k; bias: out x 1 x 1 x 1 or null.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

/// 2x2 transposed convolution with stride 2 (exact 2x upsampling).
/// weight: in x out x 2 x 2; bias: out x 1 x 1 x 1.
template <typename T>
Var<T> conv_transpose2x2(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);
};

/// Training mode normalizes with batch statistics and updates the running
/// estimates; evaluation mode uses the running estimates.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BatchNormState<T>& state,
                  bool training);

template <typename T>
Var<T> relu(const Var<T>& x);

template <typename T>
Var<T> sigmoid(const Var<T>& x);

template <typename T>
Var<T> max_pool2x2(const Var<T>& x);

template <typename T>
Var<T> upsample_nearest(const Var<T>& x, std::size_t factor);

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

/// out[n, c] = gate[n, 0] * x[n, c] (gate broadcast over channels).
template <typename T>
Var<T> gate_multiply(const Var<T>& gate, const Var<T>& x);

/// Inverted dropout; identity when rate == 0.
template <typename T>
Var<T> dropout(const Var<T>& x, double rate, std::mt19937_64& rng);

}  // namespace hippo::nn
