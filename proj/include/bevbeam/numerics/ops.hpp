// Copyright 2026 The bevbeam Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "bevbeam/numerics/array.hpp"
#include "bevbeam/numerics/tensor.hpp"

namespace bevbeam {

enum class Mode { train, eval };

template <class T>
Tensor<T> constant(Array<T> value) {
  return Tensor<T>(std::move(value), false);
}
template <class T>
Tensor<T> parameter(Array<T> value) {
  return Tensor<T>(std::move(value), true);
}

// ---------------------------------------------------------------------------
// Elementwise and structural ops. Every op records a backward closure on the
// tape when the tape is recording and at least one input requires grad.
// ---------------------------------------------------------------------------

/// a + b. The smaller operand's shape must equal a trailing suffix of the
/// larger operand's shape; it is repeated over the leading dimensions.
template <class T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

/// Elementwise product of equally shaped tensors.
template <class T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T factor);

/// a * s for a one-element tensor s.
template <class T>
Tensor<T> scale_by(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& s);

template <class T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& a);

/// Exact (erf) GELU.
template <class T>
Tensor<T> gelu(Tape<T>& tape, const Tensor<T>& a);

template <class T>
Tensor<T> tanh_act(Tape<T>& tape, const Tensor<T>& a);

template <class T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& a);

template <class T>
Tensor<T> mean(Tape<T>& tape, const Tensor<T>& a);

/// Mean over one axis; the axis is removed from the output shape.
template <class T>
Tensor<T> mean_axis(Tape<T>& tape, const Tensor<T>& a, std::size_t axis);

template <class T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& a, Shape shape);

template <class T>
Tensor<T> permute(Tape<T>& tape, const Tensor<T>& a, const std::vector<std::size_t>& perm);

template <class T>
Tensor<T> concat(Tape<T>& tape, const std::vector<Tensor<T>>& parts, std::size_t axis);

/// Contiguous range [start, start+length) along `axis`.
template <class T>
Tensor<T> slice(Tape<T>& tape, const Tensor<T>& a, std::size_t axis, std::size_t start,
                std::size_t length);

// ---------------------------------------------------------------------------
// Linear algebra and layers.
// ---------------------------------------------------------------------------

/// Batched matrix product a[..,m,k] x b[..,k,n] (or b[..,n,k] when
/// `transpose_b`). Batch dimensions broadcast numpy-style.
template <class T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);

/// x[..,in] * W[out,in]^T + bias[out]. `bias` may be undefined.
template <class T>
Tensor<T> linear(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 1;
};

/// Zero-padded 2-D cross-correlation of x[B,Cin,H,W] with w[Cout,Cin,kh,kw].
/// `bias` may be undefined.
template <class T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias, Conv2dOptions options = {});

/// Numerically stable softmax along `axis` (negative counts from the end).
/// Throws NumericError on NaN input.
template <class T>
Tensor<T> softmax(Tape<T>& tape, const Tensor<T>& x, int axis = -1);

inline constexpr double kNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Normalizes over the last dimension, then applies gamma/beta.
template <class T>
Tensor<T> layer_norm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps = static_cast<T>(kNormEps));

template <class T>
struct BatchNormState {
  Array<T> running_mean;
  Array<T> running_var;
  bool updated = false;  // false until the first train-mode call

  BatchNormState() = default;
  explicit BatchNormState(std::size_t channels)
      : running_mean(Shape{channels}, T(0)), running_var(Shape{channels}, T(1)) {}
};

/// Per-channel batch normalization of x[B,C,H,W]. Train mode normalizes with
/// batch statistics and moves the running statistics by `kBatchNormMomentum`
/// (unbiased variance); eval mode uses the running statistics only.
template <class T>
Tensor<T> batch_norm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, BatchNormState<T>& state, Mode mode,
                     T eps = static_cast<T>(kNormEps));

/// Align-corners bilinear resampling of x[B,C,H,W] to [B,C,out_h,out_w].
template <class T>
Tensor<T> bilinear_resize(Tape<T>& tape, const Tensor<T>& x, std::size_t out_h,
                          std::size_t out_w);

/// Align-corners bilinear resampling of the two trailing axes of an array.
template <class T>
Array<T> bilinear_resize(const Array<T>& x, std::size_t out_h, std::size_t out_w);

/// Inverted dropout; identity in eval mode or at rate 0.
template <class T>
Tensor<T> dropout(Tape<T>& tape, const Tensor<T>& x, double rate, std::mt19937_64& rng,
                  Mode mode);

// ---------------------------------------------------------------------------
// Spectral helpers (preprocessing only, never gradient tracked).
// ---------------------------------------------------------------------------

/// In-place DFT. Radix-2 iterative FFT for power-of-two lengths, direct
/// O(n^2) evaluation otherwise.
void dft_inplace(std::vector<std::complex<double>>& x);

/// |DFT(x)|^2 per bin.
Array<double> fft_power(std::span<const complex64> x);

/// Throws NumericError naming `what` if any value is NaN or infinite.
template <class T>
void check_finite(const Array<T>& a, const char* what);

}  // namespace bevbeam
