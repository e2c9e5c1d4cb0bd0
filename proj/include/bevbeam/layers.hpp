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

// Parameterized building blocks. Each block owns its parameter handles and
// exposes them through ParamVisitor so the optimizer and the checkpoint code
// can walk the whole model by name.

#include <cmath>
#include <random>
#include <string>

#include "bevbeam/numerics/ops.hpp"

namespace bevbeam {

template <class T>
class ParamVisitor {
 public:
  virtual ~ParamVisitor() = default;
  virtual void param(const std::string& name, Tensor<T>& t) = 0;
  /// Non-trainable state (batch-norm running statistics).
  virtual void buffer(const std::string& name, Array<T>& a) = 0;
};

namespace init {

template <class T>
Array<T> uniform(Shape shape, double bound, std::mt19937_64& rng) {
  Array<T> a(std::move(shape));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : a.data) v = static_cast<T>(u(rng));
  return a;
}

template <class T>
Array<T> normal(Shape shape, double stddev, std::mt19937_64& rng) {
  Array<T> a(std::move(shape));
  std::normal_distribution<double> n(0.0, stddev);
  for (auto& v : a.data) v = static_cast<T>(n(rng));
  return a;
}

}  // namespace init

template <class T>
struct Conv2dLayer {
  Tensor<T> weight;  // [cout, cin, k, k]
  Tensor<T> bias;    // [cout]
  Conv2dOptions options;

  Conv2dLayer() = default;
  Conv2dLayer(std::size_t cin, std::size_t cout, std::size_t kernel, Conv2dOptions opt,
              std::mt19937_64& rng)
      : options(opt) {
    const double fan_in = static_cast<double>(cin * kernel * kernel);
    weight = parameter(init::uniform<T>({cout, cin, kernel, kernel}, std::sqrt(6.0 / fan_in), rng));
    bias = parameter(Array<T>(Shape{cout}));
  }

  Tensor<T> operator()(Tape<T>& tape, const Tensor<T>& x) const {
    return conv2d(tape, x, weight, bias, options);
  }

  void visit(const std::string& prefix, ParamVisitor<T>& v) {
    v.param(prefix + ".weight", weight);
    v.param(prefix + ".bias", bias);
  }
};

template <class T>
struct BatchNorm2d {
  Tensor<T> gamma;
  Tensor<T> beta;
  BatchNormState<T> state;

  BatchNorm2d() = default;
  explicit BatchNorm2d(std::size_t channels)
      : gamma(parameter(Array<T>(Shape{channels}, T(1)))),
        beta(parameter(Array<T>(Shape{channels}, T(0)))),
        state(channels) {}

  Tensor<T> operator()(Tape<T>& tape, const Tensor<T>& x, Mode mode) {
    return batch_norm(tape, x, gamma, beta, state, mode);
  }

  void visit(const std::string& prefix, ParamVisitor<T>& v) {
    v.param(prefix + ".gamma", gamma);
    v.param(prefix + ".beta", beta);
    v.buffer(prefix + ".running_mean", state.running_mean);
    v.buffer(prefix + ".running_var", state.running_var);
  }
};

template <class T>
struct LinearLayer {
  Tensor<T> weight;  // [out, in]
  Tensor<T> bias;    // [out], undefined when built without bias

  LinearLayer() = default;
  LinearLayer(std::size_t in, std::size_t out, bool with_bias, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    weight = parameter(init::uniform<T>({out, in}, bound, rng));
    if (with_bias) bias = parameter(Array<T>(Shape{out}));
  }

  Tensor<T> operator()(Tape<T>& tape, const Tensor<T>& x) const {
    return linear(tape, x, weight, bias);
  }

  void visit(const std::string& prefix, ParamVisitor<T>& v) {
    v.param(prefix + ".weight", weight);
    if (bias.defined()) v.param(prefix + ".bias", bias);
  }
};

template <class T>
struct LayerNormLayer {
  Tensor<T> gamma;
  Tensor<T> beta;

  LayerNormLayer() = default;
  explicit LayerNormLayer(std::size_t d)
      : gamma(parameter(Array<T>(Shape{d}, T(1)))), beta(parameter(Array<T>(Shape{d}, T(0)))) {}

  Tensor<T> operator()(Tape<T>& tape, const Tensor<T>& x) const {
    return layer_norm(tape, x, gamma, beta);
  }

  void visit(const std::string& prefix, ParamVisitor<T>& v) {
    v.param(prefix + ".gamma", gamma);
    v.param(prefix + ".beta", beta);
  }
};

/// Collects every attention-weight tensor produced during a forward pass
/// (copied to double) so tests can check row-stochasticity.
struct AttentionProbe {
  std::vector<Array<double>> camera;    // [BT, heads, bev cells, tokens] per layer
  std::vector<Array<double>> temporal;  // [B, heads, T, T] per layer
};

/// Multi-head scaled dot-product attention. q [.., Nq, C], k/v [.., Nk, C]
/// (q may lack the batch axis and is then broadcast). Returns [.., Nq, C].
template <class T>
Tensor<T> multi_head_attention(Tape<T>& tape, const Tensor<T>& q, const Tensor<T>& k,
                               const Tensor<T>& v, std::size_t heads,
                               std::vector<Array<double>>* probe);

}  // namespace bevbeam
