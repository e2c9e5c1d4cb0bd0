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

#include "bevbeam/numerics/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace bevbeam {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

// Caps the im2col scratch buffer of one conv chunk (elements).
constexpr std::size_t kMaxColElements = std::size_t{1} << 23;

template <class T>
Tensor<T> make_output(Tape<T>& tape, Array<T> value, bool track) {
  return Tensor<T>(std::move(value), track && tape.recording());
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

}  // namespace

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::f32:
      return 4;
    case DType::f64:
      return 8;
    case DType::u8:
      return 1;
    case DType::c64:
      return 8;
  }
  return 0;
}

const char* dtype_name(DType dtype) {
  switch (dtype) {
    case DType::f32:
      return "f32";
    case DType::f64:
      return "f64";
    case DType::u8:
      return "u8";
    case DType::c64:
      return "complex64";
  }
  return "?";
}

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

template <class T>
void check_finite(const Array<T>& a, const char* what) {
  for (const T& v : a.data) {
    if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite value");
  }
}

// ---------------------------------------------------------------------------

template <class T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a_in, const Tensor<T>& b_in) {
  const bool swap = a_in.size() < b_in.size();
  const Tensor<T>& a = swap ? b_in : a_in;
  const Tensor<T>& b = swap ? a_in : b_in;
  if (!is_suffix(b.shape(), a.shape())) {
    throw DimensionError("add: shapes " + shape_str(a_in.shape()) + " and " +
                         shape_str(b_in.shape()) + " do not broadcast");
  }
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  Array<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.ptr();
  for (std::size_t i = 0; i < n; i += m)
    for (std::size_t j = 0; j < m; ++j) po[i + j] = pa[i + j] + pb[j];
  Tensor<T> y = make_output(tape, std::move(out), tape.needs_grad(a, b));
  if (y.requires_grad()) {
    tape.record([an = a.shared(), bn = b.shared(), yn = y.shared(), n, m]() {
      if (yn->grad.data.empty()) return;
      const T* g = yn->grad.ptr();
      if (an->requires_grad) an->accumulate(g);
      if (bn->requires_grad) {
        T* gb = bn->grad_buffer();
        for (std::size_t i = 0; i < n; i += m)
          for (std::size_t j = 0; j < m; ++j) gb[j] += g[i + j];
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
  }
  Array<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  Tensor<T> y = make_output(tape, std::move(out), tape.needs_grad(a, b));
  if (y.requires_grad()) {
    tape.record([an = a.shared(), bn = b.shared(), yn = y.shared()]() {
      if (yn->grad.data.empty()) return;
      const T* g = yn->grad.ptr();
      const std::size_t n = yn->value.size();
      if (an->requires_grad) {
        T* ga = an->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        T* gb = bn->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * an->value[i];
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T factor) {
  Array<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  Tensor<T> y = make_output(tape, std::move(out), tape.needs_grad(a));
  if (y.requires_grad()) {
    tape.record([an = a.shared(), yn = y.shared(), factor]() {
      if (yn->grad.data.empty()) return;
      T* ga = an->grad_buffer();
      const T* g = yn->grad.ptr();
      for (std::size_t i = 0; i < yn->value.size(); ++i) ga[i] += g[i] * factor;
    });
  }
  return y;
}

template <class T>
Tensor<T> scale_by(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& s) {
  if (s.size() != 1) throw DimensionError("scale_by: factor must hold one element, got " +
                                          shape_str(s.shape()));
  const T f = s.data()[0];
  Array<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * f;
  Tensor<T> y = make_output(tape, std::move(out), tape.needs_grad(a, s));
  if (y.requires_grad()) {
    tape.record([an = a.shared(), sn = s.shared(), yn = y.shared()]() {
      if (yn->grad.data.empty()) return;
      const T* g = yn->grad.ptr();
      const std::size_t n = yn->value.size();
      if (an->requires_grad) {
        T* ga = an->grad_buffer();
        const T f = sn->value[0];
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * f;
      }
      if (sn->requires_grad) {
        T acc = 0;
        for (std::size_t i = 0; i < n; ++i) acc += g[i] * an->value[i];
        sn->grad_buffer()[0] += acc;
      }
    });
  }
  return y;
}

namespace {

// y = f(x); dx += dy * df(x, y)
template <class T, class F, class DF>
Tensor<T> unary(Tape<T>& tape, const Tensor<T>& a, F f, DF df) {
  Array<T> out(a.shape());
  const T* pa = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(pa[i]);
  Tensor<T> y = make_output(tape, std::move(out), tape.needs_grad(a));
  if (y.requires_grad()) {
    tape.record([an = a.shared(), yn = y.shared(), df]() {
      if (yn->grad.data.empty()) return;
      T* ga = an->grad_buffer();
      const T* g = yn->grad.ptr();
      const T* x = an->value.ptr();
      const T* v = yn->value.ptr();
      for (std::size_t i = 0; i < yn->value.size(); ++i) ga[i] += g[i] * df(x[i], v[i]);
    });
  }
  return y;
}

}  // namespace

template <class T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& a) {
  return unary(
      tape, a, [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> gelu(Tape<T>& tape, const Tensor<T>& a) {
  constexpr T inv_sqrt2 = static_cast<T>(0.70710678118654752440);
  constexpr T inv_sqrt2pi = static_cast<T>(0.39894228040143267794);
  return unary(
      tape, a, [](T x) { return T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2)); },
      [](T x, T) {
        return T(0.5) * (T(1) + std::erf(x * inv_sqrt2)) +
               x * inv_sqrt2pi * std::exp(T(-0.5) * x * x);
      });
}

template <class T>
Tensor<T> tanh_act(Tape<T>& tape, const Tensor<T>& a) {
  return unary(
      tape, a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& a) {
  T acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.data()[i];
  Tensor<T> y = make_output(tape, Array<T>::scalar(acc), tape.needs_grad(a));
  if (y.requires_grad()) {
    tape.record([an = a.shared(), yn = y.shared()]() {
      if (yn->grad.data.empty()) return;
      const T g = yn->grad[0];
      T* ga = an->grad_buffer();
      for (std::size_t i = 0; i < an->value.size(); ++i) ga[i] += g;
    });
  }
  return y;
}

template <class T>
Tensor<T> mean(Tape<T>& tape, const Tensor<T>& a) {
  if (a.size() == 0) throw ContractError("mean: empty tensor");
  return scale(tape, sum(tape, a), T(1) / static_cast<T>(a.size()));
}

template <class T>
Tensor<T> mean_axis(Tape<T>& tape, const Tensor<T>& a, std::size_t axis) {
  const Shape& s = a.shape();
  if (axis >= s.size()) throw DimensionError("mean_axis: axis out of range for " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  Shape os;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) os.push_back(s[i]);
  Array<T> out(os);
  const T inv = T(1) / static_cast<T>(n);
  const T* pa = a.data();
  for (std::size_t o = 0; o < outer; ++o) {
    T* dst = out.ptr() + o * inner;
    for (std::size_t k = 0; k < n; ++k) {
      const T* src = pa + (o * n + k) * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
    for (std::size_t i = 0; i < inner; ++i) dst[i] *= inv;
  }
  Tensor<T> y = make_output(tape, std::move(out), tape.needs_grad(a));
  if (y.requires_grad()) {
    tape.record([an = a.shared(), yn = y.shared(), outer, inner, n, inv]() {
      if (yn->grad.data.empty()) return;
      T* ga = an->grad_buffer();
      const T* g = yn->grad.ptr();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t k = 0; k < n; ++k) {
          T* dst = ga + (o * n + k) * inner;
          const T* src = g + o * inner;
          for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i] * inv;
        }
    });
  }
  return y;
}

template <class T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& a, Shape shape) {
  Array<T> out = a.value().reshaped(std::move(shape));
  Tensor<T> y = make_output(tape, std::move(out), tape.needs_grad(a));
  if (y.requires_grad()) {
    tape.record([an = a.shared(), yn = y.shared()]() {
      if (yn->grad.data.empty()) return;
      an->accumulate(yn->grad.ptr());
    });
  }
  return y;
}

namespace {

// Index map from output position to input position for a permutation.
std::vector<std::size_t> permutation_map(const Shape& in, const std::vector<std::size_t>& perm,
                                         Shape& out_shape) {
  const std::size_t nd = in.size();
  std::vector<std::size_t> in_stride(nd, 1);
  for (std::size_t i = nd; i-- > 1;) in_stride[i - 1] = in_stride[i] * in[i];
  out_shape.assign(nd, 0);
  for (std::size_t i = 0; i < nd; ++i) out_shape[i] = in[perm[i]];
  const std::size_t total = numel(in);
  std::vector<std::size_t> map(total);
  std::vector<std::size_t> idx(nd, 0);
  for (std::size_t o = 0; o < total; ++o) {
    std::size_t src = 0;
    for (std::size_t d = 0; d < nd; ++d) src += idx[d] * in_stride[perm[d]];
    map[o] = src;
    for (std::size_t d = nd; d-- > 0;) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  return map;
}

}  // namespace

template <class T>
Tensor<T> permute(Tape<T>& tape, const Tensor<T>& a, const std::vector<std::size_t>& perm) {
  const Shape& s = a.shape();
  if (perm.size() != s.size()) throw DimensionError("permute: rank mismatch for " + shape_str(s));
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t p : perm) {
    if (p >= perm.size() || seen[p]) throw ContractError("permute: invalid permutation");
    seen[p] = true;
  }
  Shape os;
  auto map = std::make_shared<std::vector<std::size_t>>(permutation_map(s, perm, os));
  Array<T> out(os);
  const T* pa = a.data();
  for (std::size_t o = 0; o < map->size(); ++o) out[o] = pa[(*map)[o]];
  Tensor<T> y = make_output(tape, std::move(out), tape.needs_grad(a));
  if (y.requires_grad()) {
    tape.record([an = a.shared(), yn = y.shared(), map]() {
      if (yn->grad.data.empty()) return;
      T* ga = an->grad_buffer();
      const T* g = yn->grad.ptr();
      for (std::size_t o = 0; o < map->size(); ++o) ga[(*map)[o]] += g[o];
    });
  }
  return y;
}

template <class T>
Tensor<T> concat(Tape<T>& tape, const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw DimensionError("concat: axis out of range for " + shape_str(s0));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i)
      if (i != axis && s[i] != s0[i]) ok = false;
    if (!ok) {
      throw DimensionError("concat: shape " + shape_str(s) + " incompatible with " +
                           shape_str(s0) + " along axis " + std::to_string(axis));
    }
    widths.push_back(s[axis] * inner);
    total += s[axis];
  }
  Shape os = s0;
  os[axis] = total;
  Array<T> out(os);
  const std::size_t row = total * inner;
  std::size_t off = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const T* src = parts[p].data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(src + o * widths[p], widths[p], out.ptr() + o * row + off);
    off += widths[p];
  }
  Tensor<T> y = make_output(tape, std::move(out), tape.needs_grad_any(parts));
  if (y.requires_grad()) {
    std::vector<std::shared_ptr<TensorNode<T>>> nodes;
    for (const auto& p : parts) nodes.push_back(p.shared());
    tape.record([nodes, yn = y.shared(), widths, outer, row]() {
      if (yn->grad.data.empty()) return;
      const T* g = yn->grad.ptr();
      std::size_t off = 0;
      for (std::size_t p = 0; p < nodes.size(); ++p) {
        if (nodes[p]->requires_grad) {
          T* gp = nodes[p]->grad_buffer();
          for (std::size_t o = 0; o < outer; ++o) {
            const T* src = g + o * row + off;
            T* dst = gp + o * widths[p];
            for (std::size_t i = 0; i < widths[p]; ++i) dst[i] += src[i];
          }
        }
        off += widths[p];
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> slice(Tape<T>& tape, const Tensor<T>& a, std::size_t axis, std::size_t start,
                std::size_t length) {
  const Shape& s = a.shape();
  if (axis >= s.size() || start + length > s[axis]) {
    throw DimensionError("slice: range [" + std::to_string(start) + "," +
                         std::to_string(start + length) + ") out of bounds for " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  Shape os = s;
  os[axis] = length;
  Array<T> out(os);
  const std::size_t src_row = s[axis] * inner;
  const std::size_t dst_row = length * inner;
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(a.data() + o * src_row + start * inner, dst_row, out.ptr() + o * dst_row);
  Tensor<T> y = make_output(tape, std::move(out), tape.needs_grad(a));
  if (y.requires_grad()) {
    tape.record([an = a.shared(), yn = y.shared(), outer, src_row, dst_row, start, inner]() {
      if (yn->grad.data.empty()) return;
      T* ga = an->grad_buffer();
      const T* g = yn->grad.ptr();
      for (std::size_t o = 0; o < outer; ++o) {
        T* dst = ga + o * src_row + start * inner;
        const T* src = g + o * dst_row;
        for (std::size_t i = 0; i < dst_row; ++i) dst[i] += src[i];
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------

template <class T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  auto fail = [&]() {
    return DimensionError("matmul: shapes " + shape_str(sa) + " and " + shape_str(sb) +
                          (transpose_b ? " (b transposed)" : "") + " are not compatible");
  };
  if (sa.size() < 2 || sb.size() < 2) throw fail();
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t k = sa[sa.size() - 1];
  const std::size_t kb = transpose_b ? sb[sb.size() - 1] : sb[sb.size() - 2];
  const std::size_t n = transpose_b ? sb[sb.size() - 2] : sb[sb.size() - 1];
  if (k != kb) throw fail();

  // Broadcast batch dimensions.
  Shape ba(sa.begin(), sa.end() - 2);
  Shape bb(sb.begin(), sb.end() - 2);
  const std::size_t nd = std::max(ba.size(), bb.size());
  ba.insert(ba.begin(), nd - ba.size(), 1);
  bb.insert(bb.begin(), nd - bb.size(), 1);
  Shape bo(nd);
  for (std::size_t i = 0; i < nd; ++i) {
    if (ba[i] != bb[i] && ba[i] != 1 && bb[i] != 1) throw fail();
    bo[i] = std::max(ba[i], bb[i]);
  }
  const std::size_t nbatch = numel(bo);
  std::vector<std::size_t> ia(nbatch), ib(nbatch);
  {
    std::vector<std::size_t> idx(nd, 0);
    for (std::size_t q = 0; q < nbatch; ++q) {
      std::size_t oa = 0, ob = 0;
      for (std::size_t d = 0; d < nd; ++d) {
        oa = oa * ba[d] + (ba[d] == 1 ? 0 : idx[d]);
        ob = ob * bb[d] + (bb[d] == 1 ? 0 : idx[d]);
      }
      ia[q] = oa;
      ib[q] = ob;
      for (std::size_t d = nd; d-- > 0;) {
        if (++idx[d] < bo[d]) break;
        idx[d] = 0;
      }
    }
  }
  Shape os = bo;
  os.push_back(m);
  os.push_back(n);
  Array<T> out(os);
  for (std::size_t q = 0; q < nbatch; ++q) {
    CMapMat<T> A(a.data() + ia[q] * m * k, m, k);
    MapMat<T> C(out.ptr() + q * m * n, m, n);
    if (transpose_b) {
      CMapMat<T> B(b.data() + ib[q] * n * k, n, k);
      C.noalias() = A * B.transpose();
    } else {
      CMapMat<T> B(b.data() + ib[q] * k * n, k, n);
      C.noalias() = A * B;
    }
  }
  Tensor<T> y = make_output(tape, std::move(out), tape.needs_grad(a, b));
  if (y.requires_grad()) {
    tape.record([an = a.shared(), bn = b.shared(), yn = y.shared(), ia = std::move(ia),
                 ib = std::move(ib), m, k, n, transpose_b]() {
      if (yn->grad.data.empty()) return;
      T* ga = an->requires_grad ? an->grad_buffer() : nullptr;
      T* gb = bn->requires_grad ? bn->grad_buffer() : nullptr;
      for (std::size_t q = 0; q < ia.size(); ++q) {
        CMapMat<T> G(yn->grad.ptr() + q * m * n, m, n);
        CMapMat<T> A(an->value.ptr() + ia[q] * m * k, m, k);
        if (transpose_b) {
          CMapMat<T> B(bn->value.ptr() + ib[q] * n * k, n, k);
          if (ga) MapMat<T>(ga + ia[q] * m * k, m, k).noalias() += G * B;
          if (gb) MapMat<T>(gb + ib[q] * n * k, n, k).noalias() += G.transpose() * A;
        } else {
          CMapMat<T> B(bn->value.ptr() + ib[q] * k * n, k, n);
          if (ga) MapMat<T>(ga + ia[q] * m * k, m, k).noalias() += G * B.transpose();
          if (gb) MapMat<T>(gb + ib[q] * k * n, k, n).noalias() += A.transpose() * G;
        }
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> linear(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  const Shape& sx = x.shape();
  const Shape& sw = weight.shape();
  if (sw.size() != 2 || sx.empty() || sx.back() != sw[1] ||
      (bias.defined() && bias.shape() != Shape{sw[0]})) {
    throw DimensionError("linear: input " + shape_str(sx) + " weight " + shape_str(sw) +
                         (bias.defined() ? " bias " + shape_str(bias.shape()) : ""));
  }
  const std::size_t in = sw[1];
  const std::size_t outf = sw[0];
  const std::size_t rows = x.size() / in;
  Shape os = sx;
  os.back() = outf;
  Array<T> out(os);
  {
    CMapMat<T> X(x.data(), rows, in);
    CMapMat<T> W(weight.data(), outf, in);
    MapMat<T> Y(out.ptr(), rows, outf);
    Y.noalias() = X * W.transpose();
    if (bias.defined()) {
      Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bv(bias.data(), outf);
      Y.rowwise() += bv;
    }
  }
  const bool track = tape.needs_grad(x, weight) || (bias.defined() && tape.needs_grad(bias));
  Tensor<T> y = make_output(tape, std::move(out), track);
  if (y.requires_grad()) {
    std::shared_ptr<TensorNode<T>> bnode = bias.defined() ? bias.shared() : nullptr;
    tape.record([xn = x.shared(), wn = weight.shared(), bnode, yn = y.shared(), rows, in,
                 outf]() {
      if (yn->grad.data.empty()) return;
      CMapMat<T> G(yn->grad.ptr(), rows, outf);
      if (xn->requires_grad) {
        CMapMat<T> W(wn->value.ptr(), outf, in);
        MapMat<T>(xn->grad_buffer(), rows, in).noalias() += G * W;
      }
      if (wn->requires_grad) {
        CMapMat<T> X(xn->value.ptr(), rows, in);
        MapMat<T>(wn->grad_buffer(), outf, in).noalias() += G.transpose() * X;
      }
      if (bnode && bnode->requires_grad) {
        // Fixed row order: Eigen's vectorized reduction depends on pointer
        // alignment and would make training runs differ bitwise.
        T* gb = bnode->grad_buffer();
        const T* g = yn->grad.ptr();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t o = 0; o < outf; ++o) gb[o] += g[r * outf + o];
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Convolution via im2col + GEMM, processed in chunks of images.

namespace {

struct ConvGeometry {
  std::size_t batch, cin, h, w, cout, kh, kw, stride, pad, oh, ow;
  std::size_t krows() const { return cin * kh * kw; }
  std::size_t opix() const { return oh * ow; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

// Output columns [lo, hi) whose input column ox*stride - pad + j lies inside [0, w).
struct ColumnRange {
  std::size_t lo, hi;
};

ColumnRange valid_columns(const struct ConvGeometry& g, std::size_t j);

// col[(c*kh+i)*kw+j, img*opix + oy*ow + ox] = x[img0+img, c, oy*s-p+i, ox*s-p+j]
template <class T>
void im2col(const T* x, const ConvGeometry& g, std::size_t img0, std::size_t nimg, T* col) {
  const std::size_t ncols = nimg * g.opix();
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        const ColumnRange r = valid_columns(g, j);
        const long shift = static_cast<long>(j) - static_cast<long>(g.pad);
        T* row = col + ((c * g.kh + i) * g.kw + j) * ncols;
        for (std::size_t im = 0; im < nimg; ++im) {
          const T* plane = x + ((img0 + im) * g.cin + c) * g.h * g.w;
          T* dst = row + im * g.opix();
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
            T* drow = dst + oy * g.ow;
            if (iy < 0 || iy >= static_cast<long>(g.h) || r.lo >= r.hi) {
              std::fill_n(drow, g.ow, T(0));
              continue;
            }
            const T* srow = plane + static_cast<std::size_t>(iy) * g.w;
            std::fill(drow, drow + r.lo, T(0));
            std::fill(drow + r.hi, drow + g.ow, T(0));
            const T* src = srow + (static_cast<long>(r.lo * g.stride) + shift);
            if (g.stride == 1) {
              std::copy_n(src, r.hi - r.lo, drow + r.lo);
            } else {
              for (std::size_t ox = r.lo, k = 0; ox < r.hi; ++ox, k += g.stride) drow[ox] = src[k];
            }
          }
        }
      }
}

template <class T>
void col2im_add(const T* col, const ConvGeometry& g, std::size_t img0, std::size_t nimg, T* dx) {
  const std::size_t ncols = nimg * g.opix();
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        const ColumnRange r = valid_columns(g, j);
        if (r.lo >= r.hi) continue;
        const long shift = static_cast<long>(j) - static_cast<long>(g.pad);
        const T* row = col + ((c * g.kh + i) * g.kw + j) * ncols;
        for (std::size_t im = 0; im < nimg; ++im) {
          T* plane = dx + ((img0 + im) * g.cin + c) * g.h * g.w;
          const T* src = row + im * g.opix();
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
            T* drow = plane + static_cast<std::size_t>(iy) * g.w + (static_cast<long>(r.lo * g.stride) + shift);
            const T* srow = src + oy * g.ow;
            if (g.stride == 1) {
              for (std::size_t ox = r.lo; ox < r.hi; ++ox) drow[ox - r.lo] += srow[ox];
            } else {
              for (std::size_t ox = r.lo, k = 0; ox < r.hi; ++ox, k += g.stride) drow[k] += srow[ox];
            }
          }
        }
      }
}

ColumnRange valid_columns(const ConvGeometry& g, std::size_t j) {
  // need 0 <= ox*s + j - p <= w - 1
  const long s = static_cast<long>(g.stride);
  const long off = static_cast<long>(j) - static_cast<long>(g.pad);
  long lo = off >= 0 ? 0 : (-off + s - 1) / s;
  long hi = (static_cast<long>(g.w) - 1 - off);
  hi = hi < 0 ? 0 : hi / s + 1;
  lo = std::min<long>(lo, static_cast<long>(g.ow));
  hi = std::min<long>(hi, static_cast<long>(g.ow));
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(std::max(lo, hi))};
}

std::size_t images_per_chunk(const ConvGeometry& g) {
  const std::size_t per_image = g.krows() * g.opix();
  return std::max<std::size_t>(1, std::min(g.batch, kMaxColElements / std::max<std::size_t>(1, per_image)));
}

}  // namespace

template <class T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias, Conv2dOptions options) {
  const Shape& sx = x.shape();
  const Shape& sw = weight.shape();
  if (sx.size() != 4 || sw.size() != 4 || sx[1] != sw[1] ||
      (bias.defined() && bias.shape() != Shape{sw[0]})) {
    throw DimensionError("conv2d: input " + shape_str(sx) + " vs weight " + shape_str(sw) +
                         (bias.defined() ? " bias " + shape_str(bias.shape()) : ""));
  }
  if (options.stride == 0) throw ContractError("conv2d: stride must be positive");
  ConvGeometry g{};
  g.batch = sx[0];
  g.cin = sx[1];
  g.h = sx[2];
  g.w = sx[3];
  g.cout = sw[0];
  g.kh = sw[2];
  g.kw = sw[3];
  g.stride = options.stride;
  g.pad = options.padding;
  if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw) {
    throw DimensionError("conv2d: kernel " + shape_str(sw) + " larger than padded input " +
                         shape_str(sx));
  }
  g.oh = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.ow = (g.w + 2 * g.pad - g.kw) / g.stride + 1;

  Array<T> out(Shape{g.batch, g.cout, g.oh, g.ow});
  const std::size_t chunk = images_per_chunk(g);
  std::vector<T> col;
  RowMat<T> ymat;
  CMapMat<T> W(weight.data(), g.cout, g.krows());
  for (std::size_t img0 = 0; img0 < g.batch; img0 += chunk) {
    const std::size_t nimg = std::min(chunk, g.batch - img0);
    const std::size_t ncols = nimg * g.opix();
    if (g.pointwise()) {
      for (std::size_t im = 0; im < nimg; ++im) {
        CMapMat<T> X(x.data() + (img0 + im) * g.cin * g.opix(), g.cin, g.opix());
        MapMat<T>(out.ptr() + (img0 + im) * g.cout * g.opix(), g.cout, g.opix()).noalias() =
            W * X;
      }
    } else {
      col.resize(g.krows() * ncols);
      im2col(x.data(), g, img0, nimg, col.data());
      ymat.resize(g.cout, ncols);
      ymat.noalias() = W * CMapMat<T>(col.data(), g.krows(), ncols);
      for (std::size_t im = 0; im < nimg; ++im)
        for (std::size_t co = 0; co < g.cout; ++co)
          std::copy_n(ymat.data() + co * ncols + im * g.opix(), g.opix(),
                      out.ptr() + ((img0 + im) * g.cout + co) * g.opix());
    }
  }
  if (bias.defined()) {
    for (std::size_t b = 0; b < g.batch; ++b)
      for (std::size_t co = 0; co < g.cout; ++co) {
        T* p = out.ptr() + (b * g.cout + co) * g.opix();
        const T bv = bias.data()[co];
        for (std::size_t q = 0; q < g.opix(); ++q) p[q] += bv;
      }
  }

  const bool track = tape.needs_grad(x, weight) || (bias.defined() && tape.needs_grad(bias));
  Tensor<T> y = make_output(tape, std::move(out), track);
  if (y.requires_grad()) {
    std::shared_ptr<TensorNode<T>> bnode = bias.defined() ? bias.shared() : nullptr;
    tape.record([xn = x.shared(), wn = weight.shared(), bnode, yn = y.shared(), g]() {
      if (yn->grad.data.empty()) return;
      const T* gy = yn->grad.ptr();
      if (bnode && bnode->requires_grad) {
        T* gb = bnode->grad_buffer();
        for (std::size_t b = 0; b < g.batch; ++b)
          for (std::size_t co = 0; co < g.cout; ++co) {
            const T* p = gy + (b * g.cout + co) * g.opix();
            T acc = 0;
            for (std::size_t q = 0; q < g.opix(); ++q) acc += p[q];
            gb[co] += acc;
          }
      }
      const bool need_w = wn->requires_grad;
      const bool need_x = xn->requires_grad;
      if (!need_w && !need_x) return;
      CMapMat<T> W(wn->value.ptr(), g.cout, g.krows());
      T* gw = need_w ? wn->grad_buffer() : nullptr;
      T* gx = need_x ? xn->grad_buffer() : nullptr;
      const std::size_t chunk = images_per_chunk(g);
      std::vector<T> col;
      RowMat<T> gmat, dcol;
      for (std::size_t img0 = 0; img0 < g.batch; img0 += chunk) {
        const std::size_t nimg = std::min(chunk, g.batch - img0);
        const std::size_t ncols = nimg * g.opix();
        if (g.pointwise()) {
          for (std::size_t im = 0; im < nimg; ++im) {
            CMapMat<T> G(gy + (img0 + im) * g.cout * g.opix(), g.cout, g.opix());
            if (gw) {
              CMapMat<T> X(xn->value.ptr() + (img0 + im) * g.cin * g.opix(), g.cin, g.opix());
              MapMat<T>(gw, g.cout, g.cin).noalias() += G * X.transpose();
            }
            if (gx) {
              MapMat<T>(gx + (img0 + im) * g.cin * g.opix(), g.cin, g.opix()).noalias() +=
                  W.transpose() * G;
            }
          }
          continue;
        }
        gmat.resize(g.cout, ncols);
        for (std::size_t im = 0; im < nimg; ++im)
          for (std::size_t co = 0; co < g.cout; ++co)
            std::copy_n(gy + ((img0 + im) * g.cout + co) * g.opix(), g.opix(),
                        gmat.data() + co * ncols + im * g.opix());
        if (gw) {
          col.resize(g.krows() * ncols);
          im2col(xn->value.ptr(), g, img0, nimg, col.data());
          MapMat<T>(gw, g.cout, g.krows()).noalias() +=
              gmat * CMapMat<T>(col.data(), g.krows(), ncols).transpose();
        }
        if (gx) {
          dcol.resize(g.krows(), ncols);
          dcol.noalias() = W.transpose() * gmat;
          col2im_add(dcol.data(), g, img0, nimg, gx);
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------

template <class T>
Tensor<T> softmax(Tape<T>& tape, const Tensor<T>& x, int axis) {
  const Shape& s = x.shape();
  if (s.empty()) throw DimensionError("softmax: scalar input");
  const int nd = static_cast<int>(s.size());
  const int ax = axis < 0 ? axis + nd : axis;
  if (ax < 0 || ax >= nd) throw DimensionError("softmax: axis out of range for " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= s[i];
  for (int i = ax + 1; i < nd; ++i) inner *= s[i];
  const std::size_t n = s[ax];
  Array<T> out(s);
  const T* px = x.data();
  for (std::size_t i = 0; i < x.size(); ++i)
    if (std::isnan(px[i])) throw NumericError("softmax: NaN input");
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const T* src = px + o * n * inner + in;
      T* dst = out.ptr() + o * n * inner + in;
      T mx = src[0];
      for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, src[k * inner]);
      T z = 0;
      for (std::size_t k = 0; k < n; ++k) {
        const T e = std::exp(src[k * inner] - mx);
        dst[k * inner] = e;
        z += e;
      }
      const T invz = T(1) / z;
      for (std::size_t k = 0; k < n; ++k) dst[k * inner] *= invz;
    }
  Tensor<T> y = make_output(tape, std::move(out), tape.needs_grad(x));
  if (y.requires_grad()) {
    tape.record([xn = x.shared(), yn = y.shared(), outer, inner, n]() {
      if (yn->grad.data.empty()) return;
      T* gx = xn->grad_buffer();
      const T* g = yn->grad.ptr();
      const T* v = yn->value.ptr();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * n * inner + in;
          T dot = 0;
          for (std::size_t k = 0; k < n; ++k) dot += g[base + k * inner] * v[base + k * inner];
          for (std::size_t k = 0; k < n; ++k) {
            const std::size_t i = base + k * inner;
            gx[i] += v[i] * (g[i] - dot);
          }
        }
    });
  }
  return y;
}

template <class T>
Tensor<T> layer_norm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps) {
  const Shape& s = x.shape();
  if (s.empty() || s.back() == 0) throw DimensionError("layer_norm: empty feature dimension");
  const std::size_t d = s.back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layer_norm: input " + shape_str(s) + " vs gamma " +
                         shape_str(gamma.shape()) + " beta " + shape_str(beta.shape()));
  }
  const std::size_t rows = x.size() / d;
  Array<T> out(s);
  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto invstd = std::make_shared<std::vector<T>>(rows);
  const T* px = x.data();
  const T* pg = gamma.data();
  const T* pb = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = px + r * d;
    T mu = 0;
    for (std::size_t i = 0; i < d; ++i) mu += src[i];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t i = 0; i < d; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + eps);
    (*invstd)[r] = is;
    for (std::size_t i = 0; i < d; ++i) {
      const T h = (src[i] - mu) * is;
      (*xhat)[r * d + i] = h;
      out[r * d + i] = pg[i] * h + pb[i];
    }
  }
  Tensor<T> y = make_output(tape, std::move(out), tape.needs_grad(x, gamma, beta));
  if (y.requires_grad()) {
    tape.record([xn = x.shared(), gn = gamma.shared(), bn = beta.shared(), yn = y.shared(),
                 xhat, invstd, rows, d]() {
      if (yn->grad.data.empty()) return;
      const T* g = yn->grad.ptr();
      const T* pg = gn->value.ptr();
      if (gn->requires_grad || bn->requires_grad) {
        T* gg = gn->requires_grad ? gn->grad_buffer() : nullptr;
        T* gb = bn->requires_grad ? bn->grad_buffer() : nullptr;
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t i = 0; i < d; ++i) {
            if (gg) gg[i] += g[r * d + i] * (*xhat)[r * d + i];
            if (gb) gb[i] += g[r * d + i];
          }
      }
      if (xn->requires_grad) {
        T* gx = xn->grad_buffer();
        const T invd = T(1) / static_cast<T>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          T s1 = 0, s2 = 0;
          for (std::size_t i = 0; i < d; ++i) {
            const T dh = g[r * d + i] * pg[i];
            s1 += dh;
            s2 += dh * (*xhat)[r * d + i];
          }
          const T is = (*invstd)[r];
          for (std::size_t i = 0; i < d; ++i) {
            const T dh = g[r * d + i] * pg[i];
            gx[r * d + i] += is * (dh - invd * s1 - (*xhat)[r * d + i] * invd * s2);
          }
        }
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> batch_norm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, BatchNormState<T>& state, Mode mode, T eps) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw DimensionError("batch_norm: expected (B,C,H,W), got " + shape_str(s));
  const std::size_t B = s[0], C = s[1], P = s[2] * s[3];
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C} ||
      state.running_mean.shape != Shape{C} || state.running_var.shape != Shape{C}) {
    throw DimensionError("batch_norm: channel count " + std::to_string(C) +
                         " does not match parameters " + shape_str(gamma.shape()));
  }
  const std::size_t count = B * P;
  Array<T> out(s);
  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto invstd = std::make_shared<std::vector<T>>(C);
  const T* px = x.data();
  const T* pg = gamma.data();
  const T* pb = beta.data();
  const bool train = mode == Mode::train;
  if (train && count < 2) {
    throw ContractError("batch_norm: train mode needs at least 2 values per channel, got " +
                        std::to_string(count));
  }
  const T momentum = static_cast<T>(kBatchNormMomentum);
  for (std::size_t c = 0; c < C; ++c) {
    T mu, var;
    if (train) {
      mu = 0;
      for (std::size_t b = 0; b < B; ++b) {
        const T* p = px + (b * C + c) * P;
        for (std::size_t q = 0; q < P; ++q) mu += p[q];
      }
      mu /= static_cast<T>(count);
      var = 0;
      for (std::size_t b = 0; b < B; ++b) {
        const T* p = px + (b * C + c) * P;
        for (std::size_t q = 0; q < P; ++q) var += (p[q] - mu) * (p[q] - mu);
      }
      const T unbiased = var / static_cast<T>(count - 1);
      var /= static_cast<T>(count);
      state.running_mean[c] = (T(1) - momentum) * state.running_mean[c] + momentum * mu;
      state.running_var[c] = (T(1) - momentum) * state.running_var[c] + momentum * unbiased;
    } else {
      mu = state.running_mean[c];
      var = state.running_var[c];
    }
    const T is = T(1) / std::sqrt(var + eps);
    (*invstd)[c] = is;
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t off = (b * C + c) * P;
      for (std::size_t q = 0; q < P; ++q) {
        const T h = (px[off + q] - mu) * is;
        (*xhat)[off + q] = h;
        out[off + q] = pg[c] * h + pb[c];
      }
    }
  }
  if (train) state.updated = true;

  Tensor<T> y = make_output(tape, std::move(out), tape.needs_grad(x, gamma, beta));
  if (y.requires_grad()) {
    tape.record([xn = x.shared(), gn = gamma.shared(), bn = beta.shared(), yn = y.shared(), xhat,
                 invstd, B, C, P, train]() {
      if (yn->grad.data.empty()) return;
      const T* g = yn->grad.ptr();
      const T* pg = gn->value.ptr();
      T* gg = gn->requires_grad ? gn->grad_buffer() : nullptr;
      T* gb = bn->requires_grad ? bn->grad_buffer() : nullptr;
      T* gx = xn->requires_grad ? xn->grad_buffer() : nullptr;
      const T cnt = static_cast<T>(B * P);
      for (std::size_t c = 0; c < C; ++c) {
        T sdy = 0, sdyh = 0;
        for (std::size_t b = 0; b < B; ++b) {
          const std::size_t off = (b * C + c) * P;
          for (std::size_t q = 0; q < P; ++q) {
            sdy += g[off + q];
            sdyh += g[off + q] * (*xhat)[off + q];
          }
        }
        if (gg) gg[c] += sdyh;
        if (gb) gb[c] += sdy;
        if (!gx) continue;
        const T k = pg[c] * (*invstd)[c];
        for (std::size_t b = 0; b < B; ++b) {
          const std::size_t off = (b * C + c) * P;
          for (std::size_t q = 0; q < P; ++q) {
            if (train) {
              gx[off + q] += k * (g[off + q] - sdy / cnt - (*xhat)[off + q] * sdyh / cnt);
            } else {
              gx[off + q] += k * g[off + q];
            }
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------

namespace {

struct Tap {
  std::size_t i0, i1;
  double w;  // weight of i1
};

std::vector<Tap> resize_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double src =
        out > 1 ? static_cast<double>(o) * static_cast<double>(in - 1) / static_cast<double>(out - 1)
                : 0.0;
    std::size_t i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

template <class T>
void resize_planes(const T* src, T* dst, std::size_t planes, std::size_t h, std::size_t w,
                   const std::vector<Tap>& ty, const std::vector<Tap>& tx) {
  const std::size_t oh = ty.size(), ow = tx.size();
  for (std::size_t p = 0; p < planes; ++p) {
    const T* s = src + p * h * w;
    T* d = dst + p * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      const T wy = static_cast<T>(ty[y].w);
      const T* r0 = s + ty[y].i0 * w;
      const T* r1 = s + ty[y].i1 * w;
      for (std::size_t x = 0; x < ow; ++x) {
        const T wx = static_cast<T>(tx[x].w);
        const T top = r0[tx[x].i0] + wx * (r0[tx[x].i1] - r0[tx[x].i0]);
        const T bot = r1[tx[x].i0] + wx * (r1[tx[x].i1] - r1[tx[x].i0]);
        d[y * ow + x] = top + wy * (bot - top);
      }
    }
  }
}

}  // namespace

template <class T>
Array<T> bilinear_resize(const Array<T>& x, std::size_t out_h, std::size_t out_w) {
  if (x.ndim() < 2) throw DimensionError("bilinear_resize: need at least 2 axes, got " + shape_str(x.shape));
  if (out_h == 0 || out_w == 0) throw ContractError("bilinear_resize: output size must be >= 1");
  const std::size_t h = x.shape[x.ndim() - 2], w = x.shape[x.ndim() - 1];
  if (h == out_h && w == out_w) return x;
  if (h == 0 || w == 0) throw DimensionError("bilinear_resize: empty input " + shape_str(x.shape));
  Shape os = x.shape;
  os[os.size() - 2] = out_h;
  os[os.size() - 1] = out_w;
  Array<T> out(os);
  resize_planes(x.ptr(), out.ptr(), x.size() / (h * w), h, w, resize_taps(h, out_h),
                resize_taps(w, out_w));
  return out;
}

template <class T>
Tensor<T> bilinear_resize(Tape<T>& tape, const Tensor<T>& x, std::size_t out_h,
                          std::size_t out_w) {
  if (x.ndim() != 4) throw DimensionError("bilinear_resize: expected (B,C,H,W), got " + shape_str(x.shape()));
  const std::size_t h = x.shape()[2], w = x.shape()[3];
  Array<T> out = bilinear_resize(x.value(), out_h, out_w);
  Tensor<T> y = make_output(tape, std::move(out), tape.needs_grad(x));
  if (y.requires_grad()) {
    tape.record([xn = x.shared(), yn = y.shared(), h, w, out_h, out_w]() {
      if (yn->grad.data.empty()) return;
      const auto ty = resize_taps(h, out_h);
      const auto tx = resize_taps(w, out_w);
      const std::size_t planes = xn->value.size() / (h * w);
      T* gx = xn->grad_buffer();
      const T* g = yn->grad.ptr();
      for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t yy = 0; yy < out_h; ++yy) {
          const T wy = static_cast<T>(ty[yy].w);
          for (std::size_t xx = 0; xx < out_w; ++xx) {
            const T wx = static_cast<T>(tx[xx].w);
            const T gv = g[(p * out_h + yy) * out_w + xx];
            T* base = gx + p * h * w;
            base[ty[yy].i0 * w + tx[xx].i0] += gv * (T(1) - wy) * (T(1) - wx);
            base[ty[yy].i0 * w + tx[xx].i1] += gv * (T(1) - wy) * wx;
            base[ty[yy].i1 * w + tx[xx].i0] += gv * wy * (T(1) - wx);
            base[ty[yy].i1 * w + tx[xx].i1] += gv * wy * wx;
          }
        }
    });
  }
  return y;
}

template <class T>
Tensor<T> dropout(Tape<T>& tape, const Tensor<T>& x, double rate, std::mt19937_64& rng,
                  Mode mode) {
  if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout: rate must lie in [0,1)");
  if (mode == Mode::eval || rate == 0.0) return x;
  Array<T> mask(x.shape());
  std::bernoulli_distribution keep(1.0 - rate);
  const T s = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& m : mask.data) m = keep(rng) ? s : T(0);
  return mul(tape, x, constant(std::move(mask)));
}

// ---------------------------------------------------------------------------

void dft_inplace(std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  if (n <= 1) return;
  if ((n & (n - 1)) != 0) {
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
      std::complex<double> acc = 0;
      for (std::size_t t = 0; t < n; ++t) {
        const double ang = -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) /
                           static_cast<double>(n);
        acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
      }
      out[k] = acc;
    }
    x = std::move(out);
    return;
  }
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len)
      for (std::size_t k = 0; k < len / 2; ++k) {
        const double a = ang * static_cast<double>(k);
        const std::complex<double> wk(std::cos(a), std::sin(a));
        const std::complex<double> u = x[i + k];
        const std::complex<double> v = x[i + k + len / 2] * wk;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
      }
  }
}

Array<double> fft_power(std::span<const complex64> x) {
  if (x.empty()) throw ContractError("fft_power: empty input");
  std::vector<std::complex<double>> buf(x.begin(), x.end());
  dft_inplace(buf);
  Array<double> out(Shape{x.size()});
  for (std::size_t k = 0; k < buf.size(); ++k) out[k] = std::norm(buf[k]);
  return out;
}

// ---------------------------------------------------------------------------

#define BEVBEAM_INSTANTIATE_OPS(T)                                                              \
  template void check_finite<T>(const Array<T>&, const char*);                                 \
  template Tensor<T> add<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> mul<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> scale<T>(Tape<T>&, const Tensor<T>&, T);                                  \
  template Tensor<T> scale_by<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> relu<T>(Tape<T>&, const Tensor<T>&);                                      \
  template Tensor<T> gelu<T>(Tape<T>&, const Tensor<T>&);                                      \
  template Tensor<T> tanh_act<T>(Tape<T>&, const Tensor<T>&);                                  \
  template Tensor<T> sum<T>(Tape<T>&, const Tensor<T>&);                                       \
  template Tensor<T> mean<T>(Tape<T>&, const Tensor<T>&);                                      \
  template Tensor<T> mean_axis<T>(Tape<T>&, const Tensor<T>&, std::size_t);                    \
  template Tensor<T> reshape<T>(Tape<T>&, const Tensor<T>&, Shape);                            \
  template Tensor<T> permute<T>(Tape<T>&, const Tensor<T>&, const std::vector<std::size_t>&);  \
  template Tensor<T> concat<T>(Tape<T>&, const std::vector<Tensor<T>>&, std::size_t);          \
  template Tensor<T> slice<T>(Tape<T>&, const Tensor<T>&, std::size_t, std::size_t,            \
                              std::size_t);                                                    \
  template Tensor<T> matmul<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&, bool);            \
  template Tensor<T> linear<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> conv2d<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                               Conv2dOptions);                                                 \
  template Tensor<T> softmax<T>(Tape<T>&, const Tensor<T>&, int);                              \
  template Tensor<T> layer_norm<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&,               \
                                   const Tensor<T>&, T);                                       \
  template Tensor<T> batch_norm<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&,               \
                                   const Tensor<T>&, BatchNormState<T>&, Mode, T);             \
  template Tensor<T> bilinear_resize<T>(Tape<T>&, const Tensor<T>&, std::size_t, std::size_t); \
  template Array<T> bilinear_resize<T>(const Array<T>&, std::size_t, std::size_t);             \
  template Tensor<T> dropout<T>(Tape<T>&, const Tensor<T>&, double, std::mt19937_64&, Mode);

BEVBEAM_INSTANTIATE_OPS(float)
BEVBEAM_INSTANTIATE_OPS(double)

#undef BEVBEAM_INSTANTIATE_OPS

}  // namespace bevbeam
