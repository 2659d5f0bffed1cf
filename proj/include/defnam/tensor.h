// Copyright 2026 The defnam Authors.
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

// Dense f64 tensors and a tape-based reverse-mode autodiff.
//
// A Var is either a constant (no tape) or a node recorded on a Tape. An op
// records itself on the tape of its differentiable inputs; when no input is
// differentiable the op runs in plain forward mode and nothing is retained.
// Tensors are immutable after construction and share their storage, so
// copying a Tensor or wrapping it in a Var is cheap.
//
// Broadcasting follows trailing-axis alignment: for binary ops the shape of
// the smaller operand must equal the trailing dimensions of the larger one.

#ifndef DEFNAM_TENSOR_H_
#define DEFNAM_TENSOR_H_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace defnam {

using Shape = std::vector<std::size_t>;

std::size_t NumElements(const Shape& shape);
std::string ShapeToString(const Shape& shape);

// Additive mask value for excluded attention positions. Large enough that
// exp(x - max) underflows to exactly zero, finite so that max-pooling over a
// fully masked column stays finite.
inline constexpr double kMaskedLogit = -1e30;

class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values);

  static Tensor Zeros(Shape shape);
  static Tensor Filled(Shape shape, double value);
  static Tensor Scalar(double value);
  static Tensor Vector(std::vector<double> values);
  static Tensor Matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return values_->size(); }

  std::span<const double> values() const { return *values_; }
  const double* data() const { return values_->data(); }
  double operator[](std::size_t i) const { return (*values_)[i]; }
  double at(std::size_t row, std::size_t col) const;
  // Value of a single-element tensor.
  double item() const;

  bool AllFinite() const;
  // Same storage, new shape with equal element count.
  Tensor Reshaped(Shape shape) const;

 private:
  Shape shape_;
  std::shared_ptr<const std::vector<double>> values_;
};

class Tape;

namespace internal {

struct Node {
  Tensor value;
  std::vector<double> grad;  // empty until a consumer contributes
  Tape* tape = nullptr;      // non-null iff the node requires grad
  std::function<void(const std::vector<double>& out_grad)> backward;
  const char* op = "leaf";
};

}  // namespace internal

class Var {
 public:
  Var() = default;

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  bool requires_grad() const { return node_ && node_->tape != nullptr; }

 private:
  friend class Tape;
  friend Var Constant(Tensor value);
  friend struct OpBuilder;
  explicit Var(std::shared_ptr<internal::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<internal::Node> node_;
};

// Wraps a tensor as a non-differentiable input.
Var Constant(Tensor value);

// Records differentiable ops in execution order. Confined to one thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // A differentiable input owned by this tape.
  Var Leaf(Tensor value);

  // Seeds d(loss)/d(loss) = 1 and walks the recorded ops in exact reverse
  // order. `loss` must be a single-element Var recorded on this tape.
  void Backward(const Var& loss);

  // Accumulated gradient of `v` (zeros when nothing reached it).
  Tensor Grad(const Var& v) const;

  std::size_t num_ops() const { return ops_.size(); }

 private:
  friend struct OpBuilder;
  std::vector<std::shared_ptr<internal::Node>> leaves_;
  std::vector<std::shared_ptr<internal::Node>> ops_;
};

// ---------------------------------------------------------------------------
// Ops. All outputs are checked for finiteness; a NaN/Inf raises NumericError.

// a[..., k] x b[k, n] -> [..., n]. Leading axes of `a` are flattened.
Var MatMul(const Var& a, const Var& b);
Var Transpose(const Var& a);

Var Add(const Var& a, const Var& b);
Var Sub(const Var& a, const Var& b);
Var Mul(const Var& a, const Var& b);
Var Scale(const Var& a, double factor);

Var Tanh(const Var& a);
Var Relu(const Var& a);

// Reductions remove `axis`. MaxOverAxis routes the gradient to the first
// (lowest-index) maximal element.
Var MaxOverAxis(const Var& a, std::size_t axis);
Var MeanOverAxis(const Var& a, std::size_t axis);
Var SumOverAxis(const Var& a, std::size_t axis);
Var Sum(const Var& a);
Var Mean(const Var& a);

// Softmax along the last axis.
Var SoftmaxLastAxis(const Var& a);

// -sum_i target_i * log softmax(logits)_i for a rank-1 `logits`. `target`
// must be a distribution (entries >= 0, sum 1 within 1e-9).
Var SoftmaxCrossEntropy(const Var& logits, const Tensor& target);

// Mean over rows of -log softmax(logits[r])[labels[r]]; logits is [R, K].
Var SparseSoftmaxCrossEntropy(const Var& logits, std::span<const int> labels);

// Row gather from a rank-2 table: out[i] = table[ids[i]].
Var GatherRows(const Var& table, std::span<const int> ids);
// Inverse placement: out has `num_rows` rows, zeros except
// out[dest_rows[i]] = src[i]. Destinations must be distinct.
Var ScatterRows(const Var& src, std::span<const std::size_t> dest_rows,
                std::size_t num_rows);

Var Reshape(const Var& a, Shape shape);
// Concatenation / slicing along axis 0.
Var ConcatRows(const Var& a, const Var& b);
Var SliceRows(const Var& a, std::size_t begin, std::size_t end);

// Forward identity, blocks all gradient flow.
Var StopGradient(const Var& a);

// Normalizes over the last axis, then applies gain and bias (both [d]).
Var LayerNorm(const Var& x, const Var& gain, const Var& bias,
              double eps = 1e-5);

// Multi-head scaled dot-product self-attention restricted to contiguous
// segments of rows. q, k, v are [P, H*dh] where P = sum(segment_lengths);
// row i only attends to rows of its own segment.
Var SegmentAttention(const Var& q, const Var& k, const Var& v,
                     std::span<const std::size_t> segment_lengths,
                     std::size_t heads);

// x is [N, L, ...]; out[n] = mean of x[n, 0:lengths[n]]. Positions at or
// beyond the length never contribute. Every length must be in [1, L].
Var PrefixMean(const Var& x, std::span<const int> lengths);

// Fused GatherRows + PrefixMean: ids is N*L row-major, out is [N, d].
Var EmbeddingBagMean(const Var& table, std::span<const int> ids,
                     std::size_t max_len, std::span<const int> lengths);

}  // namespace defnam

#endif  // DEFNAM_TENSOR_H_
