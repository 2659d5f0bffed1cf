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

#include "defnam/tensor.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "defnam/errors.h"

namespace defnam {

std::size_t NumElements(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string ShapeToString(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : Tensor(Shape{0}, {}) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)) {
  if (NumElements(shape_) != values.size()) {
    throw DimensionError("tensor shape " + ShapeToString(shape_) + " needs " +
                         std::to_string(NumElements(shape_)) +
                         " values, got " + std::to_string(values.size()));
  }
  values_ = std::make_shared<const std::vector<double>>(std::move(values));
}

Tensor Tensor::Zeros(Shape shape) { return Filled(std::move(shape), 0.0); }

Tensor Tensor::Filled(Shape shape, double value) {
  std::size_t n = NumElements(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::Scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::Vector(std::vector<double> values) {
  Shape shape{values.size()};
  return Tensor(std::move(shape), std::move(values));
}

Tensor Tensor::Matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for shape " + ShapeToString(shape_));
  }
  return shape_[axis];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw DimensionError("at(row, col) needs a rank-2 tensor");
  return (*values_)[row * shape_[1] + col];
}

double Tensor::item() const {
  if (size() != 1) {
    throw DimensionError("item() on tensor of shape " + ShapeToString(shape_));
  }
  return (*values_)[0];
}

bool Tensor::AllFinite() const {
  return std::all_of(values_->begin(), values_->end(),
                     [](double v) { return std::isfinite(v); });
}

Tensor Tensor::Reshaped(Shape shape) const {
  if (NumElements(shape) != size()) {
    throw DimensionError("cannot reshape " + ShapeToString(shape_) + " to " +
                         ShapeToString(shape));
  }
  Tensor out;
  out.shape_ = std::move(shape);
  out.values_ = values_;
  return out;
}

// ---------------------------------------------------------------------------
// Tape

Var Constant(Tensor value) {
  auto node = std::make_shared<internal::Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

using NodePtr = std::shared_ptr<internal::Node>;
using BackwardFn = std::function<void(const std::vector<double>&)>;

struct OpBuilder {
  static const NodePtr& node(const Var& v) { return v.node_; }

  static Var Make(const char* op, Tensor value,
                  std::initializer_list<const Var*> inputs, BackwardFn fn) {
    if (!value.AllFinite()) {
      throw NumericError(std::string("non-finite value produced by ") + op);
    }
    Tape* tape = nullptr;
    for (const Var* in : inputs) {
      Tape* t = in->node_->tape;
      if (t == nullptr) continue;
      if (tape != nullptr && tape != t) {
        throw std::logic_error(std::string(op) +
                               ": inputs recorded on different tapes");
      }
      tape = t;
    }
    auto out = std::make_shared<internal::Node>();
    out->value = std::move(value);
    out->op = op;
    if (tape != nullptr) {
      out->tape = tape;
      out->backward = std::move(fn);
      tape->ops_.push_back(out);
    }
    return Var(std::move(out));
  }
};

namespace {

bool NeedsGrad(const NodePtr& n) { return n->tape != nullptr; }

std::vector<double>& GradOf(internal::Node& n) {
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

Var MakeOp(const char* op, Tensor value,
           std::initializer_list<const Var*> inputs, BackwardFn fn) {
  return OpBuilder::Make(op, std::move(value), inputs, std::move(fn));
}

const NodePtr& N(const Var& v) { return OpBuilder::node(v); }

}  // namespace

Var Tape::Leaf(Tensor value) {
  auto node = std::make_shared<internal::Node>();
  node->value = std::move(value);
  node->tape = this;
  leaves_.push_back(node);
  return Var(node);
}

void Tape::Backward(const Var& loss) {
  if (!loss.defined() || loss.node_->tape != this) {
    throw std::logic_error("Backward: loss is not recorded on this tape");
  }
  if (loss.value().size() != 1) {
    throw DimensionError("Backward: loss must be a scalar, got shape " +
                         ShapeToString(loss.shape()));
  }
  GradOf(*loss.node_)[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    internal::Node& node = **it;
    if (node.grad.empty() || !node.backward) continue;
    node.backward(node.grad);
  }
}

Tensor Tape::Grad(const Var& v) const {
  if (!v.defined()) throw std::logic_error("Grad of undefined Var");
  if (v.node_->grad.empty()) return Tensor::Zeros(v.shape());
  return Tensor(v.shape(), v.node_->grad);
}

// ---------------------------------------------------------------------------
// Linear algebra

namespace {

// c[m,n] += a[m,k] * b[k,n]
void Gemm(const double* a, const double* b, double* c, std::size_t m,
          std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m,k] += a[m,n] * b[k,n]^T
void GemmNT(const double* a, const double* b, double* c, std::size_t m,
            std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += arow[j] * brow[j];
      crow[p] += s;
    }
  }
}

// c[k,n] += a[m,k]^T * b[m,n]
void GemmTN(const double* a, const double* b, double* c, std::size_t m,
            std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

Var MatMul(const Var& a, const Var& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.empty() || bs.size() != 2 || as.back() != bs[0]) {
    throw DimensionError("MatMul: incompatible shapes " + ShapeToString(as) +
                         " and " + ShapeToString(bs));
  }
  const std::size_t k = bs[0], n = bs[1];
  const std::size_t m = k == 0 ? NumElements(Shape(as.begin(), as.end() - 1))
                               : a.value().size() / k;
  std::vector<double> out(m * n, 0.0);
  Gemm(a.value().data(), b.value().data(), out.data(), m, k, n);
  Shape os(as.begin(), as.end() - 1);
  os.push_back(n);
  auto an = N(a), bn = N(b);
  return MakeOp("MatMul", Tensor(std::move(os), std::move(out)), {&a, &b},
                [an, bn, m, k, n](const std::vector<double>& g) {
                  if (NeedsGrad(an)) {
                    GemmNT(g.data(), bn->value.data(), GradOf(*an).data(), m,
                           n, k);
                  }
                  if (NeedsGrad(bn)) {
                    GemmTN(an->value.data(), g.data(), GradOf(*bn).data(), m,
                           k, n);
                  }
                });
}

Var Transpose(const Var& a) {
  if (a.shape().size() != 2) {
    throw DimensionError("Transpose: needs rank 2, got " +
                         ShapeToString(a.shape()));
  }
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  const double* x = a.value().data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  auto an = N(a);
  return MakeOp("Transpose", Tensor::Matrix(c, r, std::move(out)), {&a},
                [an, r, c](const std::vector<double>& g) {
                  auto& ga = GradOf(*an);
                  for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j)
                      ga[i * c + j] += g[j * r + i];
                });
}

// ---------------------------------------------------------------------------
// Elementwise

namespace {

struct Broadcast {
  bool a_is_big;
  std::size_t outer;  // repetitions of the small operand
  std::size_t inner;  // size of the small operand
};

bool IsSuffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Broadcast ResolveBroadcast(const char* op, const Shape& a, const Shape& b) {
  if (IsSuffix(b, a)) {
    std::size_t inner = NumElements(b);
    return {true, inner == 0 ? 0 : NumElements(a) / inner, inner};
  }
  if (IsSuffix(a, b)) {
    std::size_t inner = NumElements(a);
    return {false, inner == 0 ? 0 : NumElements(b) / inner, inner};
  }
  throw DimensionError(std::string(op) + ": shapes " + ShapeToString(a) +
                       " and " + ShapeToString(b) + " do not broadcast");
}

// kind: 0 add, 1 sub, 2 mul
Var Binary(const char* op, int kind, const Var& a, const Var& b) {
  const Broadcast bc = ResolveBroadcast(op, a.shape(), b.shape());
  const Var& big = bc.a_is_big ? a : b;
  const double* x = a.value().data();
  const double* y = b.value().data();
  std::vector<double> out(big.value().size());
  for (std::size_t o = 0; o < bc.outer; ++o) {
    for (std::size_t i = 0; i < bc.inner; ++i) {
      const std::size_t bi = o * bc.inner + i;
      const double xv = bc.a_is_big ? x[bi] : x[i];
      const double yv = bc.a_is_big ? y[i] : y[bi];
      out[bi] = kind == 0 ? xv + yv : kind == 1 ? xv - yv : xv * yv;
    }
  }
  auto an = N(a), bn = N(b);
  return MakeOp(
      op, Tensor(big.shape(), std::move(out)), {&a, &b},
      [an, bn, bc, kind](const std::vector<double>& g) {
        const double* x = an->value.data();
        const double* y = bn->value.data();
        const bool ga_on = NeedsGrad(an), gb_on = NeedsGrad(bn);
        double* ga = ga_on ? GradOf(*an).data() : nullptr;
        double* gb = gb_on ? GradOf(*bn).data() : nullptr;
        for (std::size_t o = 0; o < bc.outer; ++o) {
          for (std::size_t i = 0; i < bc.inner; ++i) {
            const std::size_t bi = o * bc.inner + i;
            const std::size_t ai = bc.a_is_big ? bi : i;
            const std::size_t yi = bc.a_is_big ? i : bi;
            const double gv = g[bi];
            if (kind == 2) {
              if (ga) ga[ai] += gv * y[yi];
              if (gb) gb[yi] += gv * x[ai];
            } else {
              if (ga) ga[ai] += gv;
              if (gb) gb[yi] += kind == 1 ? -gv : gv;
            }
          }
        }
      });
}

}  // namespace

Var Add(const Var& a, const Var& b) { return Binary("Add", 0, a, b); }
Var Sub(const Var& a, const Var& b) { return Binary("Sub", 1, a, b); }
Var Mul(const Var& a, const Var& b) { return Binary("Mul", 2, a, b); }

Var Scale(const Var& a, double factor) {
  std::vector<double> out(a.value().values().begin(), a.value().values().end());
  for (double& v : out) v *= factor;
  auto an = N(a);
  return MakeOp("Scale", Tensor(a.shape(), std::move(out)), {&a},
                [an, factor](const std::vector<double>& g) {
                  auto& ga = GradOf(*an);
                  for (std::size_t i = 0; i < g.size(); ++i)
                    ga[i] += g[i] * factor;
                });
}

Var Tanh(const Var& a) {
  std::vector<double> out(a.value().size());
  const double* x = a.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x[i]);
  Tensor y(a.shape(), std::move(out));
  auto an = N(a);
  return MakeOp("Tanh", y, {&a}, [an, y](const std::vector<double>& g) {
    auto& ga = GradOf(*an);
    const double* yv = y.data();
    for (std::size_t i = 0; i < g.size(); ++i)
      ga[i] += g[i] * (1.0 - yv[i] * yv[i]);
  });
}

Var Relu(const Var& a) {
  std::vector<double> out(a.value().size());
  const double* x = a.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0 ? x[i] : 0.0;
  auto an = N(a);
  return MakeOp("Relu", Tensor(a.shape(), std::move(out)), {&a},
                [an](const std::vector<double>& g) {
                  auto& ga = GradOf(*an);
                  const double* x = an->value.data();
                  for (std::size_t i = 0; i < g.size(); ++i)
                    if (x[i] > 0) ga[i] += g[i];
                });
}

// ---------------------------------------------------------------------------
// Reductions

namespace {

struct AxisSplit {
  std::size_t outer, len, inner;
  Shape reduced;
};

AxisSplit SplitAxis(const char* op, const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + ShapeToString(shape));
  }
  AxisSplit s{1, shape[axis], 1, {}};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  for (std::size_t i = 0; i < shape.size(); ++i)
    if (i != axis) s.reduced.push_back(shape[i]);
  return s;
}

Var SumOrMean(const char* op, const Var& a, std::size_t axis, bool mean) {
  const AxisSplit s = SplitAxis(op, a.shape(), axis);
  if (mean && s.len == 0) {
    throw ValidationError(std::string(op) + ": mean over an empty axis");
  }
  const double scale = mean ? 1.0 / static_cast<double>(s.len) : 1.0;
  std::vector<double> out(s.outer * s.inner, 0.0);
  const double* x = a.value().data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t l = 0; l < s.len; ++l)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[o * s.inner + i] += x[(o * s.len + l) * s.inner + i];
  if (mean)
    for (double& v : out) v *= scale;
  auto an = N(a);
  return MakeOp(op, Tensor(s.reduced, std::move(out)), {&a},
                [an, s, scale](const std::vector<double>& g) {
                  auto& ga = GradOf(*an);
                  for (std::size_t o = 0; o < s.outer; ++o)
                    for (std::size_t l = 0; l < s.len; ++l)
                      for (std::size_t i = 0; i < s.inner; ++i)
                        ga[(o * s.len + l) * s.inner + i] +=
                            g[o * s.inner + i] * scale;
                });
}

}  // namespace

Var MaxOverAxis(const Var& a, std::size_t axis) {
  const AxisSplit s = SplitAxis("MaxOverAxis", a.shape(), axis);
  if (s.len == 0) throw ValidationError("MaxOverAxis: empty axis");
  const double* x = a.value().data();
  std::vector<double> out(s.outer * s.inner);
  std::vector<std::size_t> arg(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      std::size_t best = 0;
      double bv = x[o * s.len * s.inner + i];
      for (std::size_t l = 1; l < s.len; ++l) {
        const double v = x[(o * s.len + l) * s.inner + i];
        if (v > bv) {  // strict: ties keep the lowest index
          bv = v;
          best = l;
        }
      }
      out[o * s.inner + i] = bv;
      arg[o * s.inner + i] = best;
    }
  }
  auto an = N(a);
  return MakeOp("MaxOverAxis", Tensor(s.reduced, std::move(out)), {&a},
                [an, s, arg = std::move(arg)](const std::vector<double>& g) {
                  auto& ga = GradOf(*an);
                  for (std::size_t o = 0; o < s.outer; ++o)
                    for (std::size_t i = 0; i < s.inner; ++i) {
                      const std::size_t oi = o * s.inner + i;
                      ga[(o * s.len + arg[oi]) * s.inner + i] += g[oi];
                    }
                });
}

Var MeanOverAxis(const Var& a, std::size_t axis) {
  return SumOrMean("MeanOverAxis", a, axis, true);
}

Var SumOverAxis(const Var& a, std::size_t axis) {
  return SumOrMean("SumOverAxis", a, axis, false);
}

Var Sum(const Var& a) {
  return SumOverAxis(Reshape(a, Shape{a.value().size()}), 0);
}

Var Mean(const Var& a) {
  return MeanOverAxis(Reshape(a, Shape{a.value().size()}), 0);
}

// ---------------------------------------------------------------------------
// Softmax and losses

Var SoftmaxLastAxis(const Var& a) {
  if (a.shape().empty()) throw DimensionError("SoftmaxLastAxis: scalar input");
  const std::size_t k = a.shape().back();
  const std::size_t rows = k == 0 ? 0 : a.value().size() / k;
  const double* x = a.value().data();
  std::vector<double> out(a.value().size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * k;
    double* yr = out.data() + r * k;
    const double m = *std::max_element(xr, xr + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += (yr[j] = std::exp(xr[j] - m));
    for (std::size_t j = 0; j < k; ++j) yr[j] /= z;
  }
  Tensor y(a.shape(), std::move(out));
  auto an = N(a);
  return MakeOp("SoftmaxLastAxis", y, {&a},
                [an, y, rows, k](const std::vector<double>& g) {
                  auto& ga = GradOf(*an);
                  const double* yv = y.data();
                  for (std::size_t r = 0; r < rows; ++r) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < k; ++j)
                      dot += g[r * k + j] * yv[r * k + j];
                    for (std::size_t j = 0; j < k; ++j)
                      ga[r * k + j] += yv[r * k + j] * (g[r * k + j] - dot);
                  }
                });
}

namespace {

// log-softmax of one row with max subtraction
void LogSoftmaxRow(const double* x, std::size_t k, double* out) {
  const std::size_t arg = std::max_element(x, x + k) - x;
  const double m = x[arg];
  // log(1 + rest) via log1p keeps precision when the max term dominates.
  double rest = 0.0;
  for (std::size_t j = 0; j < k; ++j)
    if (j != arg) rest += std::exp(x[j] - m);
  const double log_norm = std::log1p(rest);
  for (std::size_t j = 0; j < k; ++j) out[j] = (x[j] - m) - log_norm;
}

}  // namespace

Var SoftmaxCrossEntropy(const Var& logits, const Tensor& target) {
  if (logits.shape().size() != 1 || target.rank() != 1 ||
      logits.value().size() != target.size()) {
    throw DimensionError("SoftmaxCrossEntropy: logits " +
                         ShapeToString(logits.shape()) + " vs target " +
                         ShapeToString(target.shape()));
  }
  const std::size_t k = target.size();
  if (k == 0) throw ValidationError("SoftmaxCrossEntropy: zero classes");
  double total = 0.0;
  for (double t : target.values()) {
    if (!(t >= 0.0)) {
      throw ValidationError("SoftmaxCrossEntropy: negative target entry");
    }
    total += t;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ValidationError("SoftmaxCrossEntropy: target sums to " +
                          std::to_string(total) + ", expected 1");
  }
  std::vector<double> logp(k);
  LogSoftmaxRow(logits.value().data(), k, logp.data());
  double loss = 0.0;
  for (std::size_t j = 0; j < k; ++j)
    if (target[j] > 0.0) loss -= target[j] * logp[j];
  auto ln = N(logits);
  return MakeOp("SoftmaxCrossEntropy", Tensor::Scalar(loss), {&logits},
                [ln, target, logp = std::move(logp)](
                    const std::vector<double>& g) {
                  auto& gl = GradOf(*ln);
                  for (std::size_t j = 0; j < logp.size(); ++j)
                    gl[j] += g[0] * (std::exp(logp[j]) - target[j]);
                });
}

Var SparseSoftmaxCrossEntropy(const Var& logits, std::span<const int> labels) {
  if (logits.shape().size() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError("SparseSoftmaxCrossEntropy: logits " +
                         ShapeToString(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t rows = logits.dim(0), k = logits.dim(1);
  if (rows == 0) throw ValidationError("SparseSoftmaxCrossEntropy: no rows");
  std::vector<double> logp(rows * k);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k) {
      throw IndexError("SparseSoftmaxCrossEntropy: label " +
                       std::to_string(labels[r]) + " out of range");
    }
    LogSoftmaxRow(logits.value().data() + r * k, k, logp.data() + r * k);
    loss -= logp[r * k + labels[r]];
  }
  loss /= static_cast<double>(rows);
  std::vector<int> lab(labels.begin(), labels.end());
  auto ln = N(logits);
  return MakeOp("SparseSoftmaxCrossEntropy", Tensor::Scalar(loss), {&logits},
                [ln, rows, k, lab = std::move(lab), logp = std::move(logp)](
                    const std::vector<double>& g) {
                  auto& gl = GradOf(*ln);
                  const double s = g[0] / static_cast<double>(rows);
                  for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < k; ++j)
                      gl[r * k + j] += s * std::exp(logp[r * k + j]);
                    gl[r * k + lab[r]] -= s;
                  }
                });
}

// ---------------------------------------------------------------------------
// Indexing and shape ops

Var GatherRows(const Var& table, std::span<const int> ids) {
  if (table.shape().size() != 2) {
    throw DimensionError("GatherRows: table must be rank 2, got " +
                         ShapeToString(table.shape()));
  }
  const std::size_t v = table.dim(0), d = table.dim(1);
  std::vector<double> out(ids.size() * d);
  const double* x = table.value().data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      throw IndexError("GatherRows: id " + std::to_string(ids[i]) +
                       " out of range [0, " + std::to_string(v) + ")");
    }
    std::copy_n(x + ids[i] * d, d, out.data() + i * d);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  auto tn = N(table);
  return MakeOp("GatherRows", Tensor::Matrix(ids.size(), d, std::move(out)),
                {&table},
                [tn, d, idv = std::move(idv)](const std::vector<double>& g) {
                  auto& gt = GradOf(*tn);
                  for (std::size_t i = 0; i < idv.size(); ++i)
                    for (std::size_t j = 0; j < d; ++j)
                      gt[idv[i] * d + j] += g[i * d + j];
                });
}

Var ScatterRows(const Var& src, std::span<const std::size_t> dest_rows,
                std::size_t num_rows) {
  if (src.shape().empty() || src.dim(0) != dest_rows.size()) {
    throw DimensionError("ScatterRows: source " + ShapeToString(src.shape()) +
                         " vs " + std::to_string(dest_rows.size()) +
                         " destinations");
  }
  const std::size_t width = src.dim(0) == 0
                                ? NumElements(Shape(src.shape().begin() + 1,
                                                    src.shape().end()))
                                : src.value().size() / src.dim(0);
  std::vector<char> seen(num_rows, 0);
  std::vector<double> out(num_rows * width, 0.0);
  for (std::size_t i = 0; i < dest_rows.size(); ++i) {
    const std::size_t r = dest_rows[i];
    if (r >= num_rows || seen[r]) {
      throw IndexError("ScatterRows: destination " + std::to_string(r) +
                       " out of range or repeated");
    }
    seen[r] = 1;
    std::copy_n(src.value().data() + i * width, width, out.data() + r * width);
  }
  Shape os = src.shape();
  os[0] = num_rows;
  std::vector<std::size_t> dst(dest_rows.begin(), dest_rows.end());
  auto sn = N(src);
  return MakeOp("ScatterRows", Tensor(std::move(os), std::move(out)), {&src},
                [sn, width, dst = std::move(dst)](const std::vector<double>& g) {
                  auto& gs = GradOf(*sn);
                  for (std::size_t i = 0; i < dst.size(); ++i)
                    for (std::size_t j = 0; j < width; ++j)
                      gs[i * width + j] += g[dst[i] * width + j];
                });
}

Var Reshape(const Var& a, Shape shape) {
  Tensor out = a.value().Reshaped(std::move(shape));
  auto an = N(a);
  return MakeOp("Reshape", std::move(out), {&a},
                [an](const std::vector<double>& g) {
                  auto& ga = GradOf(*an);
                  for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                });
}

Var ConcatRows(const Var& a, const Var& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.empty() || as.size() != bs.size() ||
      !std::equal(as.begin() + 1, as.end(), bs.begin() + 1)) {
    throw DimensionError("ConcatRows: shapes " + ShapeToString(as) + " and " +
                         ShapeToString(bs) + " are not row-compatible");
  }
  std::vector<double> out;
  out.reserve(a.value().size() + b.value().size());
  out.insert(out.end(), a.value().values().begin(), a.value().values().end());
  out.insert(out.end(), b.value().values().begin(), b.value().values().end());
  Shape os = as;
  os[0] += bs[0];
  const std::size_t na = a.value().size();
  auto an = N(a), bn = N(b);
  return MakeOp("ConcatRows", Tensor(std::move(os), std::move(out)), {&a, &b},
                [an, bn, na](const std::vector<double>& g) {
                  if (NeedsGrad(an)) {
                    auto& ga = GradOf(*an);
                    for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
                  }
                  if (NeedsGrad(bn)) {
                    auto& gb = GradOf(*bn);
                    for (std::size_t i = 0; i < gb.size(); ++i)
                      gb[i] += g[na + i];
                  }
                });
}

Var SliceRows(const Var& a, std::size_t begin, std::size_t end) {
  const Shape& as = a.shape();
  if (as.empty() || begin > end || end > as[0]) {
    throw DimensionError("SliceRows: [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of range for " +
                         ShapeToString(as));
  }
  const std::size_t width = NumElements(Shape(as.begin() + 1, as.end()));
  const double* x = a.value().data();
  std::vector<double> out(x + begin * width, x + end * width);
  Shape os = as;
  os[0] = end - begin;
  auto an = N(a);
  return MakeOp("SliceRows", Tensor(std::move(os), std::move(out)), {&a},
                [an, offset = begin * width](const std::vector<double>& g) {
                  auto& ga = GradOf(*an);
                  for (std::size_t i = 0; i < g.size(); ++i)
                    ga[offset + i] += g[i];
                });
}

Var StopGradient(const Var& a) { return Constant(a.value()); }

// ---------------------------------------------------------------------------
// Normalization and attention

Var LayerNorm(const Var& x, const Var& gain, const Var& bias, double eps) {
  if (x.shape().empty()) throw DimensionError("LayerNorm: scalar input");
  const std::size_t d = x.shape().back();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw DimensionError("LayerNorm: input " + ShapeToString(x.shape()) +
                         " with gain " + ShapeToString(gain.shape()) +
                         " and bias " + ShapeToString(bias.shape()));
  }
  const std::size_t rows = d == 0 ? 0 : x.value().size() / d;
  const double* xv = x.value().data();
  const double* gv = gain.value().data();
  const double* bv = bias.value().data();
  std::vector<double> xhat(x.value().size()), out(x.value().size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (xr[j] - mu) * inv_std[r];
      out[r * d + j] = xhat[r * d + j] * gv[j] + bv[j];
    }
  }
  auto xn = N(x), gn = N(gain), bn = N(bias);
  return MakeOp(
      "LayerNorm", Tensor(x.shape(), std::move(out)), {&x, &gain, &bias},
      [xn, gn, bn, rows, d, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](const std::vector<double>& g) {
        const double* gv = gn->value.data();
        if (NeedsGrad(gn) || NeedsGrad(bn)) {
          double* gg = NeedsGrad(gn) ? GradOf(*gn).data() : nullptr;
          double* gb = NeedsGrad(bn) ? GradOf(*bn).data() : nullptr;
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) {
              if (gg) gg[j] += g[r * d + j] * xhat[r * d + j];
              if (gb) gb[j] += g[r * d + j];
            }
        }
        if (!NeedsGrad(xn)) return;
        auto& gx = GradOf(*xn);
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_dxh = 0.0, mean_dxh_xh = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = g[r * d + j] * gv[j];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xhat[r * d + j];
          }
          mean_dxh *= inv_d;
          mean_dxh_xh *= inv_d;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = g[r * d + j] * gv[j];
            gx[r * d + j] += inv_std[r] * (dxh - mean_dxh -
                                           xhat[r * d + j] * mean_dxh_xh);
          }
        }
      });
}

Var SegmentAttention(const Var& q, const Var& k, const Var& v,
                     std::span<const std::size_t> segment_lengths,
                     std::size_t heads) {
  if (q.shape().size() != 2 || k.shape() != q.shape() ||
      v.shape().size() != 2 || v.dim(0) != q.dim(0)) {
    throw DimensionError("SegmentAttention: q " + ShapeToString(q.shape()) +
                         ", k " + ShapeToString(k.shape()) + ", v " +
                         ShapeToString(v.shape()));
  }
  const std::size_t rows = q.dim(0), width = q.dim(1), vwidth = v.dim(1);
  if (heads == 0 || width % heads != 0 || vwidth % heads != 0) {
    throw DimensionError("SegmentAttention: widths " + std::to_string(width) +
                         "/" + std::to_string(vwidth) +
                         " not divisible by heads " + std::to_string(heads));
  }
  std::size_t total = 0;
  for (std::size_t n : segment_lengths) total += n;
  if (total != rows) {
    throw DimensionError("SegmentAttention: segment lengths sum to " +
                         std::to_string(total) + " but there are " +
                         std::to_string(rows) + " rows");
  }
  const std::size_t dh = width / heads, dv = vwidth / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool keep = q.requires_grad() || k.requires_grad() || v.requires_grad();
  const double* qv = q.value().data();
  const double* kv = k.value().data();
  const double* vv = v.value().data();
  std::vector<double> out(rows * vwidth, 0.0);
  // Attention probabilities, per segment then head, row-major n x n.
  std::vector<double> probs;
  std::vector<double> buf;
  std::size_t offset = 0;
  for (std::size_t n : segment_lengths) {
    buf.resize(n * n);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        const double* qi = qv + (offset + i) * width + h * dh;
        double* pr = buf.data() + i * n;
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
          const double* kj = kv + (offset + j) * width + h * dh;
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          pr[j] = s * scale;
          m = std::max(m, pr[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += (pr[j] = std::exp(pr[j] - m));
        double* oi = out.data() + (offset + i) * vwidth + h * dv;
        for (std::size_t j = 0; j < n; ++j) {
          pr[j] /= z;
          const double* vj = vv + (offset + j) * vwidth + h * dv;
          for (std::size_t c = 0; c < dv; ++c) oi[c] += pr[j] * vj[c];
        }
      }
      if (keep) probs.insert(probs.end(), buf.begin(), buf.end());
    }
    offset += n;
  }
  std::vector<std::size_t> segs(segment_lengths.begin(), segment_lengths.end());
  auto qn = N(q), kn = N(k), vn = N(v);
  return MakeOp(
      "SegmentAttention", Tensor::Matrix(rows, vwidth, std::move(out)),
      {&q, &k, &v},
      [qn, kn, vn, segs = std::move(segs), probs = std::move(probs), heads,
       width, vwidth, dh, dv, scale](const std::vector<double>& g) {
        const double* qv = qn->value.data();
        const double* kv = kn->value.data();
        const double* vv = vn->value.data();
        double* gq = NeedsGrad(qn) ? GradOf(*qn).data() : nullptr;
        double* gk = NeedsGrad(kn) ? GradOf(*kn).data() : nullptr;
        double* gvv = NeedsGrad(vn) ? GradOf(*vn).data() : nullptr;
        std::vector<double> dp;
        std::size_t offset = 0, pofs = 0;
        for (std::size_t n : segs) {
          dp.resize(n);
          for (std::size_t h = 0; h < heads; ++h) {
            const double* p = probs.data() + pofs;
            for (std::size_t i = 0; i < n; ++i) {
              const double* gi = g.data() + (offset + i) * vwidth + h * dv;
              const double* pi = p + i * n;
              // dP = dO V^T, dS = P * (dP - <dP, P>)
              double dot = 0.0;
              for (std::size_t j = 0; j < n; ++j) {
                const double* vj = vv + (offset + j) * vwidth + h * dv;
                double s = 0.0;
                for (std::size_t c = 0; c < dv; ++c) s += gi[c] * vj[c];
                dp[j] = s;
                dot += s * pi[j];
                if (gvv) {
                  double* gvj = gvv + (offset + j) * vwidth + h * dv;
                  for (std::size_t c = 0; c < dv; ++c) gvj[c] += pi[j] * gi[c];
                }
              }
              const double* qi = qv + (offset + i) * width + h * dh;
              for (std::size_t j = 0; j < n; ++j) {
                const double ds = pi[j] * (dp[j] - dot) * scale;
                if (ds == 0.0) continue;
                const double* kj = kv + (offset + j) * width + h * dh;
                if (gq) {
                  double* gqi = gq + (offset + i) * width + h * dh;
                  for (std::size_t c = 0; c < dh; ++c) gqi[c] += ds * kj[c];
                }
                if (gk) {
                  double* gkj = gk + (offset + j) * width + h * dh;
                  for (std::size_t c = 0; c < dh; ++c) gkj[c] += ds * qi[c];
                }
              }
            }
            pofs += n * n;
          }
          offset += n;
        }
      });
}

Var PrefixMean(const Var& x, std::span<const int> lengths) {
  const Shape& xs = x.shape();
  if (xs.size() < 2 || xs[0] != lengths.size()) {
    throw DimensionError("PrefixMean: input " + ShapeToString(xs) + " with " +
                         std::to_string(lengths.size()) + " lengths");
  }
  const std::size_t n_rows = xs[0], max_len = xs[1];
  const std::size_t inner = NumElements(Shape(xs.begin() + 2, xs.end()));
  for (int len : lengths) {
    if (len < 1 || static_cast<std::size_t>(len) > max_len) {
      throw ValidationError("PrefixMean: length " + std::to_string(len) +
                            " outside [1, " + std::to_string(max_len) + "]");
    }
  }
  const double* xv = x.value().data();
  std::vector<double> out(n_rows * inner, 0.0);
  for (std::size_t n = 0; n < n_rows; ++n) {
    double* o = out.data() + n * inner;
    for (int l = 0; l < lengths[n]; ++l) {
      const double* xr = xv + (n * max_len + l) * inner;
      for (std::size_t c = 0; c < inner; ++c) o[c] += xr[c];
    }
    const double inv = 1.0 / lengths[n];
    for (std::size_t c = 0; c < inner; ++c) o[c] *= inv;
  }
  Shape os{n_rows};
  os.insert(os.end(), xs.begin() + 2, xs.end());
  std::vector<int> lens(lengths.begin(), lengths.end());
  auto xn = N(x);
  return MakeOp("PrefixMean", Tensor(std::move(os), std::move(out)), {&x},
                [xn, max_len, inner, lens = std::move(lens)](
                    const std::vector<double>& g) {
                  auto& gx = GradOf(*xn);
                  for (std::size_t n = 0; n < lens.size(); ++n) {
                    const double inv = 1.0 / lens[n];
                    for (int l = 0; l < lens[n]; ++l)
                      for (std::size_t c = 0; c < inner; ++c)
                        gx[(n * max_len + l) * inner + c] +=
                            g[n * inner + c] * inv;
                  }
                });
}

Var EmbeddingBagMean(const Var& table, std::span<const int> ids,
                     std::size_t max_len, std::span<const int> lengths) {
  if (table.shape().size() != 2 || ids.size() != lengths.size() * max_len) {
    throw DimensionError("EmbeddingBagMean: table " +
                         ShapeToString(table.shape()) + ", " +
                         std::to_string(ids.size()) + " ids, " +
                         std::to_string(lengths.size()) + " rows of " +
                         std::to_string(max_len));
  }
  const std::size_t v = table.dim(0), d = table.dim(1);
  const double* tv = table.value().data();
  std::vector<double> out(lengths.size() * d, 0.0);
  for (std::size_t n = 0; n < lengths.size(); ++n) {
    if (lengths[n] < 1 || static_cast<std::size_t>(lengths[n]) > max_len) {
      throw ValidationError("EmbeddingBagMean: length " +
                            std::to_string(lengths[n]) + " outside [1, " +
                            std::to_string(max_len) + "]");
    }
    double* o = out.data() + n * d;
    for (int l = 0; l < lengths[n]; ++l) {
      const int id = ids[n * max_len + l];
      if (id < 0 || static_cast<std::size_t>(id) >= v) {
        throw IndexError("EmbeddingBagMean: id " + std::to_string(id) +
                         " out of range [0, " + std::to_string(v) + ")");
      }
      const double* row = tv + static_cast<std::size_t>(id) * d;
      for (std::size_t c = 0; c < d; ++c) o[c] += row[c];
    }
    const double inv = 1.0 / lengths[n];
    for (std::size_t c = 0; c < d; ++c) o[c] *= inv;
  }
  auto tn = N(table);
  std::vector<int> idv, lens;
  if (table.requires_grad()) {
    idv.assign(ids.begin(), ids.end());
    lens.assign(lengths.begin(), lengths.end());
  }
  return MakeOp("EmbeddingBagMean",
                Tensor::Matrix(lengths.size(), d, std::move(out)), {&table},
                [tn, d, max_len, idv = std::move(idv), lens = std::move(lens)](
                    const std::vector<double>& g) {
                  auto& gt = GradOf(*tn);
                  for (std::size_t n = 0; n < lens.size(); ++n) {
                    const double inv = 1.0 / lens[n];
                    for (int l = 0; l < lens[n]; ++l) {
                      double* row = gt.data() + idv[n * max_len + l] * d;
                      for (std::size_t c = 0; c < d; ++c)
                        row[c] += g[n * d + c] * inv;
                    }
                  }
                });
}

}  // namespace defnam
