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

#include "defnam/attention.h"

#include <cmath>

#include "defnam/errors.h"
#include "defnam/retrieval.h"

namespace defnam {

void AttentionDims::Validate() const {
  if (heads == 0 || head_dim == 0 || d_q == 0 || d_k == 0 || d_v == 0) {
    throw ConfigError("AttentionDims: all dimensions must be positive");
  }
}

void InitAttention(const std::string& prefix, const AttentionDims& dims,
                   ParamStore& store, Rng& rng) {
  dims.Validate();
  const std::size_t w = dims.heads * dims.head_dim;
  store.Add(prefix + ".wq", WeightInit({dims.d_q, w}, dims.d_q, rng));
  store.Add(prefix + ".wk", WeightInit({dims.d_k, w}, dims.d_k, rng));
  store.Add(prefix + ".nb", UniformInit({1, w}, 1, rng));
  store.Add(prefix + ".wv", WeightInit({dims.d_k, dims.d_v}, dims.d_k, rng));
  store.Add(prefix + ".wo", WeightInit({dims.d_v, dims.d_q}, dims.d_v, rng));
}

AttentionLogits NoBiasLogits(const Var& q, const Var& keys,
                             const ParamScope& params,
                             const std::string& prefix, std::size_t heads,
                             const Tensor* mask) {
  const Var wq = params(prefix + ".wq");
  const Var wk = params(prefix + ".wk");
  if (q.shape().size() != 2 || keys.shape().size() != 2 ||
      q.dim(1) != wq.dim(0) || keys.dim(1) != wk.dim(0)) {
    throw DimensionError("NoBiasLogits: q " + ShapeToString(q.shape()) +
                         " and keys " + ShapeToString(keys.shape()) +
                         " do not fit projections " +
                         ShapeToString(wq.shape()) + " / " +
                         ShapeToString(wk.shape()));
  }
  const std::size_t width = wq.dim(1);
  if (heads == 0 || width % heads != 0) {
    throw DimensionError("NoBiasLogits: width " + std::to_string(width) +
                         " not divisible by " + std::to_string(heads) +
                         " heads");
  }
  const double head_dim = static_cast<double>(width / heads);
  // Mean over heads of per-head dot products scaled by 1/sqrt(d_h) equals
  // the full-width dot product scaled by 1/(H sqrt(d_h)).
  const double scale = 1.0 / (static_cast<double>(heads) * std::sqrt(head_dim));
  const Var k_all = ConcatRows(params(prefix + ".nb"), MatMul(keys, wk));
  Var z = Scale(MatMul(MatMul(q, wq), Transpose(k_all)), scale);
  if (mask != nullptr) z = Add(z, Constant(*mask));
  AttentionLogits out;
  out.per_frame = z;
  out.pooled = MaxOverAxis(z, 0);
  return out;
}

Tensor PadMask(std::span<const int> lengths, std::size_t max_len) {
  std::vector<double> m(1 + lengths.size() * max_len, 0.0);
  for (std::size_t n = 0; n < lengths.size(); ++n) {
    for (std::size_t j = static_cast<std::size_t>(lengths[n]); j < max_len; ++j) {
      m[1 + n * max_len + j] = kMaskedLogit;
    }
  }
  return Tensor::Vector(std::move(m));
}

AttentionOutput CrossAttention(const Var& q, const Var& keys,
                               const ParamScope& params,
                               const std::string& prefix, std::size_t heads,
                               const Tensor* mask) {
  AttentionOutput out;
  out.logits = NoBiasLogits(q, keys, params, prefix, heads, mask);
  const Var values = MatMul(keys, params(prefix + ".wv"));
  const Var probs = SoftmaxLastAxis(out.logits.per_frame);
  const Var padded =
      ConcatRows(Constant(Tensor::Zeros({1, values.dim(1)})), values);
  out.context = MatMul(MatMul(probs, padded), params(prefix + ".wo"));
  return out;
}

AttentionOutput WpAttention(const Var& q, const Var& ew,
                            std::span<const int> lengths,
                            const ParamScope& params,
                            const std::string& prefix, std::size_t heads,
                            const std::vector<bool>* active,
                            const Tensor* frame_mask) {
  if (ew.shape().size() != 3 || ew.dim(0) != lengths.size()) {
    throw DimensionError("WpAttention: encodings " + ShapeToString(ew.shape()) +
                         " for " + std::to_string(lengths.size()) +
                         " phrases");
  }
  const std::size_t N = ew.dim(0), L = ew.dim(1), d = ew.dim(2);
  const Var keys = Reshape(ew, {N * L, d});
  Tensor mask = PadMask(lengths, L);
  if (frame_mask != nullptr) {
    if (frame_mask->rank() != 2 || frame_mask->dim(1) != 1 + N * L ||
        frame_mask->dim(0) != q.dim(0)) {
      throw DimensionError("WpAttention: frame mask " +
                           ShapeToString(frame_mask->shape()));
    }
    std::vector<double> m(frame_mask->values().begin(),
                          frame_mask->values().end());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += mask[i % (1 + N * L)];
    mask = Tensor(frame_mask->shape(), std::move(m));
  }

  AttentionOutput out;
  out.logits = NoBiasLogits(q, keys, params, prefix, heads, &mask);
  const Var wv = params(prefix + ".wv");
  Var values = MatMul(keys, wv);
  if (active != nullptr) {
    values = Reshape(GateValuesM2(Reshape(values, {N, L, wv.dim(1)}), *active),
                     {N * L, wv.dim(1)});
  }
  const Var probs = SoftmaxLastAxis(out.logits.per_frame);
  const Var padded =
      ConcatRows(Constant(Tensor::Zeros({1, wv.dim(1)})), values);
  out.context = MatMul(MatMul(probs, padded), params(prefix + ".wo"));
  return out;
}

Var ApplyBias(const Var& x, const Var& c, double lambda) {
  if (x.shape() != c.shape()) {
    throw DimensionError("ApplyBias: features " + ShapeToString(x.shape()) +
                         " vs context " + ShapeToString(c.shape()));
  }
  return Add(x, Scale(c, lambda));
}

}  // namespace defnam
