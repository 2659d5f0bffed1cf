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

#include "defnam/losses.h"

#include "defnam/errors.h"

namespace defnam {

Var PhraseCeLoss(const Var& pooled, const BiasLabels& labels) {
  if (pooled.shape().size() != 1 ||
      pooled.dim(0) != labels.distribution.size()) {
    throw ValidationError("PhraseCeLoss: logits " +
                          ShapeToString(pooled.shape()) + " vs " +
                          std::to_string(labels.distribution.size()) +
                          " labels");
  }
  return SoftmaxCrossEntropy(pooled, Tensor::Vector(labels.distribution));
}

Var PerPhraseAvg(const Var& zw, std::span<const int> lengths,
                 std::size_t max_len) {
  const std::size_t N = lengths.size();
  if (zw.shape().size() != 1 || zw.dim(0) != N * max_len) {
    throw ValidationError("PerPhraseAvg: " + ShapeToString(zw.shape()) +
                          " logits for " + std::to_string(N) + " x " +
                          std::to_string(max_len) + " pieces");
  }
  for (int len : lengths) {
    if (len < 1 || static_cast<std::size_t>(len) > max_len) {
      throw ValidationError("PerPhraseAvg: phrase length " +
                            std::to_string(len));
    }
  }
  if (N == 0) return Constant(Tensor::Zeros({0}));
  return PrefixMean(Reshape(zw, {N, max_len}), lengths);
}

Var WpCeLoss(const Var& zw, std::span<const int> lengths, std::size_t max_len,
             const BiasLabels& labels) {
  const std::size_t N = lengths.size();
  if (zw.shape().size() != 1 || zw.dim(0) != 1 + N * max_len ||
      labels.distribution.size() != 1 + N) {
    throw ValidationError("WpCeLoss: logits " + ShapeToString(zw.shape()) +
                          ", " + std::to_string(labels.distribution.size()) +
                          " labels, " + std::to_string(N) + " phrases of " +
                          std::to_string(max_len));
  }
  const Var avg = PerPhraseAvg(SliceRows(zw, 1, 1 + N * max_len), lengths,
                               max_len);
  return SoftmaxCrossEntropy(ConcatRows(SliceRows(zw, 0, 1), avg),
                             Tensor::Vector(labels.distribution));
}

void InitAsrHead(std::size_t d_q, std::size_t vocab_size, ParamStore& store,
                 Rng& rng) {
  store.Add("asr.w", WeightInit({d_q, vocab_size}, d_q, rng));
  store.Add("asr.b", UniformInit({vocab_size}, d_q, rng));
}

Var SurrogateAsrLoss(const Var& x, std::span<const int> targets,
                     const ParamScope& params) {
  if (x.shape().size() != 2 || x.dim(0) != targets.size()) {
    throw DimensionError("SurrogateAsrLoss: features " +
                         ShapeToString(x.shape()) + " for " +
                         std::to_string(targets.size()) + " targets");
  }
  const Var logits = Add(MatMul(x, params("asr.w")), params("asr.b"));
  return SparseSoftmaxCrossEntropy(logits, targets);
}

LossBundle TotalLoss(const Var& l_asr, const Var& l_p, const Var& l_w,
                     double lambda_p, double lambda_w) {
  if (!(lambda_p >= 0.0) || !(lambda_w >= 0.0)) {
    throw ConfigError("TotalLoss: loss weights must be non-negative");
  }
  LossBundle b;
  b.lambda_p = lambda_p;
  b.lambda_w = lambda_w;
  b.l_asr = l_asr.value().item();
  b.l_p = l_p.value().item();
  b.l_w = l_w.value().item();
  b.total = Add(Add(l_asr, Scale(l_p, lambda_p)), Scale(l_w, lambda_w));
  b.total_value = b.total.value().item();
  return b;
}

}  // namespace defnam
