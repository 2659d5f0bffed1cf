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

// Multi-head logits against a learned NO_BIAS key with mean-over-heads and
// max-over-frames pooling, the cross attention that turns them into a
// biasing context, and bias injection.
//
// Parameter names under a prefix P:
//   P.wq [d_q, H*d_h]   P.wk [d_k, H*d_h]   P.nb [1, H*d_h]
//   P.wv [d_k, d_v]     P.wo [d_v, d_q]

#ifndef DEFNAM_ATTENTION_H_
#define DEFNAM_ATTENTION_H_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "defnam/params.h"
#include "defnam/random.h"
#include "defnam/tensor.h"

namespace defnam {

struct AttentionDims {
  std::size_t heads = 2;
  std::size_t head_dim = 16;
  std::size_t d_q = 32;
  std::size_t d_k = 32;
  std::size_t d_v = 32;

  void Validate() const;
};

void InitAttention(const std::string& prefix, const AttentionDims& dims,
                   ParamStore& store, Rng& rng);

struct AttentionLogits {
  Var per_frame;  // [T, 1 + S], column 0 is NO_BIAS
  Var pooled;     // [1 + S], max over frames
};

// q [T, d_q], keys [S, d_k]. The optional mask is added to the per-frame
// logits and has shape [1 + S] or [T, 1 + S].
AttentionLogits NoBiasLogits(const Var& q, const Var& keys,
                             const ParamScope& params,
                             const std::string& prefix, std::size_t heads,
                             const Tensor* mask = nullptr);

// [1 + N*L]: 0 for NO_BIAS and real pieces, kMaskedLogit for PAD.
Tensor PadMask(std::span<const int> lengths, std::size_t max_len);

struct AttentionOutput {
  Var context;  // [T, d_q]
  AttentionLogits logits;
};

// Softmax over NO_BIAS and the keys; NO_BIAS carries a zero value and the
// keys carry keys * wv.
AttentionOutput CrossAttention(const Var& q, const Var& keys,
                               const ParamScope& params,
                               const std::string& prefix, std::size_t heads,
                               const Tensor* mask = nullptr);

// Cross attention over flattened WP encodings ew [N, L, d_k] with PAD masked.
// active (size N) zeroes the values of inactive phrases; frame_mask
// ([T, 1 + N*L]) further restricts each frame.
AttentionOutput WpAttention(const Var& q, const Var& ew,
                            std::span<const int> lengths,
                            const ParamScope& params,
                            const std::string& prefix, std::size_t heads,
                            const std::vector<bool>* active = nullptr,
                            const Tensor* frame_mask = nullptr);

// x + lambda * c.
Var ApplyBias(const Var& x, const Var& c, double lambda);

}  // namespace defnam

#endif  // DEFNAM_ATTENTION_H_
