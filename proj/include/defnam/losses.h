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

// Phrase-level and wordpiece-level cross entropy, the surrogate recognition
// loss and their weighted total.
//
// Parameter names: asr.w [d_q, V], asr.b [V].

#ifndef DEFNAM_LOSSES_H_
#define DEFNAM_LOSSES_H_

#include <cstddef>
#include <span>

#include "defnam/params.h"
#include "defnam/random.h"
#include "defnam/tensor.h"
#include "defnam/tokenizer.h"

namespace defnam {

// Softmax cross entropy of pooled logits [1 + N] against labels.
// ValidationError on a length mismatch.
Var PhraseCeLoss(const Var& pooled, const BiasLabels& labels);

// zw [N*L] -> [N]: mean over the first lengths[n] logits of each phrase.
Var PerPhraseAvg(const Var& zw, std::span<const int> lengths,
                 std::size_t max_len);

// zw [1 + N*L]: [zw[0]; PerPhraseAvg(zw[1:])] against labels.
Var WpCeLoss(const Var& zw, std::span<const int> lengths, std::size_t max_len,
             const BiasLabels& labels);

void InitAsrHead(std::size_t d_q, std::size_t vocab_size, ParamStore& store,
                 Rng& rng);

// Mean per-frame cross entropy of a linear vocabulary head on x [T, d_q].
Var SurrogateAsrLoss(const Var& x, std::span<const int> targets,
                     const ParamScope& params);

struct LossBundle {
  Var total;
  double l_asr = 0.0;
  double l_p = 0.0;
  double l_w = 0.0;
  double total_value = 0.0;
  double lambda_p = 0.0;
  double lambda_w = 0.0;
};

// (l_asr + lambda_p * l_p) + lambda_w * l_w. ConfigError on negative weights.
LossBundle TotalLoss(const Var& l_asr, const Var& l_p, const Var& l_w,
                     double lambda_p, double lambda_w);

}  // namespace defnam

#endif  // DEFNAM_LOSSES_H_
