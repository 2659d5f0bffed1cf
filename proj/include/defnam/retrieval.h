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

// First-pass phrase selection and the NO_BIAS filters.

#ifndef DEFNAM_RETRIEVAL_H_
#define DEFNAM_RETRIEVAL_H_

#include <cstddef>
#include <span>
#include <vector>

#include "defnam/tensor.h"

namespace defnam {

struct RetrievalResult {
  std::vector<std::size_t> indices;  // ascending phrase indices
  std::vector<double> scores;        // aligned with indices
  std::size_t k_requested = 0;
};

// Top-k phrases of pooled logits [1 + N] (column 0 is skipped). Ties go to
// the lower index. ConfigError when k < 1.
RetrievalResult GlobalTopK(std::span<const double> pooled, std::size_t k);

// Top-k phrases of every row of per_frame [T, 1 + N], each list ascending.
std::vector<std::vector<std::size_t>> PerFrameTopK(const Tensor& per_frame,
                                                   std::size_t k);

// mask[i] = any frame t with per_frame[t][1 + i] > per_frame[t][0].
std::vector<bool> ActiveMask(const Tensor& per_frame);

RetrievalResult FilterM1(const RetrievalResult& r, const std::vector<bool>& m);

// values [N, L, d_v] with phrase i scaled by m[i].
Var GateValuesM2(const Var& values, const std::vector<bool>& m);

// Additive [T, 1 + N*L] mask keeping NO_BIAS and the pieces of the phrases
// selected for each frame.
Tensor FrameSelectionMask(const std::vector<std::vector<std::size_t>>& lists,
                          std::size_t num_phrases, std::size_t max_len);

}  // namespace defnam

#endif  // DEFNAM_RETRIEVAL_H_
