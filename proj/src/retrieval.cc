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

#include "defnam/retrieval.h"

#include <algorithm>
#include <numeric>

#include "defnam/errors.h"

namespace defnam {

namespace {

std::vector<std::size_t> TopKOfRow(const double* row, std::size_t n,
                                   std::size_t k) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t take = std::min(k, n);
  std::partial_sort(order.begin(), order.begin() + take, order.end(),
                    [row](std::size_t a, std::size_t b) {
                      return row[a] > row[b] || (row[a] == row[b] && a < b);
                    });
  order.resize(take);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace

RetrievalResult GlobalTopK(std::span<const double> pooled, std::size_t k) {
  if (k < 1) throw ConfigError("GlobalTopK: k must be >= 1");
  if (pooled.empty()) {
    throw ValidationError("GlobalTopK: pooled logits lack the NO_BIAS entry");
  }
  RetrievalResult r;
  r.k_requested = k;
  const double* phrases = pooled.data() + 1;
  r.indices = TopKOfRow(phrases, pooled.size() - 1, k);
  for (std::size_t i : r.indices) r.scores.push_back(phrases[i]);
  return r;
}

std::vector<std::vector<std::size_t>> PerFrameTopK(const Tensor& per_frame,
                                                   std::size_t k) {
  if (k < 1) throw ConfigError("PerFrameTopK: k must be >= 1");
  if (per_frame.rank() != 2 || per_frame.dim(1) < 1) {
    throw DimensionError("PerFrameTopK: expected [T, 1 + N], got " +
                         ShapeToString(per_frame.shape()));
  }
  const std::size_t T = per_frame.dim(0), cols = per_frame.dim(1);
  std::vector<std::vector<std::size_t>> out(T);
  for (std::size_t t = 0; t < T; ++t) {
    out[t] = TopKOfRow(per_frame.data() + t * cols + 1, cols - 1, k);
  }
  return out;
}

std::vector<bool> ActiveMask(const Tensor& per_frame) {
  if (per_frame.rank() != 2 || per_frame.dim(1) < 1) {
    throw DimensionError("ActiveMask: expected [T, 1 + N], got " +
                         ShapeToString(per_frame.shape()));
  }
  const std::size_t T = per_frame.dim(0), cols = per_frame.dim(1);
  std::vector<bool> m(cols - 1, false);
  for (std::size_t t = 0; t < T; ++t) {
    const double* row = per_frame.data() + t * cols;
    for (std::size_t i = 0; i + 1 < cols; ++i) {
      if (row[1 + i] > row[0]) m[i] = true;
    }
  }
  return m;
}

RetrievalResult FilterM1(const RetrievalResult& r, const std::vector<bool>& m) {
  RetrievalResult out;
  out.k_requested = r.k_requested;
  for (std::size_t j = 0; j < r.indices.size(); ++j) {
    const std::size_t i = r.indices[j];
    if (i >= m.size()) {
      throw IndexError("FilterM1: index " + std::to_string(i) +
                       " outside mask of " + std::to_string(m.size()));
    }
    if (m[i]) {
      out.indices.push_back(i);
      out.scores.push_back(r.scores[j]);
    }
  }
  return out;
}

Var GateValuesM2(const Var& values, const std::vector<bool>& m) {
  if (values.shape().size() != 3 || values.dim(0) != m.size()) {
    throw DimensionError("GateValuesM2: values " +
                         ShapeToString(values.shape()) + " for mask of " +
                         std::to_string(m.size()));
  }
  const std::size_t per = values.dim(1) * values.dim(2);
  std::vector<double> gate(values.value().size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    std::fill(gate.begin() + i * per, gate.begin() + (i + 1) * per,
              m[i] ? 1.0 : 0.0);
  }
  return Mul(values, Constant(Tensor(values.shape(), std::move(gate))));
}

Tensor FrameSelectionMask(const std::vector<std::vector<std::size_t>>& lists,
                          std::size_t num_phrases, std::size_t max_len) {
  const std::size_t cols = 1 + num_phrases * max_len;
  std::vector<double> m(lists.size() * cols, kMaskedLogit);
  for (std::size_t t = 0; t < lists.size(); ++t) {
    m[t * cols] = 0.0;
    for (std::size_t i : lists[t]) {
      if (i >= num_phrases) {
        throw IndexError("FrameSelectionMask: phrase " + std::to_string(i));
      }
      std::fill(m.begin() + t * cols + 1 + i * max_len,
                m.begin() + t * cols + 1 + (i + 1) * max_len, 0.0);
    }
  }
  return Tensor({lists.size(), cols}, std::move(m));
}

}  // namespace defnam
