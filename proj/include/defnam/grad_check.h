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

#ifndef DEFNAM_GRAD_CHECK_H_
#define DEFNAM_GRAD_CHECK_H_

#include <functional>

#include "defnam/tensor.h"

namespace defnam {

using ScalarFn = std::function<Var(const Var&)>;

// Compares the tape gradient of `f` at `x` with a central difference of step
// `eps` (must lie in [1e-7, 1e-3]). Returns
//   max_i |g_analytic_i - g_fd_i| / max(1, |g_fd_i|).
// `f` must be deterministic and return a single-element Var.
double FiniteDiffCheck(const ScalarFn& f, const Tensor& x, double eps = 1e-6);

// Analytic gradient of `f` at `x`.
Tensor AnalyticGradient(const ScalarFn& f, const Tensor& x);

}  // namespace defnam

#endif  // DEFNAM_GRAD_CHECK_H_
