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

#include "defnam/grad_check.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "defnam/errors.h"

namespace defnam {

namespace {

double Evaluate(const ScalarFn& f, const Tensor& x) {
  const Var out = f(Constant(x));
  const double v = out.value().item();
  if (!std::isfinite(v)) throw NumericError("FiniteDiffCheck: f is not finite");
  return v;
}

}  // namespace

Tensor AnalyticGradient(const ScalarFn& f, const Tensor& x) {
  Tape tape;
  const Var leaf = tape.Leaf(x);
  const Var out = f(leaf);
  if (!out.requires_grad()) return Tensor::Zeros(x.shape());
  tape.Backward(out);
  return tape.Grad(leaf);
}

double FiniteDiffCheck(const ScalarFn& f, const Tensor& x, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw ConfigError("FiniteDiffCheck: eps must be in [1e-7, 1e-3]");
  }
  const Tensor analytic = AnalyticGradient(f, x);
  std::vector<double> probe(x.values().begin(), x.values().end());
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + eps;
    const double up = Evaluate(f, Tensor(x.shape(), probe));
    probe[i] = saved - eps;
    const double down = Evaluate(f, Tensor(x.shape(), probe));
    probe[i] = saved;
    const double fd = (up - down) / (2.0 * eps);
    worst = std::max(worst,
                     std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

}  // namespace defnam
