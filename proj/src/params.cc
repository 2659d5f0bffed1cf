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

#include "defnam/params.h"

#include <cmath>

#include "defnam/errors.h"

namespace defnam {

void ParamStore::Add(const std::string& name, Tensor value) {
  if (values_.count(name)) {
    throw ConfigError("ParamStore: duplicate parameter '" + name + "'");
  }
  names_.push_back(name);
  values_.emplace(name, std::move(value));
}

bool ParamStore::Has(const std::string& name) const {
  return values_.count(name) != 0;
}

const Tensor& ParamStore::Get(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) {
    throw ValidationError("ParamStore: unknown parameter '" + name + "'");
  }
  return it->second;
}

void ParamStore::Set(const std::string& name, Tensor value) {
  auto it = values_.find(name);
  if (it == values_.end()) {
    throw ValidationError("ParamStore: unknown parameter '" + name + "'");
  }
  if (it->second.shape() != value.shape()) {
    throw DimensionError("ParamStore: '" + name + "' has shape " +
                         ShapeToString(it->second.shape()) + ", got " +
                         ShapeToString(value.shape()));
  }
  it->second = std::move(value);
}

std::size_t ParamStore::NumScalars() const {
  std::size_t n = 0;
  for (const auto& [name, t] : values_) n += t.size();
  return n;
}

Tensor UniformInit(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(NumElements(shape));
  for (double& x : v) x = UniformReal(rng, -bound, bound);
  return Tensor(std::move(shape), std::move(v));
}

Tensor WeightInit(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
  std::vector<double> v(NumElements(shape));
  for (double& x : v) x = UniformReal(rng, -bound, bound);
  return Tensor(std::move(shape), std::move(v));
}

Var ParamScope::operator()(const std::string& name) const {
  auto it = vars_.find(name);
  if (it != vars_.end()) return it->second;
  const Tensor& value = store_->Get(name);
  Var v = tape_ ? tape_->Leaf(value) : Constant(value);
  vars_.emplace(name, v);
  return v;
}

void ParamScope::Bind(const std::string& name, Var value) {
  if (value.shape() != store_->Get(name).shape()) {
    throw DimensionError("ParamScope: binding " + ShapeToString(value.shape()) +
                         " to '" + name + "'");
  }
  vars_[name] = std::move(value);
}

Tensor ParamScope::Grad(const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end() || !tape_) return Tensor::Zeros(store_->Get(name).shape());
  return tape_->Grad(it->second);
}

}  // namespace defnam
