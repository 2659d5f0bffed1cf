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

#ifndef DEFNAM_PARAMS_H_
#define DEFNAM_PARAMS_H_

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "defnam/random.h"
#include "defnam/tensor.h"

namespace defnam {

// Named parameter tensors in insertion order.
class ParamStore {
 public:
  // Throws ConfigError on a duplicate name.
  void Add(const std::string& name, Tensor value);
  bool Has(const std::string& name) const;
  // Throws ValidationError for unknown names.
  const Tensor& Get(const std::string& name) const;
  // Replaces a value; the shape must not change.
  void Set(const std::string& name, Tensor value);

  const std::vector<std::string>& Names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  std::size_t NumScalars() const;

 private:
  std::vector<std::string> names_;
  std::map<std::string, Tensor> values_;
};

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor UniformInit(Shape shape, std::size_t fan_in, Rng& rng);
// U(-sqrt(3/fan_in), sqrt(3/fan_in)), unit output variance for unit inputs.
Tensor WeightInit(Shape shape, std::size_t fan_in, Rng& rng);

// Exposes a ParamStore to a forward pass, either as constants or as leaves
// of a tape. Leaves are created on first use.
class ParamScope {
 public:
  explicit ParamScope(const ParamStore& store) : store_(&store) {}
  ParamScope(const ParamStore& store, Tape& tape)
      : store_(&store), tape_(&tape) {}

  Var operator()(const std::string& name) const;
  // Uses `value` for `name` in place of the stored tensor.
  void Bind(const std::string& name, Var value);
  bool Has(const std::string& name) const { return store_->Has(name); }
  bool differentiable() const { return tape_ != nullptr; }

  // Gradient after Backward; zeros for parameters the pass never touched.
  Tensor Grad(const std::string& name) const;

 private:
  const ParamStore* store_;
  Tape* tape_ = nullptr;
  mutable std::map<std::string, Var> vars_;
};

}  // namespace defnam

#endif  // DEFNAM_PARAMS_H_
