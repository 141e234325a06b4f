/*
 * Copyright 2026 The fewshot-lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FSL_MODULE_HPP
#define FSL_MODULE_HPP

#include <string>
#include <vector>

#include "fsl/random.hpp"
#include "fsl/tensor.hpp"

namespace fsl {

// A learnable tensor with its stable hierarchical name,
// e.g. "backbone.block1.conv1.weight".
struct Parameter
{
  std::string name;
  Tensor tensor;
};

// Owner of parameters, non-learnable buffers and child modules. Members are
// registered by address, so modules are neither copyable nor movable; hold
// them by value inside their parent or by unique_ptr.
class Module
{
public:
  Module() = default;
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  // Depth-first, registration order; throws ContractError on duplicate names.
  std::vector<Parameter> parameters(const std::string& prefix = "") const;
  std::vector<Parameter> buffers(const std::string& prefix = "") const;
  std::size_t parameter_count() const;

  void train(bool on = true);
  void eval() { train(false); }
  bool training() const { return training_; }

  void zero_grad();

protected:
  void register_parameter(const std::string& name, Tensor& slot);
  void register_buffer(const std::string& name, Tensor& slot);
  void register_module(const std::string& name, Module& child);

private:
  void collect(const std::string& prefix, bool want_buffers, std::vector<Parameter>& out) const;

  std::vector<std::pair<std::string, Tensor*>> parameters_;
  std::vector<std::pair<std::string, Tensor*>> buffers_;
  std::vector<std::pair<std::string, Module*>> children_;
  bool training_ = true;
};

namespace init {

// Zero-mean normal, std = sqrt(2 / fan_in); for layers feeding ReLU-family
// activations.
Tensor he_normal(const Shape& shape, std::size_t fan_in, Rng& rng);

// Uniform in +-sqrt(1 / fan_in); for plain linear maps.
Tensor fan_in_uniform(const Shape& shape, std::size_t fan_in, Rng& rng);

} // namespace init

} // namespace fsl

#endif // FSL_MODULE_HPP
