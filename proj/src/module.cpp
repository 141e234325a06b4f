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

#include "fsl/module.hpp"

#include <cmath>
#include <unordered_set>

#include "fsl/error.hpp"

namespace fsl {

namespace {

std::string join(const std::string& prefix, const std::string& name)
{
  return prefix.empty() ? name : prefix + "." + name;
}

void require_unique(const std::vector<Parameter>& items)
{
  std::unordered_set<std::string> seen;
  for (const Parameter& p : items)
    if (!seen.insert(p.name).second)
      throw ContractError("module: duplicate name " + p.name);
}

} // namespace

void Module::collect(const std::string& prefix, bool want_buffers,
                     std::vector<Parameter>& out) const
{
  for (const auto& [name, slot] : want_buffers ? buffers_ : parameters_)
    out.push_back({join(prefix, name), *slot});
  for (const auto& [name, child] : children_)
    child->collect(join(prefix, name), want_buffers, out);
}

std::vector<Parameter> Module::parameters(const std::string& prefix) const
{
  std::vector<Parameter> out;
  collect(prefix, false, out);
  require_unique(out);
  return out;
}

std::vector<Parameter> Module::buffers(const std::string& prefix) const
{
  std::vector<Parameter> out;
  collect(prefix, true, out);
  require_unique(out);
  return out;
}

std::size_t Module::parameter_count() const
{
  std::size_t n = 0;
  for (const Parameter& p : parameters())
    n += p.tensor.numel();
  return n;
}

void Module::train(bool on)
{
  training_ = on;
  for (auto& [name, child] : children_)
    child->train(on);
}

void Module::zero_grad()
{
  for (Parameter& p : parameters())
    p.tensor.zero_grad();
}

void Module::register_parameter(const std::string& name, Tensor& slot)
{
  if (!slot.defined())
    throw ContractError("module: parameter " + name + " registered before initialization");
  slot.set_requires_grad(true);
  parameters_.emplace_back(name, &slot);
}

void Module::register_buffer(const std::string& name, Tensor& slot)
{
  if (!slot.defined())
    throw ContractError("module: buffer " + name + " registered before initialization");
  buffers_.emplace_back(name, &slot);
}

void Module::register_module(const std::string& name, Module& child)
{
  children_.emplace_back(name, &child);
}

namespace init {

Tensor he_normal(const Shape& shape, std::size_t fan_in, Rng& rng)
{
  return Tensor::randn(shape, rng, std::sqrt(2.0 / static_cast<double>(fan_in)));
}

Tensor fan_in_uniform(const Shape& shape, std::size_t fan_in, Rng& rng)
{
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  return Tensor::uniform(shape, rng, -bound, bound);
}

} // namespace init

} // namespace fsl
