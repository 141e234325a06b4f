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

#include "fsl/optim.hpp"

#include <cmath>
#include <map>

#include "fsl/error.hpp"

namespace fsl {

Optimizer::Optimizer(std::vector<Parameter> params) : params_(std::move(params)) {}

void Optimizer::zero_grad()
{
  for (Parameter& p : params_)
    p.tensor.zero_grad();
}

void Optimizer::require_grads() const
{
  for (const Parameter& p : params_)
    if (!p.tensor.has_grad())
      throw ContractError("optimizer: parameter " + p.name + " has no gradient");
}

Sgd::Sgd(std::vector<Parameter> params, double lr) : Optimizer(std::move(params)), lr_(lr)
{
  if (!(lr > 0.0))
    throw ConfigError("sgd: learning rate must be positive");
}

void Sgd::step()
{
  require_grads();
  for (Parameter& p : params_)
  {
    auto w = p.tensor.data();
    auto g = p.tensor.grad();
    for (std::size_t i = 0; i < w.size(); ++i)
      w[i] -= lr_ * g[i];
  }
}

Adam::Adam(std::vector<Parameter> params, double lr, double beta1, double beta2, double eps)
    : Optimizer(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps)
{
  if (!(lr > 0.0))
    throw ConfigError("adam: learning rate must be positive");
  for (const Parameter& p : params_)
  {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::step()
{
  require_grads();
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k)
  {
    auto w = params_[k].tensor.data();
    auto g = params_[k].tensor.grad();
    Buffer& m = m_[k];
    Buffer& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i)
    {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

std::vector<Parameter> Adam::state() const
{
  std::vector<Parameter> out;
  out.push_back({"adam.t", Tensor::scalar(static_cast<double>(t_))});
  for (std::size_t k = 0; k < params_.size(); ++k)
  {
    const Shape& shape = params_[k].tensor.shape();
    out.push_back({"adam.m." + params_[k].name,
                   Tensor::from(shape, std::vector<double>(m_[k].begin(), m_[k].end()))});
    out.push_back({"adam.v." + params_[k].name,
                   Tensor::from(shape, std::vector<double>(v_[k].begin(), v_[k].end()))});
  }
  return out;
}

void Adam::load_state(const std::vector<Parameter>& saved)
{
  std::map<std::string, const Tensor*> by_name;
  for (const Parameter& p : saved)
    by_name[p.name] = &p.tensor;
  auto fetch = [&](const std::string& name, std::size_t size) -> const Tensor& {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw ContractError("adam: missing state " + name);
    if (it->second->numel() != size)
      throw ContractError("adam: state " + name + " has the wrong size");
    return *it->second;
  };
  t_ = static_cast<std::size_t>(fetch("adam.t", 1).item());
  for (std::size_t k = 0; k < params_.size(); ++k)
  {
    const std::size_t n = params_[k].tensor.numel();
    auto m = fetch("adam.m." + params_[k].name, n).data();
    auto v = fetch("adam.v." + params_[k].name, n).data();
    m_[k].assign(m.begin(), m.end());
    v_[k].assign(v.begin(), v.end());
  }
}

std::unique_ptr<Optimizer> make_optimizer(const std::string& kind, std::vector<Parameter> params,
                                          double lr)
{
  if (kind == "adam")
    return std::make_unique<Adam>(std::move(params), lr);
  if (kind == "sgd")
    return std::make_unique<Sgd>(std::move(params), lr);
  throw ConfigError("unknown optimizer '" + kind + "' (expected adam or sgd)");
}

} // namespace fsl
