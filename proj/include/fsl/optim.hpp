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

#ifndef FSL_OPTIM_HPP
#define FSL_OPTIM_HPP

#include <memory>
#include <string>
#include <vector>

#include "fsl/module.hpp"

namespace fsl {

class Optimizer
{
public:
  explicit Optimizer(std::vector<Parameter> params);
  virtual ~Optimizer() = default;

  // Applies one update. Every parameter must carry a gradient.
  virtual void step() = 0;
  void zero_grad();

  // Named state tensors for checkpointing (copies).
  virtual std::vector<Parameter> state() const = 0;
  // Restores from tensors produced by state(); missing names are an error.
  virtual void load_state(const std::vector<Parameter>& saved) = 0;

  virtual std::string kind() const = 0;
  const std::vector<Parameter>& params() const { return params_; }

protected:
  void require_grads() const;

  std::vector<Parameter> params_;
};

class Sgd final : public Optimizer
{
public:
  Sgd(std::vector<Parameter> params, double lr);

  void step() override;
  std::vector<Parameter> state() const override { return {}; }
  void load_state(const std::vector<Parameter>&) override {}
  std::string kind() const override { return "sgd"; }

private:
  double lr_;
};

class Adam final : public Optimizer
{
public:
  Adam(std::vector<Parameter> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  void step() override;
  std::vector<Parameter> state() const override;
  void load_state(const std::vector<Parameter>& saved) override;
  std::string kind() const override { return "adam"; }

  std::size_t steps_taken() const { return t_; }

private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<Buffer> m_, v_;
  std::size_t t_ = 0;
};

std::unique_ptr<Optimizer> make_optimizer(const std::string& kind, std::vector<Parameter> params,
                                          double lr);

} // namespace fsl

#endif // FSL_OPTIM_HPP
