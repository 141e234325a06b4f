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

#include "fsl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "fsl/error.hpp"

namespace fsl {

std::string GradCheckResult::describe() const
{
  std::ostringstream out;
  out.precision(3);
  out << std::scientific << "max rel err " << max_rel_error << " at input " << input
      << " element " << element << " (analytic " << analytic << ", numeric " << numeric << ", "
      << elements_checked << " elements)";
  return out.str();
}

namespace {

double evaluate(const ScalarFn& f, const std::vector<Tensor>& inputs)
{
  NoGradGuard guard;
  Tensor y = f(inputs);
  if (y.numel() != 1)
    throw ContractError("grad_check: function must return a scalar, got " +
                        to_string(y.shape()));
  return y.item();
}

bool same_bits(double a, double b)
{
  return std::memcmp(&a, &b, sizeof(double)) == 0;
}

} // namespace

GradCheckResult grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs,
                           const GradCheckOptions& options)
{
  std::vector<Tensor> xs = inputs;
  for (Tensor& x : xs)
  {
    x.set_requires_grad(true);
    x.clear_grad();
  }

  const Tensor loss = f(xs);
  if (loss.numel() != 1)
    throw ContractError("grad_check: function must return a scalar, got " +
                        to_string(loss.shape()));
  loss.backward();

  const double base = loss.item();
  if (!same_bits(base, evaluate(f, xs)) || !same_bits(base, evaluate(f, xs)))
    throw ContractError("grad_check: function is not deterministic; finite differences unusable");

  GradCheckResult result;
  for (std::size_t i = 0; i < xs.size(); ++i)
  {
    Tensor& x = xs[i];
    const std::size_t n = x.numel();
    std::size_t step = 1;
    if (options.max_elements_per_input && n > options.max_elements_per_input)
      step = (n + options.max_elements_per_input - 1) / options.max_elements_per_input;
    for (std::size_t e = 0; e < n; e += step)
    {
      const double saved = x.data()[e];
      x.data()[e] = saved + options.eps;
      const double up = evaluate(f, xs);
      x.data()[e] = saved - options.eps;
      const double down = evaluate(f, xs);
      x.data()[e] = saved;

      const double numeric = (up - down) / (2.0 * options.eps);
      const double analytic = x.has_grad() ? x.grad()[e] : 0.0;
      const double denom =
          std::max({std::abs(analytic), std::abs(numeric), options.abs_floor});
      const double err = std::abs(analytic - numeric) / denom;
      ++result.elements_checked;
      if (err > result.max_rel_error || result.elements_checked == 1)
      {
        result.max_rel_error = err;
        result.input = i;
        result.element = e;
        result.analytic = analytic;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

} // namespace fsl
