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

#ifndef FSL_GRADCHECK_HPP
#define FSL_GRADCHECK_HPP

#include <functional>
#include <string>
#include <vector>

#include "fsl/tensor.hpp"

namespace fsl {

struct GradCheckResult
{
  double max_rel_error = 0.0;
  // Location of the worst element.
  std::size_t input = 0;
  std::size_t element = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t elements_checked = 0;

  std::string describe() const;
};

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

struct GradCheckOptions
{
  double eps = 1e-5;
  // Denominator floor: err = |a - n| / max(|a|, |n|, abs_floor).
  double abs_floor = 1e-6;
  // Check at most this many elements per input (evenly strided); 0 = all.
  std::size_t max_elements_per_input = 0;
};

// Compares reverse-mode gradients of scalar f against central differences
// for every element of every input. `inputs` are marked requires_grad and
// their grads are overwritten. Throws ContractError if f is not scalar or not
// bit-reproducible at the base point.
GradCheckResult grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs,
                           const GradCheckOptions& options = {});

} // namespace fsl

#endif // FSL_GRADCHECK_HPP
