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

#ifndef FSL_TESTS_HELPERS_HPP
#define FSL_TESTS_HELPERS_HPP

#include <vector>

#include "fsl/random.hpp"
#include "fsl/tensor.hpp"

namespace testing {

inline std::vector<double> values(const fsl::Tensor& t)
{
  return {t.data().begin(), t.data().end()};
}

inline std::vector<double> grads(const fsl::Tensor& t)
{
  return {t.grad().begin(), t.grad().end()};
}

inline fsl::Tensor random(const fsl::Shape& shape, fsl::Rng& rng, double scale = 1.0)
{
  return fsl::Tensor::uniform(shape, rng, -scale, scale);
}

} // namespace testing

#endif // FSL_TESTS_HELPERS_HPP
