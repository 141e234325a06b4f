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

#ifndef FSL_OPS_INTERNAL_HPP
#define FSL_OPS_INTERNAL_HPP

#include <string>

#include "fsl/error.hpp"
#include "fsl/kernels.hpp"
#include "fsl/tensor.hpp"

namespace fsl::detail {

// Gradient buffer of recorded input i, or nullptr when it needs none.
inline double* input_grad(Node& self, std::size_t i)
{
  Node& in = *self.inputs[i];
  return in.requires_grad ? in.ensure_grad().data() : nullptr;
}

inline const double* input_data(const Node& self, std::size_t i)
{
  return self.inputs[i]->data.data();
}

inline void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what)
{
  if (t.rank() != rank)
    throw DimensionError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                         ", got " + to_string(t.shape()));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op)
{
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
}

inline const kernels::KernelTable& k()
{
  return kernels::active();
}

} // namespace fsl::detail

#endif // FSL_OPS_INTERNAL_HPP
