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

#include <algorithm>
#include <cmath>

#include "fsl/ops.hpp"
#include "internal.hpp"

namespace fsl {

using namespace detail;

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels)
{
  require_rank(logits, 2, "cross_entropy", "logits");
  const std::size_t Q = logits.dim(0), N = logits.dim(1);
  if (labels.size() != Q)
    throw ContractError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(Q) + " rows");
  for (int label : labels)
    if (label < 0 || static_cast<std::size_t>(label) >= N)
      throw ContractError("cross_entropy: label " + std::to_string(label) + " outside [0," +
                          std::to_string(N) + ")");

  Buffer probs(Q * N);
  const double* z = logits.data().data();
  double total = 0.0;
  for (std::size_t q = 0; q < Q; ++q)
  {
    const double* row = z + q * N;
    const double mx = *std::max_element(row, row + N);
    double s = 0.0;
    for (std::size_t c = 0; c < N; ++c)
      s += std::exp(row[c] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < N; ++c)
      probs[q * N + c] = std::exp(row[c] - lse);
    total += lse - row[labels[q]];
  }

  Tensor out = make_result({1}, "cross_entropy", {logits});
  out.data()[0] = total / static_cast<double>(Q);
  check_finite(out, "cross_entropy");
  if (out.requires_grad())
    out.node()->backward = [Q, N, labels, probs = std::move(probs)](Node& self) {
      double* g = input_grad(self, 0);
      if (!g)
        return;
      const double share = self.grad[0] / static_cast<double>(Q);
      for (std::size_t q = 0; q < Q; ++q)
        for (std::size_t c = 0; c < N; ++c)
        {
          const double target = static_cast<int>(c) == labels[q] ? 1.0 : 0.0;
          g[q * N + c] += share * (probs[q * N + c] - target);
        }
    };
  return out;
}

} // namespace fsl
