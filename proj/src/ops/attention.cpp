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

// Scaled dot-product attention processed in row tiles. Only the per-row
// log-sum-exp is kept from the forward pass; each tile's weights are rebuilt
// in backward, so memory stays O(n*d) instead of O(n^2) per group.

#include <algorithm>
#include <cmath>

#include "fsl/ops.hpp"
#include "internal.hpp"

namespace fsl {

using namespace detail;

namespace {

constexpr std::size_t kTile = 64;

// scores[rows,n] = scale * q_tile k^T, then rows -> softmax weights.
// Writes each row's log-sum-exp of the scaled scores into lse.
void tile_weights(const double* q, const double* kmat, std::size_t rows, std::size_t n,
                  std::size_t dk, double scale, double* weights, double* lse)
{
  k().gemm(false, true, rows, n, dk, scale, q, dk, kmat, dk, 0.0, weights, n);
  for (std::size_t r = 0; r < rows; ++r)
  {
    double* w = weights + r * n;
    const double mx = *std::max_element(w, w + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j)
    {
      w[j] = std::exp(w[j] - mx);
      total += w[j];
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < n; ++j)
      w[j] *= inv;
    lse[r] = mx + std::log(total);
  }
}

// Rebuilds weights from a saved log-sum-exp.
void tile_weights_from_lse(const double* q, const double* kmat, std::size_t rows, std::size_t n,
                           std::size_t dk, double scale, const double* lse, double* weights)
{
  k().gemm(false, true, rows, n, dk, scale, q, dk, kmat, dk, 0.0, weights, n);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j)
      weights[r * n + j] = std::exp(weights[r * n + j] - lse[r]);
}

struct AttnShape
{
  std::size_t groups, n, dk, dv;
};

AttnShape check_attention(const Tensor& q, const Tensor& kt, const Tensor* v)
{
  require_rank(q, 3, "attention", "q");
  require_rank(kt, 3, "attention", "k");
  if (q.shape() != kt.shape())
    throw DimensionError("attention: q " + to_string(q.shape()) + " and k " +
                         to_string(kt.shape()) + " differ");
  AttnShape s{q.dim(0), q.dim(1), q.dim(2), 0};
  if (v)
  {
    require_rank(*v, 3, "attention", "v");
    if (v->dim(0) != s.groups || v->dim(1) != s.n)
      throw DimensionError("attention: v " + to_string(v->shape()) + " does not match q " +
                           to_string(q.shape()));
    s.dv = v->dim(2);
  }
  return s;
}

} // namespace

Tensor attention(const Tensor& q, const Tensor& kt, const Tensor& v, double scale)
{
  const AttnShape s = check_attention(q, kt, &v);
  const std::size_t n = s.n, dk = s.dk, dv = s.dv;

  Tensor out = make_result({s.groups, n, dv}, "attention", {q, kt, v});
  Buffer lse(s.groups * n);
  Buffer weights(std::min(kTile, n) * n);
  for (std::size_t g = 0; g < s.groups; ++g)
  {
    const double* Q = q.data().data() + g * n * dk;
    const double* K = kt.data().data() + g * n * dk;
    const double* V = v.data().data() + g * n * dv;
    double* O = out.data().data() + g * n * dv;
    for (std::size_t r0 = 0; r0 < n; r0 += kTile)
    {
      const std::size_t rows = std::min(kTile, n - r0);
      tile_weights(Q + r0 * dk, K, rows, n, dk, scale, weights.data(), lse.data() + g * n + r0);
      k().gemm(false, false, rows, dv, n, 1.0, weights.data(), n, V, dv, 0.0, O + r0 * dv, dv);
    }
  }
  check_finite(out, "attention");

  if (out.requires_grad())
    out.node()->backward = [s, scale, lse = std::move(lse)](Node& self) {
      const std::size_t n = s.n, dk = s.dk, dv = s.dv;
      double* gq = input_grad(self, 0);
      double* gk = input_grad(self, 1);
      double* gv = input_grad(self, 2);
      Buffer weights(std::min(kTile, n) * n);
      Buffer dweights(std::min(kTile, n) * n);
      for (std::size_t g = 0; g < s.groups; ++g)
      {
        const double* Q = input_data(self, 0) + g * n * dk;
        const double* K = input_data(self, 1) + g * n * dk;
        const double* V = input_data(self, 2) + g * n * dv;
        const double* O = self.data.data() + g * n * dv;
        const double* dO = self.grad.data() + g * n * dv;
        for (std::size_t r0 = 0; r0 < n; r0 += kTile)
        {
          const std::size_t rows = std::min(kTile, n - r0);
          double* P = weights.data();
          double* dP = dweights.data();
          tile_weights_from_lse(Q + r0 * dk, K, rows, n, dk, scale, lse.data() + g * n + r0, P);
          if (gv) // dV += P^T dO
            k().gemm(true, false, n, dv, rows, 1.0, P, n, dO + r0 * dv, dv, 1.0, gv + g * n * dv,
                     dv);
          if (!gq && !gk)
            continue;
          // dP = dO V^T; dS = P * (dP - rowdot(dO, O))
          k().gemm(false, true, rows, n, dv, 1.0, dO + r0 * dv, dv, V, dv, 0.0, dP, n);
          for (std::size_t r = 0; r < rows; ++r)
          {
            const double d = k().dot(dv, dO + (r0 + r) * dv, O + (r0 + r) * dv);
            for (std::size_t j = 0; j < n; ++j)
              dP[r * n + j] = P[r * n + j] * (dP[r * n + j] - d);
          }
          if (gq)
            k().gemm(false, false, rows, dk, n, scale, dP, n, K, dk, 1.0,
                     gq + g * n * dk + r0 * dk, dk);
          if (gk)
            k().gemm(true, false, n, dk, rows, scale, dP, n, Q + r0 * dk, dk, 1.0,
                     gk + g * n * dk, dk);
        }
      }
    };
  return out;
}

Tensor attention_weights(const Tensor& q, const Tensor& kt, double scale)
{
  const AttnShape s = check_attention(q, kt, nullptr);
  Tensor out = Tensor::zeros({s.groups, s.n, s.n});
  std::vector<double> lse(s.n);
  for (std::size_t g = 0; g < s.groups; ++g)
    tile_weights(q.data().data() + g * s.n * s.dk, kt.data().data() + g * s.n * s.dk, s.n, s.n,
                 s.dk, scale, out.data().data() + g * s.n * s.n, lse.data());
  check_finite(out, "attention_weights");
  return out;
}

} // namespace fsl
