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

#include <cmath>
#include <memory>
#include <vector>

#include "fsl/ops.hpp"
#include "internal.hpp"

namespace fsl {

using namespace detail;

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                 Tensor& running_var, bool training, double eps, double momentum)
{
  if (x.rank() != 2 && x.rank() != 4)
    throw DimensionError("batchnorm: expected [B,F] or [B,C,H,W], got " + to_string(x.shape()));
  const std::size_t B = x.dim(0), F = x.dim(1);
  const std::size_t inner = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  const Shape fshape{F};
  for (const Tensor* t :
       std::initializer_list<const Tensor*>{&gamma, &beta, &running_mean, &running_var})
    if (t->shape() != fshape)
      throw DimensionError("batchnorm: parameter " + to_string(t->shape()) + " does not match " +
                           std::to_string(F) + " features");
  if (training && B < 2)
    throw ContractError("batchnorm: degenerate batch of size " + std::to_string(B) +
                        " in training mode");

  const std::size_t count = B * inner;
  std::vector<double> mu(F), invstd(F);
  const double* in = x.data().data();
  auto at = [F, inner](std::size_t b, std::size_t f, std::size_t i) {
    return (b * F + f) * inner + i;
  };

  if (training)
  {
    for (std::size_t f = 0; f < F; ++f)
    {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < inner; ++i)
          s += in[at(b, f, i)];
      const double m = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < inner; ++i)
        {
          const double d = in[at(b, f, i)] - m;
          ss += d * d;
        }
      const double var = ss / static_cast<double>(count);
      mu[f] = m;
      invstd[f] = 1.0 / std::sqrt(var + eps);
      // running variance tracks the unbiased estimate
      const double unbiased = ss / static_cast<double>(count - 1);
      running_mean.data()[f] = (1.0 - momentum) * running_mean.data()[f] + momentum * m;
      running_var.data()[f] = (1.0 - momentum) * running_var.data()[f] + momentum * unbiased;
    }
  }
  else
  {
    for (std::size_t f = 0; f < F; ++f)
    {
      mu[f] = running_mean.data()[f];
      invstd[f] = 1.0 / std::sqrt(running_var.data()[f] + eps);
    }
  }

  Tensor out = make_result(x.shape(), training ? "batchnorm_train" : "batchnorm_eval",
                           {x, gamma, beta});
  double* y = out.data().data();
  Buffer xhat(x.numel());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t i = 0; i < inner; ++i)
      {
        const std::size_t p = at(b, f, i);
        xhat[p] = (in[p] - mu[f]) * invstd[f];
        y[p] = gamma.data()[f] * xhat[p] + beta.data()[f];
      }
  check_finite(out, "batchnorm");

  if (out.requires_grad())
    out.node()->backward = [B, F, inner, training, invstd = std::move(invstd),
                            xhat = std::move(xhat)](Node& self) {
      const double* gy = self.grad.data();
      const double* g = input_data(self, 1);
      double* gx = input_grad(self, 0);
      double* ggamma = input_grad(self, 1);
      double* gbeta = input_grad(self, 2);
      const double n = static_cast<double>(B * inner);
      for (std::size_t f = 0; f < F; ++f)
      {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t i = 0; i < inner; ++i)
          {
            const std::size_t p = (b * F + f) * inner + i;
            sum_dy += gy[p];
            sum_dy_xhat += gy[p] * xhat[p];
          }
        if (ggamma)
          ggamma[f] += sum_dy_xhat;
        if (gbeta)
          gbeta[f] += sum_dy;
        if (!gx)
          continue;
        const double k = g[f] * invstd[f];
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t i = 0; i < inner; ++i)
          {
            const std::size_t p = (b * F + f) * inner + i;
            if (training)
              gx[p] += k * (gy[p] - sum_dy / n - xhat[p] * sum_dy_xhat / n);
            else
              gx[p] += k * gy[p];
          }
      }
    };
  return out;
}

Tensor normalize_rows(const Tensor& x, double eps)
{
  if (x.rank() != 2)
    throw DimensionError("normalize_rows: expected [R,F], got " + to_string(x.shape()));
  if (!(eps > 0.0))
    throw ContractError("normalize_rows: eps must be positive");
  const std::size_t R = x.dim(0), F = x.dim(1);
  Tensor out = make_result(x.shape(), "normalize_rows", {x});
  auto y = out.data();
  auto in = x.data();
  auto norms = std::make_shared<std::vector<double>>(R);
  for (std::size_t r = 0; r < R; ++r)
  {
    double s = eps;
    for (std::size_t f = 0; f < F; ++f)
      s += in[r * F + f] * in[r * F + f];
    const double n = std::sqrt(s);
    (*norms)[r] = n;
    for (std::size_t f = 0; f < F; ++f)
      y[r * F + f] = in[r * F + f] / n;
  }
  check_finite(out, "normalize_rows");
  if (out.requires_grad())
    out.node()->backward = [norms, R, F](Node& self) {
      if (double* g = input_grad(self, 0))
        for (std::size_t r = 0; r < R; ++r)
        {
          const double* yr = &self.data[r * F];
          const double* dy = &self.grad[r * F];
          double dot = 0.0;
          for (std::size_t f = 0; f < F; ++f)
            dot += yr[f] * dy[f];
          for (std::size_t f = 0; f < F; ++f)
            g[r * F + f] += (dy[f] - yr[f] * dot) / (*norms)[r];
        }
    };
  return out;
}

} // namespace fsl
