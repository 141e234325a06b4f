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

#include "fsl/kernels.hpp"

namespace fsl::kernels {
namespace {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
          double* c, std::size_t ldc)
{
  for (std::size_t i = 0; i < m; ++i)
  {
    double* crow = c + i * ldc;
    if (beta == 0.0)
      for (std::size_t j = 0; j < n; ++j)
        crow[j] = 0.0;
    else if (beta != 1.0)
      for (std::size_t j = 0; j < n; ++j)
        crow[j] *= beta;

    for (std::size_t p = 0; p < k; ++p)
    {
      const double av = alpha * (trans_a ? a[p * lda + i] : a[i * lda + p]);
      if (trans_b)
        for (std::size_t j = 0; j < n; ++j)
          crow[j] += av * b[j * ldb + p];
      else
      {
        const double* brow = b + p * ldb;
        for (std::size_t j = 0; j < n; ++j)
          crow[j] += av * brow[j];
      }
    }
  }
}

void axpy(std::size_t n, double alpha, const double* x, double* y)
{
  for (std::size_t i = 0; i < n; ++i)
    y[i] += alpha * x[i];
}

double dot(std::size_t n, const double* x, const double* y)
{
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    s += x[i] * y[i];
  return s;
}

void add(std::size_t n, const double* x, const double* y, double* out)
{
  for (std::size_t i = 0; i < n; ++i)
    out[i] = x[i] + y[i];
}

void mul(std::size_t n, const double* x, const double* y, double* out)
{
  for (std::size_t i = 0; i < n; ++i)
    out[i] = x[i] * y[i];
}

void relu(std::size_t n, const double* x, double* out)
{
  for (std::size_t i = 0; i < n; ++i)
    out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(std::size_t n, const double* x, const double* gy, double* gx)
{
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] > 0.0)
      gx[i] += gy[i];
}

} // namespace

const KernelTable& scalar_table()
{
  static const KernelTable t{Isa::scalar, "scalar", gemm, axpy, dot, add, mul, relu, relu_backward};
  return t;
}

} // namespace fsl::kernels
