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

// Compiled with -mavx2 -mfma. Nothing here may run before dispatch.cpp has
// confirmed CPU support.

#include "fsl/kernels.hpp"

#include <immintrin.h>

#include <vector>

namespace fsl::kernels {
namespace {

inline void store_block(double* c, __m256d acc, __m256d valpha, double beta)
{
  __m256d r = _mm256_mul_pd(valpha, acc);
  if (beta != 0.0)
    r = _mm256_fmadd_pd(_mm256_set1_pd(beta), _mm256_loadu_pd(c), r);
  _mm256_storeu_pd(c, r);
}

// R rows x 8 columns of C; a points at row 0 of the block, b at column 0.
template <int R>
void block8(std::size_t k, const double* a, std::size_t lda, const double* b, std::size_t ldb,
            double alpha, double beta, double* c, std::size_t ldc)
{
  __m256d lo[R];
  __m256d hi[R];
  for (int r = 0; r < R; ++r)
  {
    lo[r] = _mm256_setzero_pd();
    hi[r] = _mm256_setzero_pd();
  }
  for (std::size_t p = 0; p < k; ++p)
  {
    const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
    const __m256d b1 = _mm256_loadu_pd(b + p * ldb + 4);
    for (int r = 0; r < R; ++r)
    {
      const __m256d av = _mm256_broadcast_sd(a + r * lda + p);
      lo[r] = _mm256_fmadd_pd(av, b0, lo[r]);
      hi[r] = _mm256_fmadd_pd(av, b1, hi[r]);
    }
  }
  const __m256d valpha = _mm256_set1_pd(alpha);
  for (int r = 0; r < R; ++r)
  {
    store_block(c + r * ldc, lo[r], valpha, beta);
    store_block(c + r * ldc + 4, hi[r], valpha, beta);
  }
}

template <int R>
void block4(std::size_t k, const double* a, std::size_t lda, const double* b, std::size_t ldb,
            double alpha, double beta, double* c, std::size_t ldc)
{
  __m256d acc[R];
  for (int r = 0; r < R; ++r)
    acc[r] = _mm256_setzero_pd();
  for (std::size_t p = 0; p < k; ++p)
  {
    const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
    for (int r = 0; r < R; ++r)
      acc[r] = _mm256_fmadd_pd(_mm256_broadcast_sd(a + r * lda + p), b0, acc[r]);
  }
  const __m256d valpha = _mm256_set1_pd(alpha);
  for (int r = 0; r < R; ++r)
    store_block(c + r * ldc, acc[r], valpha, beta);
}

template <int R>
void row_panel(std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
               std::size_t ldb, double alpha, double beta, double* c, std::size_t ldc)
{
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8)
    block8<R>(k, a, lda, b + j, ldb, alpha, beta, c + j, ldc);
  for (; j + 4 <= n; j += 4)
    block4<R>(k, a, lda, b + j, ldb, alpha, beta, c + j, ldc);
  for (; j < n; ++j)
    for (int r = 0; r < R; ++r)
    {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p)
        s += a[r * lda + p] * b[p * ldb + j];
      double& out = c[r * ldc + j];
      out = beta == 0.0 ? alpha * s : alpha * s + beta * out;
    }
}

void transpose_into(std::vector<double>& dst, const double* src, std::size_t rows,
                    std::size_t cols, std::size_t ld)
{
  // src is rows x cols with leading dim ld; dst becomes cols x rows.
  dst.resize(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      dst[j * rows + i] = src[i * ld + j];
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
          double* c, std::size_t ldc)
{
  if (m == 0 || n == 0)
    return;
  thread_local std::vector<double> packed_a;
  thread_local std::vector<double> packed_b;
  if (trans_a)
  {
    transpose_into(packed_a, a, k, m, lda);
    a = packed_a.data();
    lda = k;
  }
  if (trans_b)
  {
    transpose_into(packed_b, b, n, k, ldb);
    b = packed_b.data();
    ldb = n;
  }

  std::size_t i = 0;
  for (; i + 4 <= m; i += 4)
    row_panel<4>(n, k, a + i * lda, lda, b, ldb, alpha, beta, c + i * ldc, ldc);
  for (; i < m; ++i)
    row_panel<1>(n, k, a + i * lda, lda, b, ldb, alpha, beta, c + i * ldc, ldc);
}

void axpy(std::size_t n, double alpha, const double* x, double* y)
{
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i)
    y[i] += alpha * x[i];
}

double dot(std::size_t n, const double* x, const double* y)
{
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
  {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4)
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(s0, s1));
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i)
    s += x[i] * y[i];
  return s;
}

void add(std::size_t n, const double* x, const double* y, double* out)
{
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i)
    out[i] = x[i] + y[i];
}

void mul(std::size_t n, const double* x, const double* y, double* out)
{
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i)
    out[i] = x[i] * y[i];
}

void relu(std::size_t n, const double* x, double* out)
{
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
  {
    const __m256d v = _mm256_loadu_pd(x + i);
    // keep v only where v > 0, so -0.0 and NaN map like the scalar path
    const __m256d mask = _mm256_cmp_pd(v, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_and_pd(mask, v));
  }
  for (; i < n; ++i)
    out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(std::size_t n, const double* x, const double* gy, double* gx)
{
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
  {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    const __m256d g = _mm256_and_pd(mask, _mm256_loadu_pd(gy + i));
    _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), g));
  }
  for (; i < n; ++i)
    if (x[i] > 0.0)
      gx[i] += gy[i];
}

} // namespace

const KernelTable& avx2_table()
{
  static const KernelTable t{Isa::avx2, "avx2", gemm, axpy, dot, add, mul, relu, relu_backward};
  return t;
}

} // namespace fsl::kernels
