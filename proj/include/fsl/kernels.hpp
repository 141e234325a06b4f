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

#ifndef FSL_KERNELS_HPP
#define FSL_KERNELS_HPP

#include <cstddef>
#include <string_view>

// Dense f64 inner loops. Every kernel has a portable scalar reference and,
// where the CPU allows, a vectorized variant. The active table is chosen once
// at startup (CPU detection, overridable with FSL_KERNELS=scalar|avx2) and the
// variants are held to agreement by tests/test_kernels.cpp.

namespace fsl::kernels {

enum class Isa
{
  scalar,
  avx2,
};

// All matrices are row-major. op(A) is m x k, op(B) is k x n, C is m x n.
// With trans_a the stored A is k x m (likewise B). beta == 0 overwrites C
// without reading it.
using GemmFn = void (*)(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                        double alpha, const double* a, std::size_t lda, const double* b,
                        std::size_t ldb, double beta, double* c, std::size_t ldc);

struct KernelTable
{
  Isa isa;
  const char* name;
  GemmFn gemm;
  // y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  double (*dot)(std::size_t n, const double* x, const double* y);
  void (*add)(std::size_t n, const double* x, const double* y, double* out);
  void (*mul)(std::size_t n, const double* x, const double* y, double* out);
  void (*relu)(std::size_t n, const double* x, double* out);
  // gx += gy where x > 0
  void (*relu_backward)(std::size_t n, const double* x, const double* gy, double* gx);
};

const KernelTable& scalar_table();
#if defined(FSL_HAVE_AVX2)
const KernelTable& avx2_table();
#endif

// True when the variant was compiled in and the running CPU can execute it.
bool supported(Isa isa);

const KernelTable& table(Isa isa);

// The table used by all tensor operations.
const KernelTable& active();

// Switches the active table; throws ContractError when unsupported.
void select(Isa isa);

std::string_view name(Isa isa);

} // namespace fsl::kernels

#endif // FSL_KERNELS_HPP
