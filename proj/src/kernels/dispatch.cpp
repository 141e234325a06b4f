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

#include <atomic>
#include <cstdlib>
#include <string>

#include "fsl/error.hpp"
#include "fsl/kernels.hpp"

namespace fsl::kernels {
namespace {

bool cpu_has_avx2()
{
#if defined(FSL_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* initial_table()
{
  Isa isa = supported(Isa::avx2) ? Isa::avx2 : Isa::scalar;
  if (const char* env = std::getenv("FSL_KERNELS"))
  {
    const std::string want(env);
    if (want == "scalar")
      isa = Isa::scalar;
    else if (want == "avx2" && supported(Isa::avx2))
      isa = Isa::avx2;
  }
  return &table(isa);
}

std::atomic<const KernelTable*>& current()
{
  static std::atomic<const KernelTable*> ptr{initial_table()};
  return ptr;
}

} // namespace

bool supported(Isa isa)
{
  switch (isa)
  {
  case Isa::scalar:
    return true;
  case Isa::avx2:
  {
    static const bool ok = cpu_has_avx2();
    return ok;
  }
  }
  return false;
}

const KernelTable& table(Isa isa)
{
#if defined(FSL_HAVE_AVX2)
  if (isa == Isa::avx2)
  {
    if (!supported(isa))
      throw ContractError("kernels: avx2 not supported on this CPU");
    return avx2_table();
  }
#endif
  if (isa != Isa::scalar)
    throw ContractError("kernels: variant not compiled in: " + std::string(name(isa)));
  return scalar_table();
}

const KernelTable& active()
{
  return *current().load(std::memory_order_relaxed);
}

void select(Isa isa)
{
  current().store(&table(isa), std::memory_order_relaxed);
}

std::string_view name(Isa isa)
{
  switch (isa)
  {
  case Isa::scalar:
    return "scalar";
  case Isa::avx2:
    return "avx2";
  }
  return "unknown";
}

} // namespace fsl::kernels
