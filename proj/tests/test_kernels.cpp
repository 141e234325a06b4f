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
#include <vector>

#include "doctest.h"
#include "fsl/kernels.hpp"
#include "fsl/ops.hpp"
#include "fsl/random.hpp"
#include "oracles.hpp"

using namespace fsl;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng)
{
  std::vector<double> v(n);
  for (double& x : v)
    x = rng.uniform(-1.0, 1.0);
  return v;
}

// Naive transposed access reference for C = alpha op(A) op(B) + beta C.
std::vector<double> gemm_reference(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
                                   double alpha, const std::vector<double>& a,
                                   const std::vector<double>& b, double beta,
                                   std::vector<double> c)
{
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
    {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p)
        s += (ta ? a[p * m + i] : a[i * k + p]) * (tb ? b[j * k + p] : b[p * n + j]);
      c[i * n + j] = alpha * s + (beta == 0.0 ? 0.0 : beta * c[i * n + j]);
    }
  return c;
}

std::vector<kernels::Isa> available()
{
  std::vector<kernels::Isa> out{kernels::Isa::scalar};
  if (kernels::supported(kernels::Isa::avx2))
    out.push_back(kernels::Isa::avx2);
  return out;
}

struct RestoreKernels
{
  const kernels::KernelTable& saved = kernels::active();
  ~RestoreKernels() { kernels::select(saved.isa); }
};

} // namespace

TEST_CASE("every compiled gemm variant matches the reference on ragged shapes")
{
  Rng rng(11);
  for (kernels::Isa isa : available())
  {
    const auto& t = kernels::table(isa);
    CAPTURE(t.name);
    for (int trial = 0; trial < 120; ++trial)
    {
      const std::size_t cap = trial < 60 ? 21 : 90;
      const std::size_t m = 1 + rng.below(cap), n = 1 + rng.below(cap), k = 1 + rng.below(cap);
      const bool ta = rng.below(2), tb = rng.below(2);
      const double alpha = rng.uniform(-2, 2);
      const double beta = trial % 3 == 0 ? 0.0 : (trial % 3 == 1 ? 1.0 : rng.uniform(-1, 1));
      const auto a = random_vec(m * k, rng);
      const auto b = random_vec(k * n, rng);
      auto c = random_vec(m * n, rng);
      const auto expect = gemm_reference(ta, tb, m, n, k, alpha, a, b, beta, c);
      t.gemm(ta, tb, m, n, k, alpha, a.data(), ta ? m : k, b.data(), tb ? k : n, beta, c.data(),
             n);
      CHECK(oracle::max_abs_diff(c, expect) < 1e-12);
    }
  }
}

TEST_CASE("gemm with beta 0 ignores garbage in C")
{
  for (kernels::Isa isa : available())
  {
    const auto& t = kernels::table(isa);
    std::vector<double> a{1, 2, 3, 4}, b{1, 0, 0, 1};
    std::vector<double> c(4, std::nan(""));
    t.gemm(false, false, 2, 2, 2, 1.0, a.data(), 2, b.data(), 2, 0.0, c.data(), 2);
    CHECK(c == std::vector<double>{1, 2, 3, 4});
  }
}

TEST_CASE("vector kernels agree across variants")
{
  if (!kernels::supported(kernels::Isa::avx2))
    return;
  const auto& s = kernels::table(kernels::Isa::scalar);
  const auto& v = kernels::table(kernels::Isa::avx2);
  Rng rng(5);
  for (std::size_t n : {1u, 3u, 4u, 7u, 8u, 9u, 31u, 64u, 129u})
  {
    const auto x = random_vec(n, rng);
    const auto y = random_vec(n, rng);
    CHECK(std::abs(s.dot(n, x.data(), y.data()) - v.dot(n, x.data(), y.data())) < 1e-13);

    std::vector<double> o1(n), o2(n);
    s.add(n, x.data(), y.data(), o1.data());
    v.add(n, x.data(), y.data(), o2.data());
    CHECK(o1 == o2);
    s.mul(n, x.data(), y.data(), o1.data());
    v.mul(n, x.data(), y.data(), o2.data());
    CHECK(o1 == o2);
    s.relu(n, x.data(), o1.data());
    v.relu(n, x.data(), o2.data());
    CHECK(o1 == o2);

    std::vector<double> g1 = y, g2 = y;
    s.axpy(n, 0.37, x.data(), g1.data());
    v.axpy(n, 0.37, x.data(), g2.data());
    CHECK(oracle::max_abs_diff(g1, g2) < 1e-15);

    g1 = y;
    g2 = y;
    s.relu_backward(n, x.data(), y.data(), g1.data());
    v.relu_backward(n, x.data(), y.data(), g2.data());
    CHECK(g1 == g2);
  }
}

TEST_CASE("conv2d forward and backward agree between kernel variants")
{
  if (!kernels::supported(kernels::Isa::avx2))
    return;
  RestoreKernels restore;
  Rng rng(3);
  const Tensor x0 = Tensor::uniform({2, 3, 9, 9}, rng, -1, 1);
  const Tensor w0 = Tensor::uniform({5, 3, 3, 3}, rng, -1, 1);
  const Tensor b0 = Tensor::uniform({5}, rng, -1, 1);

  std::vector<std::vector<double>> results;
  for (kernels::Isa isa : {kernels::Isa::scalar, kernels::Isa::avx2})
  {
    kernels::select(isa);
    Tensor x = x0.detach().set_requires_grad(true);
    Tensor w = w0.detach().set_requires_grad(true);
    Tensor b = b0.detach().set_requires_grad(true);
    Tensor y = conv2d(x, w, b, 2, 1);
    sum(mul(y, y)).backward();
    std::vector<double> flat(y.data().begin(), y.data().end());
    flat.insert(flat.end(), x.grad().begin(), x.grad().end());
    flat.insert(flat.end(), w.grad().begin(), w.grad().end());
    results.push_back(flat);
  }
  CHECK(oracle::max_abs_diff(results[0], results[1]) < 1e-11);
}

TEST_CASE("kernel selection rejects nothing that is supported and reports names")
{
  RestoreKernels restore;
  for (kernels::Isa isa : available())
  {
    kernels::select(isa);
    CHECK(kernels::active().isa == isa);
    CHECK(kernels::name(isa) == kernels::active().name);
  }
}
