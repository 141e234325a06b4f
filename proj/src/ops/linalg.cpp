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

#include "fsl/ops.hpp"
#include "internal.hpp"

namespace fsl {

using namespace detail;

Tensor matmul(const Tensor& a, const Tensor& b)
{
  require_rank(a, 2, "matmul", "a");
  require_rank(b, 2, "matmul", "b");
  const std::size_t m = a.dim(0), kk = a.dim(1), n = b.dim(1);
  if (b.dim(0) != kk)
    throw DimensionError("matmul: inner dimensions disagree, " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));

  Tensor out = make_result({m, n}, "matmul", {a, b});
  k().gemm(false, false, m, n, kk, 1.0, a.data().data(), kk, b.data().data(), n, 0.0,
           out.data().data(), n);
  check_finite(out, "matmul");

  if (out.requires_grad())
    out.node()->backward = [m, n, kk](Node& self) {
      const double* gc = self.grad.data();
      if (double* ga = input_grad(self, 0)) // dA = dC B^T
        k().gemm(false, true, m, kk, n, 1.0, gc, n, input_data(self, 1), n, 1.0, ga, kk);
      if (double* gb = input_grad(self, 1)) // dB = A^T dC
        k().gemm(true, false, kk, n, m, 1.0, input_data(self, 0), kk, gc, n, 1.0, gb, n);
    };
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b)
{
  require_rank(a, 3, "bmm", "a");
  require_rank(b, 3, "bmm", "b");
  const std::size_t g = a.dim(0), m = a.dim(1), kk = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  const std::size_t bk = transpose_b ? b.dim(2) : b.dim(1);
  if (b.dim(0) != g || bk != kk)
    throw DimensionError("bmm: incompatible shapes " + to_string(a.shape()) + " x " +
                         to_string(b.shape()) + (transpose_b ? "^T" : ""));

  Tensor out = make_result({g, m, n}, "bmm", {a, b});
  const std::size_t ldb = transpose_b ? kk : n;
  for (std::size_t i = 0; i < g; ++i)
    k().gemm(false, transpose_b, m, n, kk, 1.0, a.data().data() + i * m * kk, kk,
             b.data().data() + i * kk * n, ldb, 0.0, out.data().data() + i * m * n, n);
  check_finite(out, "bmm");

  if (out.requires_grad())
    out.node()->backward = [g, m, n, kk, transpose_b, ldb](Node& self) {
      const double* A = input_data(self, 0);
      const double* B = input_data(self, 1);
      double* ga = input_grad(self, 0);
      double* gb = input_grad(self, 1);
      for (std::size_t i = 0; i < g; ++i)
      {
        const double* gc = self.grad.data() + i * m * n;
        const double* Ai = A + i * m * kk;
        const double* Bi = B + i * kk * n;
        if (ga)
          k().gemm(false, !transpose_b, m, kk, n, 1.0, gc, n, Bi, ldb, 1.0, ga + i * m * kk, kk);
        if (gb)
        {
          if (transpose_b) // stored B is [n,k]: dB = dC^T A
            k().gemm(true, false, n, kk, m, 1.0, gc, n, Ai, kk, 1.0, gb + i * kk * n, kk);
          else
            k().gemm(true, false, kk, n, m, 1.0, Ai, kk, gc, n, 1.0, gb + i * kk * n, n);
        }
      }
    };
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias)
{
  require_rank(x, 2, "linear", "input");
  require_rank(w, 2, "linear", "weight");
  const std::size_t batch = x.dim(0), din = x.dim(1), dout = w.dim(1);
  if (w.dim(0) != din)
    throw DimensionError("linear: input " + to_string(x.shape()) + " does not match weight " +
                         to_string(w.shape()));
  const bool has_bias = bias.defined();
  if (has_bias && bias.shape() != Shape{dout})
    throw DimensionError("linear: bias " + to_string(bias.shape()) + " does not match weight " +
                         to_string(w.shape()));

  Tensor out = has_bias ? make_result({batch, dout}, "linear", {x, w, bias})
                        : make_result({batch, dout}, "linear", {x, w});
  double* y = out.data().data();
  if (has_bias)
    for (std::size_t i = 0; i < batch; ++i)
      std::copy(bias.data().begin(), bias.data().end(), y + i * dout);
  k().gemm(false, false, batch, dout, din, 1.0, x.data().data(), din, w.data().data(), dout,
           has_bias ? 1.0 : 0.0, y, dout);
  check_finite(out, "linear");

  if (out.requires_grad())
    out.node()->backward = [batch, din, dout, has_bias](Node& self) {
      const double* gy = self.grad.data();
      if (double* gx = input_grad(self, 0))
        k().gemm(false, true, batch, din, dout, 1.0, gy, dout, input_data(self, 1), dout, 1.0, gx,
                 din);
      if (double* gw = input_grad(self, 1))
        k().gemm(true, false, din, dout, batch, 1.0, input_data(self, 0), din, gy, dout, 1.0, gw,
                 dout);
      if (has_bias)
        if (double* gb = input_grad(self, 2))
          for (std::size_t i = 0; i < batch; ++i)
            k().axpy(dout, 1.0, gy + i * dout, gb);
    };
  return out;
}

} // namespace fsl
