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
#include <numeric>

#include "fsl/ops.hpp"
#include "internal.hpp"

namespace fsl {

using namespace detail;

Tensor reshape(const Tensor& x, const Shape& shape)
{
  if (numel(shape) != x.numel())
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " +
                         to_string(shape));
  Tensor out = make_result(shape, "reshape", {x});
  std::copy(x.data().begin(), x.data().end(), out.data().begin());
  if (out.requires_grad())
    out.node()->backward = [](Node& self) {
      if (double* g = input_grad(self, 0))
        k().axpy(self.grad.size(), 1.0, self.grad.data(), g);
    };
  return out;
}

Tensor flatten(const Tensor& x)
{
  if (x.rank() < 2)
    throw DimensionError("flatten: need a batch axis, got " + to_string(x.shape()));
  return reshape(x, {x.dim(0), x.numel() / x.dim(0)});
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes)
{
  const std::size_t rank = x.rank();
  std::vector<std::size_t> check(axes);
  std::sort(check.begin(), check.end());
  std::vector<std::size_t> expect(rank);
  std::iota(expect.begin(), expect.end(), 0);
  if (check != expect)
    throw DimensionError("permute: axes are not a permutation of rank " + std::to_string(rank));

  const Shape& src = x.shape();
  Shape dst(rank);
  for (std::size_t i = 0; i < rank; ++i)
    dst[i] = src[axes[i]];
  std::vector<std::size_t> src_stride(rank, 1);
  for (std::size_t d = rank - 1; d-- > 0;)
    src_stride[d] = src_stride[d + 1] * src[d + 1];

  const std::size_t total = x.numel();
  std::vector<std::size_t> src_index(total);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t o = 0; o < total; ++o)
  {
    std::size_t off = 0;
    for (std::size_t d = 0; d < rank; ++d)
      off += idx[d] * src_stride[axes[d]];
    src_index[o] = off;
    for (std::size_t d = rank; d-- > 0;)
    {
      if (++idx[d] < dst[d])
        break;
      idx[d] = 0;
    }
  }

  Tensor out = make_result(dst, "permute", {x});
  auto y = out.data();
  auto in = x.data();
  for (std::size_t o = 0; o < total; ++o)
    y[o] = in[src_index[o]];
  if (out.requires_grad())
    out.node()->backward = [src_index = std::move(src_index)](Node& self) {
      if (double* g = input_grad(self, 0))
        for (std::size_t o = 0; o < src_index.size(); ++o)
          g[src_index[o]] += self.grad[o];
    };
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis)
{
  if (parts.empty())
    throw ContractError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size())
    throw DimensionError("concat: axis " + std::to_string(axis) + " invalid for shape " +
                         to_string(first));
  Shape shape = first;
  shape[axis] = 0;
  for (const Tensor& p : parts)
  {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d)
      ok = d == axis || s[d] == first[d];
    if (!ok)
      throw DimensionError("concat: " + to_string(s) + " does not match " + to_string(first) +
                           " off axis " + std::to_string(axis));
    shape[axis] += s[axis];
  }

  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d)
    outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d)
    inner *= first[d];

  std::vector<std::size_t> widths;
  for (const Tensor& p : parts)
    widths.push_back(p.dim(axis) * inner);
  const std::size_t row = shape[axis] * inner;

  Tensor out = make_result(shape, "concat", parts);
  double* y = out.data().data();
  std::size_t col = 0;
  for (std::size_t i = 0; i < parts.size(); ++i)
  {
    const double* in = parts[i].data().data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy(in + o * widths[i], in + (o + 1) * widths[i], y + o * row + col);
    col += widths[i];
  }
  if (out.requires_grad())
    out.node()->backward = [widths, outer, row](Node& self) {
      std::size_t col = 0;
      for (std::size_t i = 0; i < widths.size(); ++i)
      {
        if (double* g = input_grad(self, i))
          for (std::size_t o = 0; o < outer; ++o)
            k().axpy(widths[i], 1.0, self.grad.data() + o * row + col, g + o * widths[i]);
        col += widths[i];
      }
    };
  return out;
}

Tensor narrow(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length)
{
  if (axis >= x.rank() || length == 0 || start + length > x.dim(axis))
    throw DimensionError("narrow: range [" + std::to_string(start) + "," +
                         std::to_string(start + length) + ") invalid on axis " +
                         std::to_string(axis) + " of " + to_string(x.shape()));
  Shape shape = x.shape();
  shape[axis] = length;
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d)
    outer *= shape[d];
  for (std::size_t d = axis + 1; d < shape.size(); ++d)
    inner *= shape[d];
  const std::size_t src_row = x.dim(axis) * inner;
  const std::size_t dst_row = length * inner;
  const std::size_t first = start * inner;

  Tensor out = make_result(shape, "narrow", {x});
  const double* in = x.data().data();
  double* y = out.data().data();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy(in + o * src_row + first, in + o * src_row + first + dst_row, y + o * dst_row);
  if (out.requires_grad())
    out.node()->backward = [outer, src_row, dst_row, first](Node& self) {
      if (double* g = input_grad(self, 0))
        for (std::size_t o = 0; o < outer; ++o)
          k().axpy(dst_row, 1.0, self.grad.data() + o * dst_row, g + o * src_row + first);
    };
  return out;
}

Tensor pairwise_absdiff(const Tensor& x)
{
  require_rank(x, 2, "pairwise_absdiff", "input");
  const std::size_t v = x.dim(0), d = x.dim(1);
  Tensor out = make_result({v * v, d}, "pairwise_absdiff", {x});
  const double* in = x.data().data();
  double* y = out.data().data();
  for (std::size_t i = 0; i < v; ++i)
    for (std::size_t j = 0; j < v; ++j)
      for (std::size_t c = 0; c < d; ++c)
        y[(i * v + j) * d + c] = std::abs(in[i * d + c] - in[j * d + c]);
  check_finite(out, "pairwise_absdiff");
  if (out.requires_grad())
    out.node()->backward = [v, d](Node& self) {
      double* g = input_grad(self, 0);
      if (!g)
        return;
      const double* in = input_data(self, 0);
      for (std::size_t i = 0; i < v; ++i)
        for (std::size_t j = 0; j < v; ++j)
          for (std::size_t c = 0; c < d; ++c)
          {
            const double diff = in[i * d + c] - in[j * d + c];
            const double gy = self.grad[(i * v + j) * d + c];
            // subgradient 0 at diff == 0
            const double s = diff > 0.0 ? gy : (diff < 0.0 ? -gy : 0.0);
            g[i * d + c] += s;
            g[j * d + c] -= s;
          }
    };
  return out;
}

} // namespace fsl
