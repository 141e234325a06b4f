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

namespace {

// Splits shape around `axis` into outer x len x inner.
struct AxisView
{
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis, const char* op)
{
  if (axis >= shape.size())
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " invalid for shape " + to_string(shape));
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i)
    v.outer *= shape[i];
  v.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i)
    v.inner *= shape[i];
  return v;
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b)
{
  require_same_shape(a, b, "add");
  Tensor out = make_result(a.shape(), "add", {a, b});
  k().add(a.numel(), a.data().data(), b.data().data(), out.data().data());
  check_finite(out, "add");
  if (out.requires_grad())
    out.node()->backward = [](Node& self) {
      const std::size_t n = self.grad.size();
      for (std::size_t i = 0; i < 2; ++i)
        if (double* g = input_grad(self, i))
          k().axpy(n, 1.0, self.grad.data(), g);
    };
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b)
{
  require_same_shape(a, b, "sub");
  Tensor out = make_result(a.shape(), "sub", {a, b});
  {
    auto y = out.data();
    auto x = a.data();
    auto z = b.data();
    for (std::size_t i = 0; i < y.size(); ++i)
      y[i] = x[i] - z[i];
  }
  check_finite(out, "sub");
  if (out.requires_grad())
    out.node()->backward = [](Node& self) {
      const std::size_t n = self.grad.size();
      if (double* g = input_grad(self, 0))
        k().axpy(n, 1.0, self.grad.data(), g);
      if (double* g = input_grad(self, 1))
        k().axpy(n, -1.0, self.grad.data(), g);
    };
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b)
{
  require_same_shape(a, b, "mul");
  Tensor out = make_result(a.shape(), "mul", {a, b});
  k().mul(a.numel(), a.data().data(), b.data().data(), out.data().data());
  check_finite(out, "mul");
  if (out.requires_grad())
    out.node()->backward = [](Node& self) {
      const std::size_t n = self.grad.size();
      const double* gy = self.grad.data();
      for (std::size_t i = 0; i < 2; ++i)
        if (double* g = input_grad(self, i))
        {
          const double* other = input_data(self, 1 - i);
          for (std::size_t j = 0; j < n; ++j)
            g[j] += gy[j] * other[j];
        }
    };
  return out;
}

Tensor scale(const Tensor& x, double factor)
{
  Tensor out = make_result(x.shape(), "scale", {x});
  auto y = out.data();
  auto in = x.data();
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = factor * in[i];
  check_finite(out, "scale");
  if (out.requires_grad())
    out.node()->backward = [factor](Node& self) {
      if (double* g = input_grad(self, 0))
        k().axpy(self.grad.size(), factor, self.grad.data(), g);
    };
  return out;
}

Tensor add_scalar(const Tensor& x, double value)
{
  Tensor out = make_result(x.shape(), "add_scalar", {x});
  auto y = out.data();
  auto in = x.data();
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = in[i] + value;
  check_finite(out, "add_scalar");
  if (out.requires_grad())
    out.node()->backward = [](Node& self) {
      if (double* g = input_grad(self, 0))
        k().axpy(self.grad.size(), 1.0, self.grad.data(), g);
    };
  return out;
}

Tensor broadcast_to(const Tensor& x, const Shape& shape)
{
  const Shape& src = x.shape();
  if (src.size() != shape.size())
    throw DimensionError("broadcast_to: rank mismatch " + to_string(src) + " -> " +
                         to_string(shape));
  for (std::size_t i = 0; i < src.size(); ++i)
    if (src[i] != shape[i] && src[i] != 1)
      throw DimensionError("broadcast_to: cannot broadcast " + to_string(src) + " -> " +
                           to_string(shape));

  // Source offset for each output element, computed once.
  const std::size_t total = numel(shape);
  std::vector<std::size_t> src_index(total);
  {
    const std::size_t rank = shape.size();
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t o = 0; o < total; ++o)
    {
      std::size_t off = 0;
      for (std::size_t d = 0; d < rank; ++d)
        off = off * src[d] + (src[d] == 1 ? 0 : idx[d]);
      src_index[o] = off;
      for (std::size_t d = rank; d-- > 0;)
      {
        if (++idx[d] < shape[d])
          break;
        idx[d] = 0;
      }
    }
  }

  Tensor out = make_result(shape, "broadcast_to", {x});
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

Tensor relu(const Tensor& x)
{
  check_finite(x, "relu");
  Tensor out = make_result(x.shape(), "relu", {x});
  k().relu(x.numel(), x.data().data(), out.data().data());
  check_finite(out, "relu");
  if (out.requires_grad())
    out.node()->backward = [](Node& self) {
      if (double* g = input_grad(self, 0))
        k().relu_backward(self.grad.size(), input_data(self, 0), self.grad.data(), g);
    };
  return out;
}

Tensor leaky_relu(const Tensor& x, double slope)
{
  if (!(slope >= 0.0 && slope < 1.0))
    throw ContractError("leaky_relu: slope must lie in [0,1), got " + std::to_string(slope));
  Tensor out = make_result(x.shape(), "leaky_relu", {x});
  auto y = out.data();
  auto in = x.data();
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = in[i] > 0.0 ? in[i] : slope * in[i];
  check_finite(out, "leaky_relu");
  if (out.requires_grad())
    out.node()->backward = [slope](Node& self) {
      if (double* g = input_grad(self, 0))
      {
        const double* in = input_data(self, 0);
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          g[i] += in[i] > 0.0 ? self.grad[i] : slope * self.grad[i];
      }
    };
  return out;
}

Tensor sigmoid(const Tensor& x)
{
  Tensor out = make_result(x.shape(), "sigmoid", {x});
  auto y = out.data();
  auto in = x.data();
  for (std::size_t i = 0; i < y.size(); ++i)
  {
    const double v = in[i];
    // branch keeps exp() from overflowing for large |v|
    if (v >= 0.0)
      y[i] = 1.0 / (1.0 + std::exp(-v));
    else
    {
      const double e = std::exp(v);
      y[i] = e / (1.0 + e);
    }
  }
  check_finite(out, "sigmoid");
  if (out.requires_grad())
    out.node()->backward = [](Node& self) {
      if (double* g = input_grad(self, 0))
        for (std::size_t i = 0; i < self.grad.size(); ++i)
        {
          const double s = self.data[i];
          g[i] += self.grad[i] * s * (1.0 - s);
        }
    };
  return out;
}

Tensor softmax(const Tensor& x, std::size_t axis)
{
  const AxisView v = axis_view(x.shape(), axis, "softmax");
  Tensor out = make_result(x.shape(), "softmax", {x});
  const double* in = x.data().data();
  double* y = out.data().data();
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t i = 0; i < v.inner; ++i)
    {
      const std::size_t base = o * v.len * v.inner + i;
      double mx = in[base];
      for (std::size_t j = 1; j < v.len; ++j)
        mx = std::max(mx, in[base + j * v.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < v.len; ++j)
      {
        const double e = std::exp(in[base + j * v.inner] - mx);
        y[base + j * v.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < v.len; ++j)
        y[base + j * v.inner] /= total;
    }
  check_finite(out, "softmax");
  if (out.requires_grad())
    out.node()->backward = [v](Node& self) {
      double* g = input_grad(self, 0);
      if (!g)
        return;
      const double* y = self.data.data();
      const double* gy = self.grad.data();
      for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t i = 0; i < v.inner; ++i)
        {
          const std::size_t base = o * v.len * v.inner + i;
          double d = 0.0;
          for (std::size_t j = 0; j < v.len; ++j)
            d += gy[base + j * v.inner] * y[base + j * v.inner];
          for (std::size_t j = 0; j < v.len; ++j)
          {
            const std::size_t at = base + j * v.inner;
            g[at] += y[at] * (gy[at] - d);
          }
        }
    };
  return out;
}

Tensor log_softmax(const Tensor& x, std::size_t axis)
{
  const AxisView v = axis_view(x.shape(), axis, "log_softmax");
  Tensor out = make_result(x.shape(), "log_softmax", {x});
  const double* in = x.data().data();
  double* y = out.data().data();
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t i = 0; i < v.inner; ++i)
    {
      const std::size_t base = o * v.len * v.inner + i;
      double mx = in[base];
      for (std::size_t j = 1; j < v.len; ++j)
        mx = std::max(mx, in[base + j * v.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < v.len; ++j)
        total += std::exp(in[base + j * v.inner] - mx);
      const double lse = mx + std::log(total);
      for (std::size_t j = 0; j < v.len; ++j)
        y[base + j * v.inner] = in[base + j * v.inner] - lse;
    }
  check_finite(out, "log_softmax");
  if (out.requires_grad())
    out.node()->backward = [v](Node& self) {
      double* g = input_grad(self, 0);
      if (!g)
        return;
      const double* y = self.data.data();
      const double* gy = self.grad.data();
      for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t i = 0; i < v.inner; ++i)
        {
          const std::size_t base = o * v.len * v.inner + i;
          double total = 0.0;
          for (std::size_t j = 0; j < v.len; ++j)
            total += gy[base + j * v.inner];
          for (std::size_t j = 0; j < v.len; ++j)
          {
            const std::size_t at = base + j * v.inner;
            g[at] += gy[at] - std::exp(y[at]) * total;
          }
        }
    };
  return out;
}

Tensor sum(const Tensor& x)
{
  Tensor out = make_result({1}, "sum", {x});
  double s = 0.0;
  for (double v : x.data())
    s += v;
  out.data()[0] = s;
  check_finite(out, "sum");
  if (out.requires_grad())
    out.node()->backward = [](Node& self) {
      if (double* g = input_grad(self, 0))
      {
        const std::size_t n = self.inputs[0]->data.size();
        for (std::size_t i = 0; i < n; ++i)
          g[i] += self.grad[0];
      }
    };
  return out;
}

Tensor mean(const Tensor& x)
{
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum_axis(const Tensor& x, std::size_t axis)
{
  const AxisView v = axis_view(x.shape(), axis, "sum_axis");
  Shape shape = x.shape();
  shape[axis] = 1;
  Tensor out = make_result(shape, "sum_axis", {x});
  const double* in = x.data().data();
  double* y = out.data().data();
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t j = 0; j < v.len; ++j)
      for (std::size_t i = 0; i < v.inner; ++i)
        y[o * v.inner + i] += in[(o * v.len + j) * v.inner + i];
  check_finite(out, "sum_axis");
  if (out.requires_grad())
    out.node()->backward = [v](Node& self) {
      if (double* g = input_grad(self, 0))
        for (std::size_t o = 0; o < v.outer; ++o)
          for (std::size_t j = 0; j < v.len; ++j)
            for (std::size_t i = 0; i < v.inner; ++i)
              g[(o * v.len + j) * v.inner + i] += self.grad[o * v.inner + i];
    };
  return out;
}

} // namespace fsl
