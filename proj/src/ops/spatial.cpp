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
#include <limits>

#include "fsl/ops.hpp"
#include "internal.hpp"

namespace fsl {

using namespace detail;

namespace {

struct ConvGeometry
{
  std::size_t batch, cin, height, width;
  std::size_t cout, kh, kw;
  std::size_t stride, pad;
  std::size_t out_h, out_w;

  std::size_t patch() const { return cin * kh * kw; }
  std::size_t pixels() const { return out_h * out_w; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

// Image [cin,H,W] -> columns [cin*kh*kw, out_h*out_w]; out-of-range taps are 0.
void im2col(const ConvGeometry& g, const double* image, double* col)
{
  const std::size_t pixels = g.pixels();
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j)
      {
        double* row = col + ((c * g.kh + i) * g.kw + j) * pixels;
        for (std::size_t oy = 0; oy < g.out_h; ++oy)
        {
          const long y = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
          double* dst = row + oy * g.out_w;
          if (y < 0 || y >= static_cast<long>(g.height))
          {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = image + (c * g.height + static_cast<std::size_t>(y)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox)
          {
            const long x = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.pad);
            dst[ox] = (x < 0 || x >= static_cast<long>(g.width)) ? 0.0 : src[x];
          }
        }
      }
}

// Adjoint of im2col: scatters column gradients back onto the image.
void col2im(const ConvGeometry& g, const double* col, double* image)
{
  const std::size_t pixels = g.pixels();
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j)
      {
        const double* row = col + ((c * g.kh + i) * g.kw + j) * pixels;
        for (std::size_t oy = 0; oy < g.out_h; ++oy)
        {
          const long y = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
          if (y < 0 || y >= static_cast<long>(g.height))
            continue;
          double* dst = image + (c * g.height + static_cast<std::size_t>(y)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox)
          {
            const long x = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.pad);
            if (x >= 0 && x < static_cast<long>(g.width))
              dst[x] += row[oy * g.out_w + ox];
          }
        }
      }
}

} // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding)
{
  require_rank(x, 4, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  if (stride == 0)
    throw ContractError("conv2d: stride must be positive");
  ConvGeometry g{};
  g.batch = x.dim(0);
  g.cin = x.dim(1);
  g.height = x.dim(2);
  g.width = x.dim(3);
  g.cout = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.stride = stride;
  g.pad = padding;
  if (weight.dim(1) != g.cin)
    throw DimensionError("conv2d: input " + to_string(x.shape()) + " has " +
                         std::to_string(g.cin) + " channels, weight " +
                         to_string(weight.shape()) + " expects " +
                         std::to_string(weight.dim(1)));
  if (g.kh > g.height + 2 * padding || g.kw > g.width + 2 * padding)
    throw DimensionError("conv2d: kernel " + to_string(weight.shape()) +
                         " larger than padded input " + to_string(x.shape()) + " (padding " +
                         std::to_string(padding) + ")");
  const bool has_bias = bias.defined();
  if (has_bias && bias.shape() != Shape{g.cout})
    throw DimensionError("conv2d: bias " + to_string(bias.shape()) + " does not match " +
                         std::to_string(g.cout) + " output channels");
  g.out_h = (g.height + 2 * padding - g.kh) / stride + 1;
  g.out_w = (g.width + 2 * padding - g.kw) / stride + 1;

  const Shape shape{g.batch, g.cout, g.out_h, g.out_w};
  Tensor out = has_bias ? make_result(shape, "conv2d", {x, weight, bias})
                        : make_result(shape, "conv2d", {x, weight});

  const std::size_t K = g.patch(), P = g.pixels();
  const std::size_t in_stride = g.cin * g.height * g.width;
  const std::size_t out_stride = g.cout * P;
  Buffer col(g.pointwise() ? 0 : K * P);
  for (std::size_t b = 0; b < g.batch; ++b)
  {
    const double* image = x.data().data() + b * in_stride;
    double* y = out.data().data() + b * out_stride;
    if (has_bias)
      for (std::size_t c = 0; c < g.cout; ++c)
        std::fill(y + c * P, y + (c + 1) * P, bias.data()[c]);
    const double* cols = image;
    if (!g.pointwise())
    {
      im2col(g, image, col.data());
      cols = col.data();
    }
    k().gemm(false, false, g.cout, P, K, 1.0, weight.data().data(), K, cols, P,
             has_bias ? 1.0 : 0.0, y, P);
  }
  check_finite(out, "conv2d");

  if (out.requires_grad())
    out.node()->backward = [g, has_bias](Node& self) {
      const std::size_t K = g.patch(), P = g.pixels();
      const std::size_t in_stride = g.cin * g.height * g.width;
      const std::size_t out_stride = g.cout * P;
      const double* X = input_data(self, 0);
      const double* W = input_data(self, 1);
      double* gx = input_grad(self, 0);
      double* gw = input_grad(self, 1);
      double* gb = has_bias ? input_grad(self, 2) : nullptr;
      Buffer col(g.pointwise() ? 0 : K * P);
      Buffer gcol((gx && !g.pointwise()) ? K * P : 0);
      for (std::size_t b = 0; b < g.batch; ++b)
      {
        const double* gy = self.grad.data() + b * out_stride;
        if (gb)
          for (std::size_t c = 0; c < g.cout; ++c)
          {
            double s = 0.0;
            for (std::size_t p = 0; p < P; ++p)
              s += gy[c * P + p];
            gb[c] += s;
          }
        if (gw)
        {
          const double* cols = X + b * in_stride;
          if (!g.pointwise())
          {
            im2col(g, cols, col.data());
            cols = col.data();
          }
          k().gemm(false, true, g.cout, K, P, 1.0, gy, P, cols, P, 1.0, gw, K);
        }
        if (gx)
        {
          if (g.pointwise())
            k().gemm(true, false, K, P, g.cout, 1.0, W, K, gy, P, 1.0, gx + b * in_stride, P);
          else
          {
            k().gemm(true, false, K, P, g.cout, 1.0, W, K, gy, P, 0.0, gcol.data(), P);
            col2im(g, gcol.data(), gx + b * in_stride);
          }
        }
      }
    };
  return out;
}

Tensor maxpool2d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t padding)
{
  require_rank(x, 4, "maxpool2d", "input");
  if (kernel == 0 || stride == 0)
    throw ContractError("maxpool2d: kernel and stride must be positive");
  if (padding >= kernel)
    throw ContractError("maxpool2d: padding must be smaller than the window");
  check_finite(x, "maxpool2d");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (kernel > H + 2 * padding || kernel > W + 2 * padding)
    throw DimensionError("maxpool2d: window " + std::to_string(kernel) + " exceeds input " +
                         to_string(x.shape()));
  const std::size_t oh = (H + 2 * padding - kernel) / stride + 1;
  const std::size_t ow = (W + 2 * padding - kernel) / stride + 1;

  Tensor out = make_result({B, C, oh, ow}, "maxpool2d", {x});
  std::vector<std::size_t> argmax(out.numel());
  const double* in = x.data().data();
  double* y = out.data().data();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < B * C; ++plane)
  {
    const double* src = in + plane * H * W;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox, ++o)
      {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t where = 0;
        bool found = false;
        for (std::size_t i = 0; i < kernel; ++i)
        {
          const long r = static_cast<long>(oy * stride + i) - static_cast<long>(padding);
          if (r < 0 || r >= static_cast<long>(H))
            continue;
          for (std::size_t j = 0; j < kernel; ++j)
          {
            const long c = static_cast<long>(ox * stride + j) - static_cast<long>(padding);
            if (c < 0 || c >= static_cast<long>(W))
              continue;
            const std::size_t at = static_cast<std::size_t>(r) * W + static_cast<std::size_t>(c);
            // strict > keeps the first maximum in row-major order
            if (!found || src[at] > best)
            {
              best = src[at];
              where = at;
              found = true;
            }
          }
        }
        y[o] = best;
        argmax[o] = plane * H * W + where;
      }
  }
  check_finite(out, "maxpool2d");
  if (out.requires_grad())
    out.node()->backward = [argmax = std::move(argmax)](Node& self) {
      if (double* g = input_grad(self, 0))
        for (std::size_t i = 0; i < argmax.size(); ++i)
          g[argmax[i]] += self.grad[i];
    };
  return out;
}

Tensor global_avgpool(const Tensor& x)
{
  require_rank(x, 4, "global_avgpool", "input");
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor out = make_result({B, C}, "global_avgpool", {x});
  const double* in = x.data().data();
  double* y = out.data().data();
  for (std::size_t p = 0; p < B * C; ++p)
  {
    double s = 0.0;
    for (std::size_t i = 0; i < HW; ++i)
      s += in[p * HW + i];
    y[p] = s / static_cast<double>(HW);
  }
  check_finite(out, "global_avgpool");
  if (out.requires_grad())
    out.node()->backward = [HW](Node& self) {
      if (double* g = input_grad(self, 0))
        for (std::size_t p = 0; p < self.grad.size(); ++p)
        {
          const double share = self.grad[p] / static_cast<double>(HW);
          for (std::size_t i = 0; i < HW; ++i)
            g[p * HW + i] += share;
        }
    };
  return out;
}

Tensor upsample_nearest(const Tensor& x, std::size_t height, std::size_t width)
{
  require_rank(x, 4, "upsample_nearest", "input");
  if (height == 0 || width == 0)
    throw DimensionError("upsample_nearest: target size must be positive");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  std::vector<std::size_t> src(height * width);
  for (std::size_t i = 0; i < height; ++i)
    for (std::size_t j = 0; j < width; ++j)
      src[i * width + j] = (i * H / height) * W + (j * W / width);

  Tensor out = make_result({B, C, height, width}, "upsample_nearest", {x});
  const double* in = x.data().data();
  double* y = out.data().data();
  for (std::size_t p = 0; p < B * C; ++p)
    for (std::size_t i = 0; i < src.size(); ++i)
      y[p * src.size() + i] = in[p * H * W + src[i]];
  if (out.requires_grad())
    out.node()->backward = [src = std::move(src), HW = H * W](Node& self) {
      if (double* g = input_grad(self, 0))
      {
        const std::size_t planes = self.grad.size() / src.size();
        for (std::size_t p = 0; p < planes; ++p)
          for (std::size_t i = 0; i < src.size(); ++i)
            g[p * HW + src[i]] += self.grad[p * src.size() + i];
      }
    };
  return out;
}

} // namespace fsl
