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

// Brute-force reference implementations. They work on plain vectors with
// nested loops and share no code with the library's kernels, so agreement is
// an independent check.

#ifndef FSL_TESTS_ORACLES_HPP
#define FSL_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

inline Vec matmul(const Vec& a, const Vec& b, std::size_t m, std::size_t k, std::size_t n)
{
  Vec c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
    {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p)
        s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  return c;
}

// Six nested loops over batch, out channel, out row, out col, in channel, taps.
inline Vec conv2d(const Vec& x, const Vec& w, const Vec& bias, std::size_t B, std::size_t Cin,
                  std::size_t H, std::size_t W, std::size_t Cout, std::size_t kh, std::size_t kw,
                  std::size_t stride, std::size_t pad, std::size_t& oh, std::size_t& ow)
{
  oh = (H + 2 * pad - kh) / stride + 1;
  ow = (W + 2 * pad - kw) / stride + 1;
  Vec y(B * Cout * oh * ow, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t co = 0; co < Cout; ++co)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j)
        {
          double s = bias.empty() ? 0.0 : bias[co];
          for (std::size_t ci = 0; ci < Cin; ++ci)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v)
              {
                const long r = static_cast<long>(i * stride + u) - static_cast<long>(pad);
                const long c = static_cast<long>(j * stride + v) - static_cast<long>(pad);
                if (r < 0 || c < 0 || r >= static_cast<long>(H) || c >= static_cast<long>(W))
                  continue;
                s += x[((b * Cin + ci) * H + r) * W + c] * w[((co * Cin + ci) * kh + u) * kw + v];
              }
          y[((b * Cout + co) * oh + i) * ow + j] = s;
        }
  return y;
}

inline Vec maxpool2d(const Vec& x, std::size_t planes, std::size_t H, std::size_t W,
                     std::size_t k, std::size_t stride, std::size_t& oh, std::size_t& ow)
{
  oh = (H - k) / stride + 1;
  ow = (W - k) / stride + 1;
  Vec y(planes * oh * ow);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j)
      {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t u = 0; u < k; ++u)
          for (std::size_t v = 0; v < k; ++v)
            best = std::max(best, x[(p * H + i * stride + u) * W + j * stride + v]);
        y[(p * oh + i) * ow + j] = best;
      }
  return y;
}

// Single-image multi-head self-attention over T tokens of width C, written
// token pair by token pair. wq/wk: [C, heads*dk], wv: [C, heads*dv],
// wo: [heads*dv, heads*dv]. Returns [T, heads*dv].
inline Vec mhsa_tokens(const Vec& x, std::size_t T, std::size_t C, const Vec& wq, const Vec& wk,
                       const Vec& wv, const Vec& wo, std::size_t heads, std::size_t dk,
                       std::size_t dv)
{
  const Vec q = matmul(x, wq, T, C, heads * dk);
  const Vec kk = matmul(x, wk, T, C, heads * dk);
  const Vec v = matmul(x, wv, T, C, heads * dv);
  Vec concat(T * heads * dv, 0.0);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < T; ++i)
    {
      Vec logits(T);
      for (std::size_t j = 0; j < T; ++j)
      {
        double s = 0.0;
        for (std::size_t c = 0; c < dk; ++c)
          s += q[i * heads * dk + h * dk + c] * kk[j * heads * dk + h * dk + c];
        logits[j] = s / std::sqrt(static_cast<double>(dk));
      }
      double mx = logits[0];
      for (double l : logits)
        mx = std::max(mx, l);
      double z = 0.0;
      for (double& l : logits)
      {
        l = std::exp(l - mx);
        z += l;
      }
      for (std::size_t j = 0; j < T; ++j)
        for (std::size_t c = 0; c < dv; ++c)
          concat[i * heads * dv + h * dv + c] += logits[j] / z * v[j * heads * dv + h * dv + c];
    }
  return matmul(concat, wo, T, heads * dv, heads * dv);
}

// Recurrent residual unit unrolled step by step on one [C,H,W] image with
// 3x3 same-padded kernels: h0 = relu(f + b), ht = relu(f + r(h_{t-1}) + b),
// result x + h_T.
inline Vec recurrent_residual(const Vec& x, std::size_t C, std::size_t H, std::size_t W,
                              const Vec& wf, const Vec& wr, const Vec& bias, std::size_t steps)
{
  std::size_t oh = 0, ow = 0;
  const Vec none;
  const Vec forward = conv2d(x, wf, none, 1, C, H, W, C, 3, 3, 1, 1, oh, ow);
  Vec h(x.size());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t p = 0; p < H * W; ++p)
      h[c * H * W + p] = std::max(0.0, forward[c * H * W + p] + bias[c]);
  for (std::size_t t = 1; t <= steps; ++t)
  {
    const Vec rec = conv2d(h, wr, none, 1, C, H, W, C, 3, 3, 1, 1, oh, ow);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < H * W; ++p)
      {
        const std::size_t at = c * H * W + p;
        h[at] = std::max(0.0, forward[at] + rec[at] + bias[c]);
      }
  }
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = x[i] + h[i];
  return out;
}

inline double leaky(double v, double slope)
{
  return v > 0.0 ? v : slope * v;
}

// Per-node neighbor sums: out_i = leaky(sum_c f_ic Wid_c + sum_j A_ij sum_c f_jc Wadj_c).
inline Vec graph_conv(const Vec& f, const Vec& A, const Vec& wid, const Vec& wadj, std::size_t V,
                      std::size_t d, std::size_t h, double slope)
{
  Vec out(V * h);
  for (std::size_t i = 0; i < V; ++i)
    for (std::size_t o = 0; o < h; ++o)
    {
      double self = 0.0;
      for (std::size_t c = 0; c < d; ++c)
        self += f[i * d + c] * wid[c * h + o];
      double neighbors = 0.0;
      for (std::size_t j = 0; j < V; ++j)
      {
        double msg = 0.0;
        for (std::size_t c = 0; c < d; ++c)
          msg += f[j * d + c] * wadj[c * h + o];
        neighbors += A[i * V + j] * msg;
      }
      out[i * h + o] = leaky(self + neighbors, slope);
    }
  return out;
}

// psi on one ordered pair, with a dense first layer w1[d,H].
inline double edge_score(const Vec& fi, const Vec& fj, const Vec& w1, const Vec& b1, const Vec& w2,
                         double b2, std::size_t H, double slope)
{
  const std::size_t d = fi.size();
  double s = b2;
  for (std::size_t u = 0; u < H; ++u)
  {
    double z = b1[u];
    for (std::size_t c = 0; c < d; ++c)
      z += std::abs(fi[c] - fj[c]) * w1[c * H + u];
    s += leaky(z, slope) * w2[u];
  }
  return s;
}

inline double max_abs_diff(const Vec& a, const Vec& b)
{
  double m = a.size() == b.size() ? 0.0 : std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

} // namespace oracle

#endif // FSL_TESTS_ORACLES_HPP
