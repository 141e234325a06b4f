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

#include "fsl/layers.hpp"

#include <cmath>

#include "fsl/error.hpp"
#include "fsl/ops.hpp"

namespace fsl {

namespace {

void require_channels(const Tensor& x, std::size_t channels, const char* layer)
{
  if (x.rank() != 4 || x.dim(1) != channels)
    throw DimensionError(std::string(layer) + ": expected [B," + std::to_string(channels) +
                         ",H,W], got " + to_string(x.shape()));
}

} // namespace

// ---- basic layers ---------------------------------------------------------

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
               std::size_t stride, std::size_t padding, Rng& rng, bool with_bias)
    : weight(init::he_normal({out_channels, in_channels, kernel, kernel},
                             in_channels * kernel * kernel, rng)),
      stride(stride), padding(padding)
{
  register_parameter("weight", weight);
  if (with_bias)
  {
    bias = Tensor::zeros({out_channels});
    register_parameter("bias", bias);
  }
}

Tensor Conv2d::forward(const Tensor& x) const
{
  return conv2d(x, weight, bias, stride, padding);
}

Linear::Linear(std::size_t in_features, std::size_t out_features, Rng& rng)
    : weight(init::fan_in_uniform({in_features, out_features}, in_features, rng)),
      bias(Tensor::zeros({out_features}))
{
  register_parameter("weight", weight);
  register_parameter("bias", bias);
}

Tensor Linear::forward(const Tensor& x) const
{
  return linear(x, weight, bias);
}

BatchNorm::BatchNorm(std::size_t features, double eps, double momentum)
    : gamma(Tensor::full({features}, 1.0)), beta(Tensor::zeros({features})),
      running_mean(Tensor::zeros({features})), running_var(Tensor::full({features}, 1.0)),
      eps(eps), momentum(momentum)
{
  register_parameter("gamma", gamma);
  register_parameter("beta", beta);
  register_buffer("running_mean", running_mean);
  register_buffer("running_var", running_var);
}

Tensor BatchNorm::forward(const Tensor& x)
{
  return batchnorm(x, gamma, beta, running_mean, running_var, training(), eps, momentum);
}

// ---- multi-head self-attention --------------------------------------------

MultiHeadSelfAttention2d::MultiHeadSelfAttention2d(std::size_t channels, const MhsaConfig& cfg,
                                                   Rng& rng)
    : config(cfg)
{
  if (cfg.heads == 0 || cfg.key_dim == 0 || cfg.value_dim == 0)
    throw ConfigError("mhsa: heads, key_dim and value_dim must be at least 1");
  const std::size_t hk = cfg.heads * cfg.key_dim, hv = cfg.heads * cfg.value_dim;
  wq = init::fan_in_uniform({channels, hk}, channels, rng);
  wk = init::fan_in_uniform({channels, hk}, channels, rng);
  wv = init::fan_in_uniform({channels, hv}, channels, rng);
  wo = init::fan_in_uniform({hv, hv}, hv, rng);
  register_parameter("wq", wq);
  register_parameter("wk", wk);
  register_parameter("wv", wv);
  register_parameter("wo", wo);
}

Tensor MultiHeadSelfAttention2d::tokens(const Tensor& x) const
{
  require_channels(x, wq.dim(0), "mhsa");
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  return reshape(permute(reshape(x, {B, C, HW}), {0, 2, 1}), {B * HW, C});
}

Tensor MultiHeadSelfAttention2d::project_heads(const Tensor& tokens, const Tensor& w,
                                               std::size_t B, std::size_t HW,
                                               std::size_t width) const
{
  const std::size_t h = config.heads;
  Tensor p = reshape(matmul(tokens, w), {B, HW, h, width});
  return reshape(permute(p, {0, 2, 1, 3}), {B * h, HW, width});
}

Tensor MultiHeadSelfAttention2d::forward(const Tensor& x) const
{
  const Tensor t = tokens(x);
  const std::size_t B = x.dim(0), H = x.dim(2), W = x.dim(3), HW = H * W;
  const std::size_t h = config.heads, dk = config.key_dim, dv = config.value_dim;
  Tensor q = project_heads(t, wq, B, HW, dk);
  Tensor k = project_heads(t, wk, B, HW, dk);
  Tensor v = project_heads(t, wv, B, HW, dv);
  Tensor o = attention(q, k, v, 1.0 / std::sqrt(static_cast<double>(dk)));
  Tensor joined = reshape(permute(reshape(o, {B, h, HW, dv}), {0, 2, 1, 3}), {B * HW, h * dv});
  Tensor mixed = reshape(matmul(joined, wo), {B, HW, h * dv});
  return reshape(permute(mixed, {0, 2, 1}), {B, h * dv, H, W});
}

Tensor MultiHeadSelfAttention2d::attention_weights(const Tensor& x) const
{
  NoGradGuard guard;
  const Tensor t = tokens(x);
  const std::size_t B = x.dim(0), HW = x.dim(2) * x.dim(3), dk = config.key_dim;
  return fsl::attention_weights(project_heads(t, wq, B, HW, dk), project_heads(t, wk, B, HW, dk),
                                1.0 / std::sqrt(static_cast<double>(dk)));
}

AAConv2d::AAConv2d(std::size_t in_channels, std::size_t conv_channels, std::size_t kernel,
                   const MhsaConfig& attn_config, Rng& rng)
    : conv(in_channels, conv_channels, kernel, 1, kernel / 2, rng),
      attn(in_channels, attn_config, rng)
{
  if (kernel % 2 == 0)
    throw ConfigError("aa_conv: kernel must be odd to preserve the spatial shape");
  register_module("conv", conv);
  register_module("attn", attn);
}

Tensor AAConv2d::forward(const Tensor& x) const
{
  return concat({conv.forward(x), attn.forward(x)}, 1);
}

// ---- recurrent residual unit ----------------------------------------------

RecurrentResidualUnit::RecurrentResidualUnit(std::size_t channels, std::size_t steps, Rng& rng)
    : wf(init::he_normal({channels, channels, 3, 3}, channels * 9, rng)),
      wr(init::he_normal({channels, channels, 3, 3}, channels * 9, rng)),
      bias(Tensor::zeros({channels})), steps(steps)
{
  register_parameter("wf", wf);
  register_parameter("wr", wr);
  register_parameter("bias", bias);
}

Tensor RecurrentResidualUnit::forward(const Tensor& x) const
{
  require_channels(x, wf.dim(0), "recurrent_residual_unit");
  const Tensor forward_term = conv2d(x, wf, bias, 1, 1);
  Tensor h = relu(forward_term);
  for (std::size_t t = 1; t <= steps; ++t)
    h = relu(add(forward_term, conv2d(h, wr, Tensor(), 1, 1)));
  return add(x, h);
}

// ---- attention gate -------------------------------------------------------

AttentionGate::AttentionGate(std::size_t gate_channels, std::size_t skip_channels,
                             std::size_t inter_channels, Rng& rng)
    : conv_g(gate_channels, inter_channels, 1, 1, 0, rng),
      conv_x(skip_channels, inter_channels, 1, 1, 0, rng, false),
      conv_psi(inter_channels, 1, 1, 1, 0, rng)
{
  register_module("conv_g", conv_g);
  register_module("conv_x", conv_x);
  register_module("conv_psi", conv_psi);
}

Tensor AttentionGate::coefficients(const Tensor& g, const Tensor& x) const
{
  require_channels(g, conv_g.in_channels(), "attention_gate (gate)");
  require_channels(x, conv_x.in_channels(), "attention_gate (skip)");
  if (g.dim(0) != x.dim(0) || g.dim(2) > x.dim(2) || g.dim(3) > x.dim(3))
    throw DimensionError("attention_gate: gate " + to_string(g.shape()) +
                         " cannot be aligned with " + to_string(x.shape()));
  Tensor gp = conv_g.forward(g);
  if (g.dim(2) != x.dim(2) || g.dim(3) != x.dim(3))
    gp = upsample_nearest(gp, x.dim(2), x.dim(3));
  return sigmoid(conv_psi.forward(relu(add(gp, conv_x.forward(x)))));
}

Tensor AttentionGate::forward(const Tensor& g, const Tensor& x) const
{
  return mul(x, broadcast_to(coefficients(g, x), x.shape()));
}

// ---- fire module ----------------------------------------------------------

Bypass parse_bypass(const std::string& name)
{
  if (name == "none")
    return Bypass::none;
  if (name == "simple")
    return Bypass::simple;
  if (name == "complex")
    return Bypass::complex;
  throw ConfigError("unknown bypass '" + name + "' (expected none, simple or complex)");
}

std::string to_string(Bypass bypass)
{
  switch (bypass)
  {
  case Bypass::none:
    return "none";
  case Bypass::simple:
    return "simple";
  case Bypass::complex:
    return "complex";
  }
  return "?";
}

namespace {

std::size_t expand1_width(std::size_t expand, double split)
{
  if (expand < 2)
    throw ConfigError("fire: expand width must be at least 2");
  if (!(split > 0.0 && split < 1.0))
    throw ConfigError("fire: split must lie strictly between 0 and 1");
  const auto e1 = static_cast<std::size_t>(std::lround(split * static_cast<double>(expand)));
  if (e1 == 0 || e1 >= expand)
    throw ConfigError("fire: split " + std::to_string(split) + " leaves an empty expand branch");
  return e1;
}

std::size_t checked_squeeze(std::size_t squeeze)
{
  if (squeeze == 0)
    throw ConfigError("fire: squeeze width must be at least 1");
  return squeeze;
}

} // namespace

FireModule::FireModule(std::size_t in_channels, std::size_t squeeze_width, std::size_t expand,
                       double split, Bypass bypass_kind, Rng& rng)
    : squeeze(in_channels, checked_squeeze(squeeze_width), 1, 1, 0, rng),
      expand1(squeeze_width, expand1_width(expand, split), 1, 1, 0, rng),
      expand3(squeeze_width, expand - expand1_width(expand, split), 3, 1, 1, rng),
      bypass(bypass_kind)
{
  if (bypass == Bypass::complex)
    throw ConfigError("fire: complex bypass is not supported");
  if (bypass == Bypass::simple && in_channels != expand)
    throw ConfigError("fire: simple bypass needs input channels (" + std::to_string(in_channels) +
                      ") equal to expand width (" + std::to_string(expand) + ")");
  register_module("squeeze", squeeze);
  register_module("expand1x1", expand1);
  register_module("expand3x3", expand3);
}

Tensor FireModule::forward(const Tensor& x) const
{
  require_channels(x, squeeze.in_channels(), "fire");
  Tensor s = relu(squeeze.forward(x));
  Tensor out = relu(concat({expand1.forward(s), expand3.forward(s)}, 1));
  if (bypass == Bypass::simple)
    out = add(out, x);
  return out;
}

// ---- inception module -----------------------------------------------------

InceptionModule::InceptionModule(std::size_t in_channels, std::size_t reduce, std::size_t branch,
                                 Rng& rng)
    : a(in_channels, branch, 1, 1, 0, rng),
      b_reduce(in_channels, reduce, 1, 1, 0, rng), b_conv(reduce, branch, 3, 1, 1, rng),
      c_reduce(in_channels, reduce, 1, 1, 0, rng), c_conv1(reduce, branch, 3, 1, 1, rng),
      c_conv2(branch, branch, 3, 1, 1, rng), d_proj(in_channels, branch, 1, 1, 0, rng)
{
  register_module("branch_a", a);
  register_module("branch_b.reduce", b_reduce);
  register_module("branch_b.conv", b_conv);
  register_module("branch_c.reduce", c_reduce);
  register_module("branch_c.conv1", c_conv1);
  register_module("branch_c.conv2", c_conv2);
  register_module("branch_d.proj", d_proj);
}

Tensor InceptionModule::forward(const Tensor& x) const
{
  require_channels(x, a.in_channels(), "inception");
  if (x.dim(2) != 7 || x.dim(3) != 7)
    throw DimensionError("inception: expected a 7x7 map, got " + to_string(x.shape()));
  Tensor ya = relu(a.forward(x));
  Tensor yb = relu(b_conv.forward(relu(b_reduce.forward(x))));
  Tensor yc = relu(c_conv2.forward(relu(c_conv1.forward(relu(c_reduce.forward(x))))));
  Tensor yd = relu(d_proj.forward(maxpool2d(x, 3, 1, 1)));
  return concat({ya, yb, yc, yd}, 1);
}

} // namespace fsl
