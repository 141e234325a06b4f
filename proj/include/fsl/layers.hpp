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

#ifndef FSL_LAYERS_HPP
#define FSL_LAYERS_HPP

#include <cstddef>
#include <string>

#include "fsl/module.hpp"
#include "fsl/random.hpp"
#include "fsl/tensor.hpp"

namespace fsl {

// ---- basic layers ---------------------------------------------------------

class Conv2d : public Module
{
public:
  // He-normal weights, zero bias.
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
         std::size_t padding, Rng& rng, bool with_bias = true);

  Tensor forward(const Tensor& x) const;

  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }

  Tensor weight; // [Cout, Cin, k, k]
  Tensor bias;   // [Cout] or undefined
  std::size_t stride, padding;
};

class Linear : public Module
{
public:
  // Uniform +-sqrt(1/din) weights, zero bias.
  Linear(std::size_t in_features, std::size_t out_features, Rng& rng);

  Tensor forward(const Tensor& x) const;

  Tensor weight; // [din, dout]
  Tensor bias;   // [dout]
};

class BatchNorm : public Module
{
public:
  explicit BatchNorm(std::size_t features, double eps = 1e-5, double momentum = 0.1);

  // Batch statistics in training mode, running statistics otherwise.
  Tensor forward(const Tensor& x);

  Tensor gamma, beta;
  Tensor running_mean, running_var;
  double eps, momentum;
};

// ---- multi-head self-attention over feature maps --------------------------

struct MhsaConfig
{
  std::size_t heads = 2;
  std::size_t key_dim = 8;   // per head
  std::size_t value_dim = 8; // per head
};

// Every spatial position is a token. Q = XWq, K = XWk, V = XWv per head,
// O_h = softmax(Q_h K_h^T / sqrt(dk)) V_h, heads concatenated and mapped by
// Wo. No biases and no positional term.
class MultiHeadSelfAttention2d : public Module
{
public:
  MultiHeadSelfAttention2d(std::size_t channels, const MhsaConfig& config, Rng& rng);

  // [B,C,H,W] -> [B, heads*dv, H, W]
  Tensor forward(const Tensor& x) const;

  // [B*heads, HW, HW] row-stochastic attention matrices (no gradient).
  Tensor attention_weights(const Tensor& x) const;

  std::size_t out_channels() const { return config.heads * config.value_dim; }

  MhsaConfig config;
  Tensor wq, wk; // [C, heads*dk]
  Tensor wv;     // [C, heads*dv]
  Tensor wo;     // [heads*dv, heads*dv]

private:
  // [B,C,H,W] -> [B*heads, HW, width] projection through w.
  Tensor project_heads(const Tensor& tokens, const Tensor& w, std::size_t B, std::size_t HW,
                       std::size_t width) const;
  Tensor tokens(const Tensor& x) const;
};

// Concat[Conv(X), MHA(X)] along channels. The convolution is a same-padded
// stride-1 k x k map.
class AAConv2d : public Module
{
public:
  AAConv2d(std::size_t in_channels, std::size_t conv_channels, std::size_t kernel,
           const MhsaConfig& attn, Rng& rng);

  Tensor forward(const Tensor& x) const;

  std::size_t out_channels() const { return conv.out_channels() + attn.out_channels(); }

  Conv2d conv;
  MultiHeadSelfAttention2d attn;
};

// ---- recurrent residual unit ----------------------------------------------

// h0 = relu(wf*x + b), ht = relu(wf*x + wr*h(t-1) + b) for t = 1..T,
// output x + hT. 3x3 same-padded, channel preserving.
class RecurrentResidualUnit : public Module
{
public:
  RecurrentResidualUnit(std::size_t channels, std::size_t steps, Rng& rng);

  Tensor forward(const Tensor& x) const;

  Tensor wf, wr; // [C, C, 3, 3]
  Tensor bias;   // [C]
  std::size_t steps;
};

// ---- attention gate -------------------------------------------------------

// alpha = sigmoid(psi(relu(Wg g + Wx x))), output x * alpha. A coarser g is
// brought onto x's grid by nearest-neighbour resampling.
class AttentionGate : public Module
{
public:
  AttentionGate(std::size_t gate_channels, std::size_t skip_channels,
                std::size_t inter_channels, Rng& rng);

  Tensor forward(const Tensor& g, const Tensor& x) const;
  // [B,1,H,W] coefficients in (0,1).
  Tensor coefficients(const Tensor& g, const Tensor& x) const;

  Conv2d conv_g, conv_x, conv_psi;
};

// ---- fire module ----------------------------------------------------------

enum class Bypass
{
  none,
  simple,
  // Projection bypass; recognised in configs but not supported.
  complex
};

Bypass parse_bypass(const std::string& name);
std::string to_string(Bypass bypass);

// squeeze = relu(1x1 -> s), out = relu(concat(1x1 -> e1, 3x3 -> r - e1))
// with e1 = round(split * r); a simple bypass adds the input.
class FireModule : public Module
{
public:
  FireModule(std::size_t in_channels, std::size_t squeeze, std::size_t expand, double split,
             Bypass bypass, Rng& rng);

  Tensor forward(const Tensor& x) const;

  std::size_t out_channels() const { return expand1.out_channels() + expand3.out_channels(); }

  Conv2d squeeze, expand1, expand3;
  Bypass bypass;
};

// ---- inception module -----------------------------------------------------

// Four branches on a 7x7 map, each `branch` channels wide:
// (a) 1x1; (b) 1x1 -> 3x3; (c) 1x1 -> 3x3 -> 3x3; (d) maxpool 3/1/1 -> 1x1.
// ReLU after every convolution.
class InceptionModule : public Module
{
public:
  InceptionModule(std::size_t in_channels, std::size_t reduce, std::size_t branch, Rng& rng);

  Tensor forward(const Tensor& x) const;

  std::size_t out_channels() const { return 4 * a.out_channels(); }

  Conv2d a;
  Conv2d b_reduce, b_conv;
  Conv2d c_reduce, c_conv1, c_conv2;
  Conv2d d_proj;
};

} // namespace fsl

#endif // FSL_LAYERS_HPP
