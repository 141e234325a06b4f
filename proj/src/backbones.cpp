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

#include "fsl/backbones.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "fsl/error.hpp"
#include "fsl/ops.hpp"

namespace fsl {

namespace {

constexpr std::size_t kLevels = 3;

std::size_t level_channels(std::size_t width, std::size_t level)
{
  return 8 * width << level;
}

// 28 -> 14 -> 7 -> 3
constexpr std::size_t kFinalSide = ((kImageSize / 2) / 2) / 2;

std::string block_name(std::size_t level)
{
  return "block" + std::to_string(level + 1);
}

} // namespace

std::string to_string(BackboneKind kind)
{
  switch (kind)
  {
  case BackboneKind::unet:
    return "unet";
  case BackboneKind::attention_unet:
    return "attention_unet";
  case BackboneKind::squeeze:
    return "squeeze";
  case BackboneKind::inception:
    return "inception";
  case BackboneKind::r2u:
    return "r2u";
  }
  return "?";
}

BackboneKind parse_backbone_kind(const std::string& name)
{
  for (BackboneKind k : {BackboneKind::unet, BackboneKind::attention_unet, BackboneKind::squeeze,
                         BackboneKind::inception, BackboneKind::r2u})
    if (to_string(k) == name)
      return k;
  throw ConfigError("unknown backbone kind '" + name +
                    "' (expected unet, attention_unet, squeeze, inception or r2u)");
}

void BackboneConfig::validate() const
{
  if (width == 0)
    throw ConfigError("backbone.width must be at least 1");
  if (aa_layers > 3)
    throw ConfigError("backbone.aa_layers must lie in 0..3");
  if (aa_layers > 0 && kind != BackboneKind::unet && kind != BackboneKind::attention_unet)
    throw ConfigError("backbone.aa_layers applies only to unet and attention_unet");
  if (mhsa.heads == 0 || mhsa.key_dim == 0 || mhsa.value_dim == 0)
    throw ConfigError("backbone.mhsa heads, key_dim and value_dim must be at least 1");
  if (!(squeeze_ratio > 0.0 && squeeze_ratio <= 1.0))
    throw ConfigError("backbone.squeeze_ratio must lie in (0,1]");
  if (!(expand_split > 0.0 && expand_split < 1.0))
    throw ConfigError("backbone.expand_split must lie in (0,1)");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0))
    throw ConfigError("backbone.leaky_slope must lie in [0,1)");
  if (kind == BackboneKind::squeeze && bypass == Bypass::complex)
    throw ConfigError("backbone.bypass = complex is not supported");
}

void Backbone::require_images(const Tensor& images)
{
  if (images.rank() != 4 || images.dim(1) != 1 || images.dim(2) != kImageSize ||
      images.dim(3) != kImageSize)
    throw DimensionError("backbone: expected [B,1,28,28] images, got " +
                         to_string(images.shape()));
}

std::unique_ptr<Backbone> make_backbone(const BackboneConfig& config, Rng& rng)
{
  config.validate();
  switch (config.kind)
  {
  case BackboneKind::unet:
    return std::make_unique<UNetEncoder>(config, rng);
  case BackboneKind::attention_unet:
    return std::make_unique<AttentionUNetEncoder>(config, rng);
  case BackboneKind::squeeze:
    return std::make_unique<SqueezeEncoder>(config, rng);
  case BackboneKind::inception:
    return std::make_unique<InceptionEncoder>(config, rng);
  case BackboneKind::r2u:
    return std::make_unique<R2UEncoder>(config, rng);
  }
  throw ConfigError("unknown backbone kind");
}

// ---- encoder convolution --------------------------------------------------

MhsaConfig EncoderConv::fitted(const MhsaConfig& mhsa, std::size_t out_channels)
{
  // Attention takes at most half of the output channels.
  MhsaConfig m = mhsa;
  m.heads = std::max<std::size_t>(1, std::min(m.heads, out_channels / 2));
  m.value_dim = std::max<std::size_t>(1, std::min(m.value_dim, out_channels / (2 * m.heads)));
  return m;
}

EncoderConv::EncoderConv(std::size_t in_channels, std::size_t out_channels, bool augmented,
                         const MhsaConfig& mhsa, Rng& rng)
{
  if (!augmented)
  {
    plain_ = std::make_unique<Conv2d>(in_channels, out_channels, 3, 1, 1, rng);
    return;
  }
  const MhsaConfig m = fitted(mhsa, out_channels);
  const std::size_t attn = m.heads * m.value_dim;
  if (attn >= out_channels)
    throw ConfigError("aa_conv: " + std::to_string(out_channels) +
                      " output channels leave no room for the convolution");
  aa_ = std::make_unique<AAConv2d>(in_channels, out_channels - attn, 3, m, rng);
}

Tensor EncoderConv::forward(const Tensor& x) const
{
  return aa_ ? aa_->forward(x) : plain_->forward(x);
}

Module& EncoderConv::module()
{
  if (aa_)
    return *aa_;
  return *plain_;
}

// ---- U-Net encoder --------------------------------------------------------

namespace {

void build_unet_convs(std::unique_ptr<EncoderConv> (&convs)[3][2],
                      const BackboneConfig& config, Rng& rng,
                      const std::function<void(const std::string&, Module&)>& reg)
{
  std::size_t in = 1, index = 0;
  for (std::size_t l = 0; l < kLevels; ++l)
  {
    const std::size_t c = level_channels(config.width, l);
    for (std::size_t j = 0; j < 2; ++j, ++index)
    {
      convs[l][j] = std::make_unique<EncoderConv>(j == 0 ? in : c, c, index < config.aa_layers,
                                                  config.mhsa, rng);
      reg(block_name(l) + ".conv" + std::to_string(j + 1), convs[l][j]->module());
    }
    in = c;
  }
}

Tensor run_block(const std::unique_ptr<EncoderConv> (&block)[2], const Tensor& x)
{
  return relu(block[1]->forward(relu(block[0]->forward(x))));
}

} // namespace

UNetEncoder::UNetEncoder(const BackboneConfig& config, Rng& rng)
{
  build_unet_convs(convs, config, rng,
                   [this](const std::string& n, Module& m) { register_module(n, m); });
  const std::size_t last = level_channels(config.width, kLevels - 1);
  fc = std::make_unique<Linear>(last * kFinalSide * kFinalSide, kEmbeddingDim, rng);
  register_module("fc", *fc);
}

Tensor UNetEncoder::level_features(const Tensor& x, std::size_t level) const
{
  return run_block(convs[level], x);
}

Tensor UNetEncoder::forward(const Tensor& images)
{
  require_images(images);
  Tensor x = images;
  for (std::size_t l = 0; l < kLevels; ++l)
    x = maxpool2d(level_features(x, l), 2, 2);
  return fc->forward(flatten(x));
}

// ---- attention U-Net encoder ----------------------------------------------

AttentionUNetEncoder::AttentionUNetEncoder(const BackboneConfig& config, Rng& rng)
{
  build_unet_convs(convs, config, rng,
                   [this](const std::string& n, Module& m) { register_module(n, m); });
  for (std::size_t l = 0; l < kLevels; ++l)
  {
    const std::size_t c = level_channels(config.width, l);
    gates[l] = std::make_unique<AttentionGate>(c, c, std::max<std::size_t>(1, c / 2), rng);
    register_module("gate" + std::to_string(l + 1), *gates[l]);
  }
  const std::size_t last = level_channels(config.width, kLevels - 1);
  fc = std::make_unique<Linear>(last * kFinalSide * kFinalSide, kEmbeddingDim, rng);
  register_module("fc", *fc);
}

Tensor AttentionUNetEncoder::run(const Tensor& images, std::vector<Tensor>* coefficients) const
{
  require_images(images);
  Tensor x = images;
  for (std::size_t l = 0; l < kLevels; ++l)
  {
    Tensor e = run_block(convs[l], x);
    Tensor coarse = maxpool2d(e, 2, 2);
    if (coefficients)
      coefficients->push_back(gates[l]->coefficients(coarse, e));
    x = maxpool2d(gates[l]->forward(coarse, e), 2, 2);
  }
  return fc->forward(flatten(x));
}

Tensor AttentionUNetEncoder::forward(const Tensor& images)
{
  return run(images, nullptr);
}

std::vector<Tensor> AttentionUNetEncoder::gate_coefficients(const Tensor& images) const
{
  NoGradGuard guard;
  std::vector<Tensor> out;
  run(images, &out);
  return out;
}

// ---- squeeze encoder ------------------------------------------------------

SqueezeEncoder::SqueezeEncoder(const BackboneConfig& config, Rng& rng)
{
  const std::size_t r = 32 * config.width;
  const auto s = static_cast<std::size_t>(
      std::max(1L, std::lround(config.squeeze_ratio * static_cast<double>(r))));
  stem = std::make_unique<Conv2d>(1, r, 3, 1, 1, rng);
  register_module("stem", *stem);
  for (std::size_t i = 0; i < 3; ++i)
  {
    fires[i] = std::make_unique<FireModule>(r, s, r, config.expand_split, config.bypass, rng);
    register_module("fire" + std::to_string(i + 1), *fires[i]);
  }
  fc = std::make_unique<Linear>(r, kEmbeddingDim, rng);
  register_module("fc", *fc);
}

Tensor SqueezeEncoder::forward(const Tensor& images)
{
  require_images(images);
  Tensor x = relu(stem->forward(images));
  for (const auto& fire : fires)
    x = fire->forward(x);
  return fc->forward(global_avgpool(maxpool2d(x, 2, 2)));
}

// ---- inception encoder ----------------------------------------------------

InceptionEncoder::InceptionEncoder(const BackboneConfig& config, Rng& rng)
    : slope(config.leaky_slope)
{
  const std::size_t w = config.width;
  stem1 = std::make_unique<Conv2d>(1, 16 * w, 3, 2, 1, rng);
  stem2 = std::make_unique<Conv2d>(16 * w, 32 * w, 3, 2, 1, rng);
  mixed = std::make_unique<InceptionModule>(32 * w, 16 * w, 64, rng);
  fc = std::make_unique<Linear>(mixed->out_channels() * 7 * 7, kEmbeddingDim, rng);
  norm = std::make_unique<BatchNorm>(kEmbeddingDim);
  register_module("stem1", *stem1);
  register_module("stem2", *stem2);
  register_module("mixed", *mixed);
  register_module("fc", *fc);
  register_module("norm", *norm);
}

InceptionEncoder::Trace InceptionEncoder::trace(const Tensor& images)
{
  require_images(images);
  Trace t;
  t.stem = relu(stem2->forward(relu(stem1->forward(images))));
  t.mixed = mixed->forward(t.stem);
  t.flat = flatten(t.mixed);
  t.projected = norm->forward(fc->forward(t.flat));
  t.output = leaky_relu(t.projected, slope);
  return t;
}

Tensor InceptionEncoder::forward(const Tensor& images)
{
  return trace(images).output;
}

// ---- R2U encoder ----------------------------------------------------------

R2UEncoder::R2UEncoder(const BackboneConfig& config, Rng& rng)
{
  std::size_t in = 1;
  for (std::size_t l = 0; l < kLevels; ++l)
  {
    const std::size_t c = level_channels(config.width, l);
    proj[l] = std::make_unique<Conv2d>(in, c, 1, 1, 0, rng);
    units[l] = std::make_unique<RecurrentResidualUnit>(c, config.recurrent_steps, rng);
    register_module(block_name(l) + ".proj", *proj[l]);
    register_module(block_name(l) + ".rru", *units[l]);
    in = c;
  }
  fc = std::make_unique<Linear>(in * kFinalSide * kFinalSide, kEmbeddingDim, rng);
  register_module("fc", *fc);
}

Tensor R2UEncoder::forward(const Tensor& images)
{
  require_images(images);
  Tensor x = images;
  for (std::size_t l = 0; l < kLevels; ++l)
    x = maxpool2d(units[l]->forward(proj[l]->forward(x)), 2, 2);
  return fc->forward(flatten(x));
}

} // namespace fsl
