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

#ifndef FSL_BACKBONES_HPP
#define FSL_BACKBONES_HPP

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "fsl/layers.hpp"
#include "fsl/module.hpp"

namespace fsl {

constexpr std::size_t kEmbeddingDim = 64;
constexpr std::size_t kImageSize = 28;

enum class BackboneKind
{
  unet,
  attention_unet,
  squeeze,
  inception,
  r2u
};

std::string to_string(BackboneKind kind);
BackboneKind parse_backbone_kind(const std::string& name);

struct BackboneConfig
{
  BackboneKind kind = BackboneKind::unet;
  // Scales every channel count.
  std::size_t width = 1;

  // unet / attention_unet: number of leading 3x3 convs replaced by aa_conv.
  std::size_t aa_layers = 0;
  MhsaConfig mhsa;

  // squeeze
  double squeeze_ratio = 0.75; // s / r
  double expand_split = 0.5;   // fraction of expand filters that are 1x1
  Bypass bypass = Bypass::simple;

  // r2u
  std::size_t recurrent_steps = 2;

  // inception head
  double leaky_slope = 0.01;

  // Throws ConfigError on out-of-range values.
  void validate() const;
};

// Maps [B,1,28,28] images to [B,64] embeddings.
class Backbone : public Module
{
public:
  virtual Tensor forward(const Tensor& images) = 0;
  virtual BackboneKind kind() const = 0;

protected:
  static void require_images(const Tensor& images);
};

std::unique_ptr<Backbone> make_backbone(const BackboneConfig& config, Rng& rng);

// ---- concrete networks ----------------------------------------------------

// A 3x3 same-padded convolution that may be an attention-augmented one.
class EncoderConv
{
public:
  EncoderConv(std::size_t in_channels, std::size_t out_channels, bool augmented,
              const MhsaConfig& mhsa, Rng& rng);

  Tensor forward(const Tensor& x) const;
  Module& module();
  bool augmented() const { return static_cast<bool>(aa_); }

  // Attention settings actually used so the output keeps out_channels.
  static MhsaConfig fitted(const MhsaConfig& mhsa, std::size_t out_channels);

private:
  std::unique_ptr<Conv2d> plain_;
  std::unique_ptr<AAConv2d> aa_;
};

// Three levels of (conv3x3 + ReLU) x2 then maxpool 2: 28 -> 14 -> 7 -> 3,
// channels 8w, 16w, 32w; flatten; linear to 64.
class UNetEncoder : public Backbone
{
public:
  UNetEncoder(const BackboneConfig& config, Rng& rng);

  Tensor forward(const Tensor& images) override;
  BackboneKind kind() const override { return BackboneKind::unet; }

  // Output of level `level` (0-based) before pooling.
  Tensor level_features(const Tensor& x, std::size_t level) const;

  std::unique_ptr<EncoderConv> convs[3][2];
  std::unique_ptr<Linear> fc;
};

// The same encoder where each level's map is gated, before pooling, by its
// own max-pooled (one level coarser) version.
class AttentionUNetEncoder : public Backbone
{
public:
  AttentionUNetEncoder(const BackboneConfig& config, Rng& rng);

  Tensor forward(const Tensor& images) override;
  BackboneKind kind() const override { return BackboneKind::attention_unet; }

  // [B,1,H,W] gate coefficients of every level for these images.
  std::vector<Tensor> gate_coefficients(const Tensor& images) const;

  std::unique_ptr<EncoderConv> convs[3][2];
  std::unique_ptr<AttentionGate> gates[3];
  std::unique_ptr<Linear> fc;

private:
  Tensor run(const Tensor& images, std::vector<Tensor>* coefficients) const;
};

// Stem 3x3 -> r = 32w channels, three fire modules, one late maxpool,
// global average pool, linear to 64.
class SqueezeEncoder : public Backbone
{
public:
  SqueezeEncoder(const BackboneConfig& config, Rng& rng);

  Tensor forward(const Tensor& images) override;
  BackboneKind kind() const override { return BackboneKind::squeeze; }

  std::unique_ptr<Conv2d> stem;
  std::unique_ptr<FireModule> fires[3];
  std::unique_ptr<Linear> fc;
};

// Stem of two stride-2 3x3 convs (28 -> 14 -> 7), inception module to
// 256x7x7, flatten to 12544, linear to 64, batchnorm, leaky ReLU.
class InceptionEncoder : public Backbone
{
public:
  InceptionEncoder(const BackboneConfig& config, Rng& rng);

  Tensor forward(const Tensor& images) override;
  BackboneKind kind() const override { return BackboneKind::inception; }

  struct Trace
  {
    Tensor stem, mixed, flat, projected, output;
  };
  Trace trace(const Tensor& images);

  std::unique_ptr<Conv2d> stem1, stem2;
  std::unique_ptr<InceptionModule> mixed;
  std::unique_ptr<Linear> fc;
  std::unique_ptr<BatchNorm> norm;
  double slope;
};

// Three levels of (1x1 projection, recurrent residual unit, maxpool 2),
// channels 8w, 16w, 32w; flatten; linear to 64.
class R2UEncoder : public Backbone
{
public:
  R2UEncoder(const BackboneConfig& config, Rng& rng);

  Tensor forward(const Tensor& images) override;
  BackboneKind kind() const override { return BackboneKind::r2u; }

  std::unique_ptr<Conv2d> proj[3];
  std::unique_ptr<RecurrentResidualUnit> units[3];
  std::unique_ptr<Linear> fc;
};

} // namespace fsl

#endif // FSL_BACKBONES_HPP
