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
#include <map>
#include <vector>

#include "doctest.h"
#include "fsl/backbones.hpp"
#include "fsl/error.hpp"
#include "fsl/gradcheck.hpp"
#include "fsl/ops.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace fsl;
using testing::values;

namespace {

const BackboneKind kAllKinds[] = {BackboneKind::unet, BackboneKind::attention_unet,
                                  BackboneKind::squeeze, BackboneKind::inception,
                                  BackboneKind::r2u};

Tensor images(std::size_t batch, Rng& rng)
{
  return Tensor::uniform({batch, 1, 28, 28}, rng, 0.0, 1.0);
}

std::size_t conv_params(std::size_t cin, std::size_t cout, std::size_t k)
{
  return cout * cin * k * k + cout;
}

void copy_shared_parameters(const Module& from, Module& to)
{
  std::map<std::string, Tensor> source;
  for (const Parameter& p : from.parameters())
    source.emplace(p.name, p.tensor);
  for (Parameter& p : to.parameters())
  {
    auto it = source.find(p.name);
    if (it == source.end())
      continue;
    REQUIRE(it->second.shape() == p.tensor.shape());
    std::copy(it->second.data().begin(), it->second.data().end(), p.tensor.data().begin());
  }
}

} // namespace

TEST_CASE("every backbone emits finite [B,64] embeddings")
{
  Rng rng(1);
  for (BackboneKind kind : kAllKinds)
    for (std::size_t width : {1u, 2u})
    {
      BackboneConfig cfg;
      cfg.kind = kind;
      cfg.width = width;
      auto net = make_backbone(cfg, rng);
      net->eval();
      for (std::size_t batch : {1u, 7u, 10u})
      {
        CAPTURE(to_string(kind));
        CAPTURE(width);
        CAPTURE(batch);
        Tensor y = net->forward(images(batch, rng));
        CHECK(y.shape() == Shape{batch, 64});
        for (double v : y.data())
          CHECK(std::isfinite(v));
      }
    }
}

TEST_CASE("backbones reject other input shapes")
{
  Rng rng(2);
  for (BackboneKind kind : kAllKinds)
  {
    BackboneConfig cfg;
    cfg.kind = kind;
    auto net = make_backbone(cfg, rng);
    CHECK_THROWS_AS(net->forward(Tensor::zeros({2, 1, 32, 32})), DimensionError);
    CHECK_THROWS_AS(net->forward(Tensor::zeros({2, 3, 28, 28})), DimensionError);
  }
}

TEST_CASE("unet parameter count matches the hand sum")
{
  Rng rng(3);
  for (std::size_t w : {1u, 2u})
  {
    BackboneConfig cfg;
    cfg.width = w;
    auto net = make_backbone(cfg, rng);
    const std::size_t c1 = 8 * w, c2 = 16 * w, c3 = 32 * w;
    const std::size_t expect = conv_params(1, c1, 3) + conv_params(c1, c1, 3) +
                               conv_params(c1, c2, 3) + conv_params(c2, c2, 3) +
                               conv_params(c2, c3, 3) + conv_params(c3, c3, 3) +
                               (c3 * 9 * 64 + 64);
    CHECK(net->parameter_count() == expect);
  }
  BackboneConfig cfg;
  CHECK(make_backbone(cfg, rng)->parameter_count() == 36536);
}

TEST_CASE("aa_conv substitution only renames the first layer")
{
  Rng rng(4);
  BackboneConfig plain_cfg;
  BackboneConfig aa_cfg;
  aa_cfg.aa_layers = 1;
  auto plain = make_backbone(plain_cfg, rng);
  auto aa = make_backbone(aa_cfg, rng);
  std::vector<std::string> plain_names, aa_names;
  for (const Parameter& p : plain->parameters())
    if (p.name.rfind("block1.conv1.", 0) != 0)
      plain_names.push_back(p.name);
  for (const Parameter& p : aa->parameters())
    if (p.name.rfind("block1.conv1.", 0) != 0)
      aa_names.push_back(p.name);
  CHECK(plain_names == aa_names);
  bool saw_attention = false;
  for (const Parameter& p : aa->parameters())
    saw_attention |= p.name == "block1.conv1.attn.wq";
  CHECK(saw_attention);

  Tensor x = images(2, rng);
  CHECK(aa->forward(x).shape() == Shape{2, 64});
  auto* unet = dynamic_cast<UNetEncoder*>(aa.get());
  REQUIRE(unet != nullptr);
  CHECK(unet->convs[0][0]->augmented());
  CHECK_FALSE(unet->convs[0][1]->augmented());
  CHECK(unet->level_features(x, 0).shape() == Shape{2, 8, 28, 28});

  aa_cfg.aa_layers = 3;
  auto deep = make_backbone(aa_cfg, rng);
  CHECK(deep->forward(x).shape() == Shape{2, 64});
  aa_cfg.aa_layers = 4;
  CHECK_THROWS_AS(make_backbone(aa_cfg, rng), ConfigError);
}

TEST_CASE("saturated gates reduce the attention unet to the plain unet")
{
  Rng rng(5);
  BackboneConfig cfg;
  cfg.kind = BackboneKind::attention_unet;
  auto gated = make_backbone(cfg, rng);
  cfg.kind = BackboneKind::unet;
  auto plain = make_backbone(cfg, rng);
  copy_shared_parameters(*gated, *plain);
  auto* att = dynamic_cast<AttentionUNetEncoder*>(gated.get());
  REQUIRE(att != nullptr);
  for (auto& gate : att->gates)
    for (double& b : gate->conv_psi.bias.data())
      b = 50.0;
  Tensor x = images(3, rng);
  CHECK(oracle::max_abs_diff(values(gated->forward(x)), values(plain->forward(x))) < 1e-4);
}

TEST_CASE("attention unet gate coefficients lie in (0,1)")
{
  Rng rng(6);
  BackboneConfig cfg;
  cfg.kind = BackboneKind::attention_unet;
  auto net = make_backbone(cfg, rng);
  auto* att = dynamic_cast<AttentionUNetEncoder*>(net.get());
  const auto coeffs = att->gate_coefficients(images(2, rng));
  REQUIRE(coeffs.size() == 3);
  CHECK(coeffs[0].shape() == Shape{2, 1, 28, 28});
  CHECK(coeffs[2].shape() == Shape{2, 1, 7, 7});
  for (const Tensor& c : coeffs)
    for (double v : c.data())
    {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
}

TEST_CASE("fast squeeze ratio has fewer parameters than the accurate one")
{
  Rng rng(7);
  BackboneConfig fast;
  fast.kind = BackboneKind::squeeze;
  fast.squeeze_ratio = 0.125;
  BackboneConfig accurate = fast;
  accurate.squeeze_ratio = 0.75;
  CHECK(make_backbone(fast, rng)->parameter_count() <
        make_backbone(accurate, rng)->parameter_count());
  fast.bypass = Bypass::complex;
  CHECK_THROWS_AS(make_backbone(fast, rng), ConfigError);
}

TEST_CASE("inception shape chain at batch ten")
{
  Rng rng(8);
  BackboneConfig cfg;
  cfg.kind = BackboneKind::inception;
  InceptionEncoder net(cfg, rng);
  auto t = net.trace(images(10, rng));
  CHECK(t.mixed.shape() == Shape{10, 256, 7, 7});
  CHECK(t.flat.shape() == Shape{10, 12544});
  CHECK(t.output.shape() == Shape{10, 64});
}

TEST_CASE("inception eval mode is deterministic and the leaky slope is applied")
{
  Rng rng(9);
  BackboneConfig cfg;
  cfg.kind = BackboneKind::inception;
  InceptionEncoder net(cfg, rng);
  net.eval();
  Tensor x = images(4, rng);
  CHECK(values(net.forward(x)) == values(net.forward(x)));

  net.norm->gamma.at({5}) = 0.0;
  net.norm->beta.at({5}) = -1.0;
  Tensor y = net.forward(x);
  for (std::size_t b = 0; b < 4; ++b)
    CHECK(y.at({b, 5}) == -cfg.leaky_slope);
}

TEST_CASE("r2u with zero recurrence equals a residual plain-conv encoder")
{
  Rng rng(10);
  BackboneConfig cfg;
  cfg.kind = BackboneKind::r2u;
  cfg.recurrent_steps = 0;
  R2UEncoder net(cfg, rng);
  for (auto& unit : net.units)
    for (double& b : unit->bias.data())
      b = rng.uniform(-0.2, 0.2);
  Tensor x = images(3, rng);
  Tensor h = x;
  for (std::size_t l = 0; l < 3; ++l)
  {
    Tensor p = conv2d(h, net.proj[l]->weight, net.proj[l]->bias, 1, 0);
    Tensor r = add(p, relu(conv2d(p, net.units[l]->wf, net.units[l]->bias, 1, 1)));
    h = maxpool2d(r, 2, 2);
  }
  Tensor expect = linear(flatten(h), net.fc->weight, net.fc->bias);
  CHECK(values(net.forward(x)) == values(expect));
}

TEST_CASE("r2u training step at width one stays within 256 MiB")
{
  Rng rng(11);
  BackboneConfig cfg;
  cfg.kind = BackboneKind::r2u;
  auto net = make_backbone(cfg, rng);
  Tensor x = images(10, rng);
  memory::reset_peak();
  const std::size_t base = memory::live_bytes();
  Tensor loss = sum(net->forward(x));
  loss.backward();
  const std::size_t peak = memory::peak_bytes() - base;
  MESSAGE("r2u peak bytes: " << peak);
  CHECK(peak < 256u * 1024u * 1024u);
}

TEST_CASE("eval-mode embeddings are batch independent")
{
  Rng rng(12);
  for (BackboneKind kind : kAllKinds)
  {
    CAPTURE(to_string(kind));
    BackboneConfig cfg;
    cfg.kind = kind;
    auto net = make_backbone(cfg, rng);
    net->eval();
    Tensor a = images(4, rng);
    Tensor b = images(4, rng);
    // Same first image, different companions.
    std::copy(a.data().begin(), a.data().begin() + 784, b.data().begin());
    Tensor ya = narrow(net->forward(a), 0, 0, 1);
    Tensor yb = narrow(net->forward(b), 0, 0, 1);
    CHECK(oracle::max_abs_diff(values(ya), values(yb)) < 1e-9);
  }
}

TEST_CASE("whole-backbone gradients match finite differences")
{
  Rng rng(13);
  for (BackboneKind kind : kAllKinds)
  {
    CAPTURE(to_string(kind));
    BackboneConfig cfg;
    cfg.kind = kind;
    auto net = make_backbone(cfg, rng);
    std::vector<Tensor> inputs{images(2, rng)};
    for (const Parameter& p : net->parameters())
      inputs.push_back(p.tensor);
    Rng proj_rng(99);
    Tensor dir = Tensor::uniform({2, 64}, proj_rng, -1.0, 1.0);
    GradCheckOptions opts;
    opts.eps = 1e-6;
    opts.max_elements_per_input = 4;
    opts.abs_floor = 1e-4;
    auto r = grad_check(
        [&](const std::vector<Tensor>& in) { return sum(mul(net->forward(in[0]), dir)); }, inputs,
        opts);
    INFO(r.describe());
    CHECK(r.max_rel_error < 1e-3);
  }
}
