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

#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "fsl/error.hpp"
#include "fsl/gradcheck.hpp"
#include "fsl/layers.hpp"
#include "fsl/ops.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace fsl;
using testing::values;

namespace {

Tensor project(const Tensor& y, std::uint64_t seed)
{
  Rng rng(seed);
  return sum(mul(y, Tensor::uniform(y.shape(), rng, -1.0, 1.0)));
}

// Gradient check of a module w.r.t. its input and all of its parameters.
GradCheckResult check_module(const Module& m, const Tensor& x,
                             const std::function<Tensor(const Tensor&)>& forward)
{
  std::vector<Tensor> inputs{x};
  for (const Parameter& p : m.parameters())
    inputs.push_back(p.tensor);
  return grad_check([&](const std::vector<Tensor>& in) { return project(forward(in[0]), 5); },
                    inputs);
}

void fill(Tensor& t, double v)
{
  for (double& x : t.data())
    x = v;
}

} // namespace

TEST_CASE("single-token attention has weight exactly one")
{
  Rng rng(1);
  MultiHeadSelfAttention2d mhsa(3, {2, 4, 5}, rng);
  Tensor x = testing::random({2, 3, 1, 1}, rng);
  Tensor w = mhsa.attention_weights(x);
  CHECK(w.shape() == Shape{4, 1, 1});
  for (double v : w.data())
    CHECK(v == 1.0);
  // Output equals x Wv Wo.
  Tensor y = mhsa.forward(x);
  CHECK(y.shape() == Shape{2, 10, 1, 1});
  const auto expect = oracle::matmul(oracle::matmul(values(reshape(x, {2, 3})), values(mhsa.wv), 2, 3, 10),
                                     values(mhsa.wo), 2, 10, 10);
  CHECK(oracle::max_abs_diff(values(y), expect) < 1e-14);
}

TEST_CASE("attention matrices are row-stochastic")
{
  Rng rng(2);
  MultiHeadSelfAttention2d mhsa(4, {}, rng);
  Tensor x = testing::random({3, 4, 5, 6}, rng, 3.0);
  Tensor w = mhsa.attention_weights(x);
  CHECK(w.shape() == Shape{6, 30, 30});
  const Tensor rows = sum_axis(w, 2);
  for (double r : rows.data())
    CHECK(std::abs(r - 1.0) < 1e-12);
}

TEST_CASE("mhsa_2d agrees with the token-pair oracle")
{
  Rng rng(3);
  SUBCASE("hand-sized single head with identity-like projections")
  {
    MultiHeadSelfAttention2d mhsa(2, {1, 2, 2}, rng);
    fill(mhsa.wq, 0.0);
    fill(mhsa.wk, 0.0);
    fill(mhsa.wv, 0.0);
    fill(mhsa.wo, 0.0);
    mhsa.wq.at({0, 0}) = mhsa.wq.at({1, 1}) = 1.0;
    mhsa.wk.at({0, 0}) = mhsa.wk.at({1, 1}) = 1.0;
    mhsa.wv.at({0, 0}) = mhsa.wv.at({1, 1}) = 1.0;
    mhsa.wo.at({0, 0}) = mhsa.wo.at({1, 1}) = 1.0;
    Tensor x = Tensor::from({1, 2, 2, 2}, {1, 0, 2, -1, 0.5, 1, -1, 3});
    Tensor tok = reshape(permute(reshape(x, {1, 2, 4}), {0, 2, 1}), {4, 2});
    const auto expect = oracle::mhsa_tokens(values(tok), 4, 2, values(mhsa.wq), values(mhsa.wk),
                                            values(mhsa.wv), values(mhsa.wo), 1, 2, 2);
    Tensor y = mhsa.forward(x);
    Tensor ytok = reshape(permute(reshape(y, {1, 2, 4}), {0, 2, 1}), {4, 2});
    CHECK(oracle::max_abs_diff(values(ytok), expect) < 1e-14);
  }
  SUBCASE("random multi-head")
  {
    MultiHeadSelfAttention2d mhsa(3, {3, 2, 4}, rng);
    Tensor x = testing::random({2, 3, 3, 4}, rng);
    Tensor y = mhsa.forward(x);
    for (std::size_t b = 0; b < 2; ++b)
    {
      Tensor xb = narrow(x, 0, b, 1);
      Tensor tok = reshape(permute(reshape(xb, {1, 3, 12}), {0, 2, 1}), {12, 3});
      const auto expect = oracle::mhsa_tokens(values(tok), 12, 3, values(mhsa.wq), values(mhsa.wk),
                                              values(mhsa.wv), values(mhsa.wo), 3, 2, 4);
      Tensor yb = narrow(y, 0, b, 1);
      Tensor ytok = reshape(permute(reshape(yb, {1, 12, 12}), {0, 2, 1}), {12, 12});
      CHECK(oracle::max_abs_diff(values(ytok), expect) < 1e-12);
    }
  }
}

TEST_CASE("mhsa_2d rejects a channel mismatch")
{
  Rng rng(4);
  MultiHeadSelfAttention2d mhsa(3, {}, rng);
  CHECK_THROWS_AS(mhsa.forward(Tensor::zeros({1, 4, 2, 2})), DimensionError);
  CHECK_THROWS_AS(MultiHeadSelfAttention2d(3, {0, 8, 8}, rng), ConfigError);
}

TEST_CASE("aa_conv channel additivity and branch isolation")
{
  Rng rng(5);
  for (auto [cin, cconv, heads, dv] : std::vector<std::array<std::size_t, 4>>{
           {1, 4, 2, 2}, {3, 5, 1, 3}, {2, 1, 3, 1}})
  {
    AAConv2d aa(cin, cconv, 3, {heads, 2, dv}, rng);
    Tensor x = testing::random({2, cin, 5, 4}, rng);
    Tensor y = aa.forward(x);
    CHECK(y.shape() == Shape{2, cconv + heads * dv, 5, 4});
    CHECK(aa.out_channels() == cconv + heads * dv);
  }

  AAConv2d aa(2, 3, 3, {2, 2, 2}, rng);
  Tensor x = testing::random({2, 2, 4, 4}, rng);
  const auto conv_only = values(aa.conv.forward(x));
  fill(aa.attn.wv, 0.0);
  Tensor y = aa.forward(x);
  CHECK(values(narrow(y, 1, 0, 3)) == conv_only);
  const Tensor attn_half = narrow(y, 1, 3, 4);
  for (double v : attn_half.data())
    CHECK(v == 0.0);
}

TEST_CASE("recurrent residual unit degenerate recurrences")
{
  Rng rng(6);
  Tensor x = testing::random({2, 3, 5, 5}, rng);
  RecurrentResidualUnit zero_steps(3, 0, rng);
  for (double& b : zero_steps.bias.data())
    b = rng.uniform(-0.5, 0.5);
  Tensor plain = add(x, relu(conv2d(x, zero_steps.wf, zero_steps.bias, 1, 1)));
  CHECK(values(zero_steps.forward(x)) == values(plain));

  RecurrentResidualUnit unit(3, 0, rng);
  fill(unit.wr, 0.0);
  const auto reference = values(unit.forward(x));
  for (std::size_t t : {1u, 2u, 5u})
  {
    unit.steps = t;
    CHECK(values(unit.forward(x)) == reference);
  }
}

TEST_CASE("recurrent residual unit matches the unrolled oracle")
{
  Rng rng(7);
  RecurrentResidualUnit unit(2, 2, rng);
  for (double& b : unit.bias.data())
    b = rng.uniform(-0.5, 0.5);
  Tensor x = testing::random({1, 2, 5, 5}, rng);
  const auto expect = oracle::recurrent_residual(values(x), 2, 5, 5, values(unit.wf),
                                                 values(unit.wr), values(unit.bias), 2);
  CHECK(oracle::max_abs_diff(values(unit.forward(x)), expect) < 1e-13);
  CHECK_THROWS_AS(unit.forward(Tensor::zeros({1, 3, 5, 5})), DimensionError);
}

TEST_CASE("attention gate saturates to the identity")
{
  Rng rng(8);
  AttentionGate gate(4, 3, 2, rng);
  fill(gate.conv_psi.bias, 50.0);
  Tensor g = testing::random({2, 4, 3, 3}, rng, 0.1);
  Tensor x = testing::random({2, 3, 6, 6}, rng);
  Tensor y = gate.forward(g, x);
  CHECK(oracle::max_abs_diff(values(y), values(x)) < 1e-6);
}

TEST_CASE("attention gate coefficients lie in (0,1) and shrink the input")
{
  Rng rng(9);
  AttentionGate gate(2, 3, 2, rng);
  Tensor g = testing::random({3, 2, 4, 4}, rng, 2.0);
  Tensor x = testing::random({3, 3, 8, 8}, rng, 2.0);
  Tensor a = gate.coefficients(g, x);
  CHECK(a.shape() == Shape{3, 1, 8, 8});
  for (double v : a.data())
  {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  Tensor y = gate.forward(g, x);
  for (std::size_t i = 0; i < y.numel(); ++i)
    CHECK(std::abs(y.data()[i]) <= std::abs(x.data()[i]));
  CHECK_THROWS_AS(gate.forward(Tensor::zeros({3, 2, 9, 9}), x), DimensionError);
  CHECK_THROWS_AS(gate.forward(Tensor::zeros({2, 2, 4, 4}), x), DimensionError);
}

TEST_CASE("attention gate hand-computed case")
{
  Rng rng(10);
  AttentionGate gate(1, 1, 1, rng);
  gate.conv_g.weight.at({0, 0, 0, 0}) = 0.5;
  gate.conv_g.bias.at({0}) = -0.25;
  gate.conv_x.weight.at({0, 0, 0, 0}) = 2.0;
  gate.conv_psi.weight.at({0, 0, 0, 0}) = -1.5;
  gate.conv_psi.bias.at({0}) = 0.75;
  const std::vector<double> gv{1, -2, 3, 0.5}, xv{0.2, 1.0, -0.7, 0.0};
  Tensor y = gate.forward(Tensor::from({1, 1, 2, 2}, gv), Tensor::from({1, 1, 2, 2}, xv));
  for (std::size_t i = 0; i < 4; ++i)
  {
    const double pre = std::max(0.0, 0.5 * gv[i] - 0.25 + 2.0 * xv[i]);
    const double alpha = 1.0 / (1.0 + std::exp(-(-1.5 * pre + 0.75)));
    CHECK(std::abs(y.data()[i] - xv[i] * alpha) < 1e-15);
  }
}

TEST_CASE("fire module widths")
{
  Rng rng(11);
  for (double split : {0.25, 0.5, 0.75})
  {
    FireModule fire(128, 16, 128, split, Bypass::simple, rng);
    CHECK(fire.out_channels() == 128);
    CHECK(fire.forward(testing::random({1, 128, 3, 3}, rng)).shape() == Shape{1, 128, 3, 3});
  }
  FireModule accurate(32, 24, 32, 0.5, Bypass::simple, rng);
  CHECK(accurate.expand1.out_channels() == 16);
  CHECK(accurate.expand3.out_channels() == 16);
  // A 1x1 filter holds one ninth of the weights of a 3x3 at equal channels.
  CHECK(accurate.expand3.weight.numel() == 9 * accurate.expand1.weight.numel());
}

TEST_CASE("fire module with zero weights and simple bypass is the identity")
{
  Rng rng(12);
  FireModule fire(8, 2, 8, 0.5, Bypass::simple, rng);
  for (Parameter& p : fire.parameters())
    fill(p.tensor, 0.0);
  Tensor x = testing::random({2, 8, 4, 4}, rng);
  CHECK(values(fire.forward(x)) == values(x));
}

TEST_CASE("fire module configuration errors")
{
  Rng rng(13);
  CHECK_THROWS_AS(FireModule(4, 2, 8, 0.5, Bypass::simple, rng), ConfigError);
  CHECK_NOTHROW(FireModule(4, 2, 8, 0.5, Bypass::none, rng));
  CHECK_THROWS_AS(FireModule(8, 2, 8, 0.5, Bypass::complex, rng), ConfigError);
  CHECK_THROWS_AS(FireModule(8, 0, 8, 0.5, Bypass::none, rng), ConfigError);
  CHECK_THROWS_AS(FireModule(8, 2, 1, 0.5, Bypass::none, rng), ConfigError);
  CHECK_THROWS_AS(FireModule(8, 2, 8, 1.0, Bypass::none, rng), ConfigError);
  CHECK(parse_bypass("simple") == Bypass::simple);
  CHECK_THROWS_AS(parse_bypass("bogus"), ConfigError);
}

TEST_CASE("inception module shapes and branch isolation")
{
  Rng rng(14);
  InceptionModule inc(32, 16, 64, rng);
  Tensor x = testing::random({10, 32, 7, 7}, rng);
  Tensor y = inc.forward(x);
  CHECK(y.shape() == Shape{10, 256, 7, 7});
  CHECK(inc.out_channels() == 256);
  const auto branch_a = values(narrow(y, 1, 0, 64));

  for (Parameter& p : inc.parameters())
    if (p.name.rfind("branch_a", 0) != 0)
      fill(p.tensor, 0.0);
  Tensor z = inc.forward(x);
  CHECK(values(narrow(z, 1, 0, 64)) == branch_a);
  const Tensor rest = narrow(z, 1, 64, 192);
  for (double v : rest.data())
    CHECK(v == 0.0);
  CHECK_THROWS_AS(inc.forward(Tensor::zeros({1, 32, 8, 8})), DimensionError);
}

TEST_CASE("every layer passes a gradient check")
{
  Rng rng(15);
  SUBCASE("conv2d, linear and batchnorm modules")
  {
    Conv2d conv(2, 3, 3, 2, 1, rng);
    for (double& b : conv.bias.data())
      b = rng.uniform(-0.3, 0.3);
    auto r = check_module(conv, testing::random({2, 2, 5, 5}, rng),
                          [&](const Tensor& x) { return conv.forward(x); });
    INFO(r.describe());
    CHECK(r.max_rel_error < 1e-4);

    Linear lin(4, 3, rng);
    r = check_module(lin, testing::random({3, 4}, rng), [&](const Tensor& x) { return lin.forward(x); });
    CHECK(r.max_rel_error < 1e-4);

    BatchNorm bn(3);
    r = check_module(bn, testing::random({4, 3, 2, 2}, rng),
                     [&](const Tensor& x) { return bn.forward(x); });
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("mhsa_2d")
  {
    MultiHeadSelfAttention2d mhsa(3, {2, 2, 3}, rng);
    auto r = check_module(mhsa, testing::random({2, 3, 3, 3}, rng),
                          [&](const Tensor& x) { return mhsa.forward(x); });
    INFO(r.describe());
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("aa_conv through both branches")
  {
    AAConv2d aa(2, 3, 3, {2, 2, 2}, rng);
    auto r = check_module(aa, testing::random({2, 2, 4, 4}, rng),
                          [&](const Tensor& x) { return aa.forward(x); });
    INFO(r.describe());
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("recurrent residual unit")
  {
    RecurrentResidualUnit unit(2, 2, rng);
    for (double& b : unit.bias.data())
      b = rng.uniform(-0.3, 0.3);
    auto r = check_module(unit, testing::random({2, 2, 4, 4}, rng),
                          [&](const Tensor& x) { return unit.forward(x); });
    INFO(r.describe());
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("attention gate")
  {
    AttentionGate gate(2, 3, 2, rng);
    Tensor g = testing::random({2, 2, 2, 2}, rng);
    std::vector<Tensor> inputs{testing::random({2, 3, 4, 4}, rng), g};
    for (const Parameter& p : gate.parameters())
      inputs.push_back(p.tensor);
    auto r = grad_check(
        [&](const std::vector<Tensor>& in) { return project(gate.forward(in[1], in[0]), 6); },
        inputs);
    INFO(r.describe());
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("fire module")
  {
    FireModule fire(4, 2, 4, 0.5, Bypass::simple, rng);
    // Nonzero biases keep pre-activations off the ReLU kink where the
    // squeeze output is all zero.
    for (Conv2d* c : {&fire.squeeze, &fire.expand1, &fire.expand3})
      for (double& b : c->bias.data())
        b = rng.uniform(0.1, 0.3) * (rng.below(2) ? 1 : -1);
    auto r = check_module(fire, testing::random({2, 4, 3, 3}, rng),
                          [&](const Tensor& x) { return fire.forward(x); });
    INFO(r.describe());
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("inception module")
  {
    InceptionModule inc(3, 2, 2, rng);
    auto r = check_module(inc, testing::random({1, 3, 7, 7}, rng),
                          [&](const Tensor& x) { return inc.forward(x); });
    INFO(r.describe());
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("parameter names are hierarchical and unique")
{
  Rng rng(16);
  InceptionModule inc(3, 2, 2, rng);
  const auto params = inc.parameters("stem");
  CHECK(params.front().name == "stem.branch_a.weight");
  CHECK(params.back().name == "stem.branch_d.proj.bias");
  AAConv2d aa(2, 3, 3, {}, rng);
  std::vector<std::string> names;
  for (const Parameter& p : aa.parameters())
    names.push_back(p.name);
  CHECK(names == std::vector<std::string>{"conv.weight", "conv.bias", "attn.wq", "attn.wk",
                                          "attn.wv", "attn.wo"});
}
