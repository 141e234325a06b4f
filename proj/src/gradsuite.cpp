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

#include "fsl/gradsuite.hpp"

#include <memory>

#include "fsl/backbones.hpp"
#include "fsl/gnn.hpp"
#include "fsl/gradcheck.hpp"
#include "fsl/layers.hpp"
#include "fsl/ops.hpp"

namespace fsl {

namespace {

using V = std::vector<Tensor>;

struct Instance
{
  V inputs;
  ScalarFn f;
  std::shared_ptr<void> keep; // module the closure refers to
  GradCheckOptions options;
};

struct Case
{
  std::string name;
  std::string level;
  double tolerance;
  std::function<Instance(Rng&)> make;
};

Tensor rnd(const Shape& s, Rng& rng, double scale = 1.0)
{
  return Tensor::uniform(s, rng, -scale, scale);
}

// Scalar that weights every output element differently.
Tensor project(const Tensor& y, std::uint64_t seed)
{
  Rng rng(seed);
  return sum(mul(y, Tensor::uniform(y.shape(), rng, -1.0, 1.0)));
}

// Values at least `gap` away from zero, for piecewise-linear ops.
Tensor off_kink(const Shape& s, Rng& rng, double gap = 0.1)
{
  Tensor t = rnd(s, rng);
  for (double& v : t.data())
    v += v > 0 ? gap : -gap;
  return t;
}

void randomize(Module& m, Rng& rng, double scale = 0.5)
{
  for (Parameter& p : m.parameters())
    for (double& v : p.tensor.data())
      v = rng.uniform(-scale, scale);
}

// Input x plus every parameter of m.
template <class M>
Instance module_case(std::shared_ptr<M> m, Tensor x, std::function<Tensor(M&, const Tensor&)> fwd,
                     std::uint64_t seed)
{
  Instance inst;
  inst.inputs.push_back(std::move(x));
  for (const Parameter& p : m->parameters())
    inst.inputs.push_back(p.tensor);
  M* raw = m.get();
  inst.f = [raw, fwd, seed](const V& in) { return project(fwd(*raw, in[0]), seed); };
  inst.keep = m;
  return inst;
}

Case op(const std::string& name, std::function<V(Rng&)> make, ScalarFn f)
{
  return {name, "op", 1e-4, [make, f](Rng& rng) {
            Instance inst;
            inst.inputs = make(rng);
            inst.f = f;
            return inst;
          }};
}

std::vector<Case> op_cases()
{
  std::vector<Case> c;
  c.push_back(op("matmul", [](Rng& r) { return V{rnd({3, 4}, r), rnd({4, 5}, r)}; },
                 [](const V& in) { return project(matmul(in[0], in[1]), 1); }));
  c.push_back(op("bmm", [](Rng& r) { return V{rnd({2, 3, 4}, r), rnd({2, 4, 3}, r)}; },
                 [](const V& in) { return project(bmm(in[0], in[1]), 2); }));
  c.push_back(op("bmm_transposed", [](Rng& r) { return V{rnd({2, 3, 4}, r), rnd({2, 5, 4}, r)}; },
                 [](const V& in) { return project(bmm(in[0], in[1], true), 3); }));
  c.push_back(op("linear", [](Rng& r) { return V{rnd({3, 4}, r), rnd({4, 2}, r), rnd({2}, r)}; },
                 [](const V& in) { return project(linear(in[0], in[1], in[2]), 4); }));
  c.push_back(op("add", [](Rng& r) { return V{rnd({3, 4}, r), rnd({3, 4}, r)}; },
                 [](const V& in) { return project(add(in[0], in[1]), 5); }));
  c.push_back(op("sub", [](Rng& r) { return V{rnd({3, 4}, r), rnd({3, 4}, r)}; },
                 [](const V& in) { return project(sub(in[0], in[1]), 6); }));
  c.push_back(op("mul", [](Rng& r) { return V{rnd({3, 4}, r), rnd({3, 4}, r)}; },
                 [](const V& in) { return project(mul(in[0], in[1]), 7); }));
  c.push_back(op("scale", [](Rng& r) { return V{rnd({5}, r)}; },
                 [](const V& in) { return project(scale(in[0], -1.7), 8); }));
  c.push_back(op("add_scalar", [](Rng& r) { return V{rnd({5}, r)}; },
                 [](const V& in) { return project(mul(add_scalar(in[0], 0.3), in[0]), 9); }));
  c.push_back(op("broadcast_to", [](Rng& r) { return V{rnd({2, 1, 3}, r)}; },
                 [](const V& in) { return project(broadcast_to(in[0], {2, 4, 3}), 10); }));
  c.push_back(op("relu", [](Rng& r) { return V{off_kink({4, 5}, r)}; },
                 [](const V& in) { return project(relu(in[0]), 11); }));
  c.push_back(op("leaky_relu", [](Rng& r) { return V{off_kink({4, 5}, r)}; },
                 [](const V& in) { return project(leaky_relu(in[0], 0.2), 12); }));
  c.push_back(op("sigmoid", [](Rng& r) { return V{rnd({4, 5}, r, 3.0)}; },
                 [](const V& in) { return project(sigmoid(in[0]), 13); }));
  c.push_back(op("softmax", [](Rng& r) { return V{rnd({3, 4, 5}, r, 2.0)}; },
                 [](const V& in) { return project(softmax(in[0], 1), 14); }));
  c.push_back(op("log_softmax", [](Rng& r) { return V{rnd({3, 6}, r, 2.0)}; },
                 [](const V& in) { return project(log_softmax(in[0], 1), 15); }));
  c.push_back(op("sum", [](Rng& r) { return V{rnd({3, 4}, r)}; },
                 [](const V& in) { return sum(mul(in[0], in[0])); }));
  c.push_back(op("mean", [](Rng& r) { return V{rnd({3, 4}, r)}; },
                 [](const V& in) { return mean(mul(in[0], in[0])); }));
  c.push_back(op("sum_axis", [](Rng& r) { return V{rnd({3, 4, 2}, r)}; },
                 [](const V& in) { return project(sum_axis(in[0], 1), 16); }));
  c.push_back(op("reshape", [](Rng& r) { return V{rnd({2, 3, 4}, r)}; },
                 [](const V& in) { return project(reshape(in[0], {4, 6}), 17); }));
  c.push_back(op("flatten", [](Rng& r) { return V{rnd({2, 3, 2, 2}, r)}; },
                 [](const V& in) { return project(flatten(in[0]), 18); }));
  c.push_back(op("permute", [](Rng& r) { return V{rnd({2, 3, 4}, r)}; },
                 [](const V& in) { return project(permute(in[0], {2, 0, 1}), 19); }));
  c.push_back(op("concat", [](Rng& r) { return V{rnd({2, 3, 2}, r), rnd({2, 1, 2}, r)}; },
                 [](const V& in) { return project(concat({in[0], in[1], in[0]}, 1), 20); }));
  c.push_back(op("narrow", [](Rng& r) { return V{rnd({3, 5}, r)}; },
                 [](const V& in) { return project(narrow(in[0], 1, 1, 3), 21); }));
  c.push_back(op("pairwise_absdiff", [](Rng& r) { return V{rnd({4, 3}, r)}; },
                 [](const V& in) { return project(pairwise_absdiff(in[0]), 22); }));
  c.push_back(op("normalize_rows", [](Rng& r) { return V{rnd({3, 5}, r)}; },
                 [](const V& in) { return project(normalize_rows(in[0]), 61); }));
  c.push_back(op("conv2d",
                 [](Rng& r) { return V{rnd({2, 2, 5, 5}, r), rnd({3, 2, 3, 3}, r), rnd({3}, r)}; },
                 [](const V& in) { return project(conv2d(in[0], in[1], in[2], 1, 1), 23); }));
  c.push_back(op("conv2d_strided",
                 [](Rng& r) { return V{rnd({1, 2, 7, 6}, r), rnd({2, 2, 3, 2}, r), rnd({2}, r)}; },
                 [](const V& in) { return project(conv2d(in[0], in[1], in[2], 2, 1), 24); }));
  c.push_back(op("conv2d_pointwise",
                 [](Rng& r) { return V{rnd({2, 3, 4, 4}, r), rnd({2, 3, 1, 1}, r), rnd({2}, r)}; },
                 [](const V& in) { return project(conv2d(in[0], in[1], in[2], 1, 0), 25); }));
  c.push_back(op("maxpool2d", [](Rng& r) { return V{rnd({2, 2, 6, 6}, r)}; },
                 [](const V& in) { return project(maxpool2d(in[0], 2, 2), 26); }));
  c.push_back(op("maxpool2d_padded", [](Rng& r) { return V{rnd({1, 2, 5, 5}, r)}; },
                 [](const V& in) { return project(maxpool2d(in[0], 3, 1, 1), 27); }));
  c.push_back(op("global_avgpool", [](Rng& r) { return V{rnd({2, 3, 4, 4}, r)}; },
                 [](const V& in) { return project(global_avgpool(in[0]), 28); }));
  c.push_back(op("upsample_nearest", [](Rng& r) { return V{rnd({1, 2, 3, 3}, r)}; },
                 [](const V& in) { return project(upsample_nearest(in[0], 7, 7), 29); }));
  c.push_back(op("batchnorm_train",
                 [](Rng& r) { return V{rnd({3, 2, 3, 3}, r, 2.0), rnd({2}, r), rnd({2}, r)}; },
                 [](const V& in) {
                   Tensor rm = Tensor::zeros({2}), rv = Tensor::full({2}, 1.0);
                   return project(batchnorm(in[0], in[1], in[2], rm, rv, true), 30);
                 }));
  c.push_back(op("batchnorm_eval",
                 [](Rng& r) { return V{rnd({4, 3}, r, 2.0), rnd({3}, r), rnd({3}, r)}; },
                 [](const V& in) {
                   Tensor rm = Tensor::from({3}, {0.1, -0.2, 0.3});
                   Tensor rv = Tensor::from({3}, {0.5, 1.5, 2.0});
                   return project(batchnorm(in[0], in[1], in[2], rm, rv, false), 31);
                 }));
  c.push_back(op("attention",
                 [](Rng& r) { return V{rnd({2, 6, 3}, r), rnd({2, 6, 3}, r), rnd({2, 6, 4}, r)}; },
                 [](const V& in) { return project(attention(in[0], in[1], in[2], 0.7), 32); }));
  c.push_back(op("attention_multi_tile",
                 [](Rng& r) { return V{rnd({1, 67, 2}, r), rnd({1, 67, 2}, r), rnd({1, 67, 2}, r)}; },
                 [](const V& in) { return project(attention(in[0], in[1], in[2], 1.3), 33); }));
  c.push_back(op("cross_entropy", [](Rng& r) { return V{rnd({4, 5}, r, 2.0)}; },
                 [](const V& in) { return cross_entropy(in[0], {1, 0, 4, 2}); }));
  return c;
}

std::vector<Case> layer_cases()
{
  std::vector<Case> c;
  c.push_back({"Conv2d", "layer", 1e-4, [](Rng& r) {
                 auto m = std::make_shared<Conv2d>(2, 3, 3, 2, 1, r);
                 randomize(*m, r);
                 return module_case<Conv2d>(m, rnd({2, 2, 5, 5}, r),
                                            [](Conv2d& l, const Tensor& x) { return l.forward(x); }, 40);
               }});
  c.push_back({"Linear", "layer", 1e-4, [](Rng& r) {
                 auto m = std::make_shared<Linear>(4, 3, r);
                 randomize(*m, r);
                 return module_case<Linear>(m, rnd({3, 4}, r),
                                            [](Linear& l, const Tensor& x) { return l.forward(x); }, 41);
               }});
  c.push_back({"BatchNorm", "layer", 1e-4, [](Rng& r) {
                 auto m = std::make_shared<BatchNorm>(3);
                 randomize(*m, r);
                 return module_case<BatchNorm>(
                     m, rnd({4, 3, 2, 2}, r), [](BatchNorm& l, const Tensor& x) { return l.forward(x); },
                     42);
               }});
  c.push_back({"MultiHeadSelfAttention2d", "layer", 1e-4, [](Rng& r) {
                 auto m = std::make_shared<MultiHeadSelfAttention2d>(3, MhsaConfig{2, 2, 3}, r);
                 randomize(*m, r);
                 return module_case<MultiHeadSelfAttention2d>(
                     m, rnd({2, 3, 3, 3}, r),
                     [](MultiHeadSelfAttention2d& l, const Tensor& x) { return l.forward(x); }, 43);
               }});
  c.push_back({"AAConv2d", "layer", 1e-4, [](Rng& r) {
                 auto m = std::make_shared<AAConv2d>(2, 3, 3, MhsaConfig{2, 2, 2}, r);
                 randomize(*m, r);
                 return module_case<AAConv2d>(
                     m, rnd({2, 2, 4, 4}, r), [](AAConv2d& l, const Tensor& x) { return l.forward(x); },
                     44);
               }});
  c.push_back({"RecurrentResidualUnit", "layer", 1e-4, [](Rng& r) {
                 auto m = std::make_shared<RecurrentResidualUnit>(2, 2, r);
                 randomize(*m, r);
                 return module_case<RecurrentResidualUnit>(
                     m, rnd({2, 2, 4, 4}, r),
                     [](RecurrentResidualUnit& l, const Tensor& x) { return l.forward(x); }, 45);
               }});
  c.push_back({"AttentionGate", "layer", 1e-4, [](Rng& r) {
                 auto m = std::make_shared<AttentionGate>(2, 3, 2, r);
                 randomize(*m, r);
                 Instance inst;
                 inst.inputs = {rnd({2, 3, 4, 4}, r), rnd({2, 2, 2, 2}, r)};
                 for (const Parameter& p : m->parameters())
                   inst.inputs.push_back(p.tensor);
                 AttentionGate* g = m.get();
                 inst.f = [g](const V& in) { return project(g->forward(in[1], in[0]), 46); };
                 inst.keep = m;
                 return inst;
               }});
  c.push_back({"FireModule", "layer", 1e-4, [](Rng& r) {
                 auto m = std::make_shared<FireModule>(4, 2, 4, 0.5, Bypass::simple, r);
                 randomize(*m, r);
                 return module_case<FireModule>(
                     m, rnd({2, 4, 3, 3}, r), [](FireModule& l, const Tensor& x) { return l.forward(x); },
                     47);
               }});
  c.push_back({"InceptionModule", "layer", 1e-4, [](Rng& r) {
                 auto m = std::make_shared<InceptionModule>(3, 2, 2, r);
                 randomize(*m, r);
                 return module_case<InceptionModule>(
                     m, rnd({1, 3, 7, 7}, r),
                     [](InceptionModule& l, const Tensor& x) { return l.forward(x); }, 48);
               }});
  return c;
}

std::vector<Case> gnn_cases()
{
  std::vector<Case> c;
  c.push_back(op("graph_conv",
                 [](Rng& r) {
                   return V{rnd({4, 3}, r), softmax(rnd({4, 4}, r), 1), rnd({3, 5}, r),
                            rnd({3, 5}, r)};
                 },
                 [](const V& in) { return project(graph_conv(in[0], in[1], in[2], in[3], 0.2), 60); }));
  c.back().level = "gnn";
  c.push_back({"learn_adjacency", "gnn", 1e-4, [](Rng& r) {
                 auto m = std::make_shared<EdgeScorer>(4, 3, 0.2, r);
                 randomize(*m, r);
                 return module_case<EdgeScorer>(
                     m, rnd({5, 7}, r),
                     [](EdgeScorer& psi, const Tensor& f) { return learn_adjacency(f, psi); }, 61);
               }});
  c.push_back({"GraphConvLayer", "gnn", 1e-4, [](Rng& r) {
                 auto m = std::make_shared<GraphConvLayer>(4, 3, 3, 0.2, r);
                 randomize(*m, r);
                 Tensor A = softmax(rnd({5, 5}, r), 1);
                 return module_case<GraphConvLayer>(
                     m, rnd({5, 7}, r),
                     [A](GraphConvLayer& l, const Tensor& f) { return l.forward(f, A); }, 62);
               }});
  c.push_back({"GnnHead", "gnn", 1e-4, [](Rng& r) {
                 GnnConfig cfg;
                 cfg.hidden = 6;
                 auto m = std::make_shared<GnnHead>(cfg, 3, r);
                 randomize(*m, r);
                 std::vector<int> labels{2, 0, 1};
                 return module_case<GnnHead>(
                     m, rnd({5, 64}, r),
                     [labels](GnnHead& h, const Tensor& e) { return h.forward(e, labels, 1); }, 63);
               }});
  c.push_back(op("episode_loss", [](Rng& r) { return V{rnd({3, 5}, r, 3.0)}; },
                 [](const V& in) { return episode_loss(in[0], {4, 0, 2}); }));
  c.back().level = "gnn";
  return c;
}

std::vector<Case> backbone_cases()
{
  std::vector<Case> c;
  for (BackboneKind kind : {BackboneKind::unet, BackboneKind::attention_unet, BackboneKind::squeeze,
                            BackboneKind::inception, BackboneKind::r2u})
    c.push_back({to_string(kind), "backbone", 1e-3, [kind](Rng& r) {
                   BackboneConfig cfg;
                   cfg.kind = kind;
                   std::shared_ptr<Backbone> net = make_backbone(cfg, r);
                   Instance inst = module_case<Backbone>(
                       net, Tensor::uniform({2, 1, 28, 28}, r, 0.0, 1.0),
                       [](Backbone& b, const Tensor& x) { return b.forward(x); }, 70);
                   // Central differences at eps 1e-6 rarely cross a ReLU kink;
                   // a sample of each parameter keeps the run short, and the
                   // floor absorbs roundoff where the true gradient is zero.
                   inst.options.eps = 1e-6;
                   inst.options.max_elements_per_input = 4;
                   inst.options.abs_floor = 1e-4;
                   return inst;
                 }});
  return c;
}

} // namespace

std::vector<GradSuiteEntry> run_grad_suite(const GradSuiteOptions& options)
{
  std::vector<Case> cases = op_cases();
  for (auto* more : {layer_cases, gnn_cases})
  {
    auto extra = more();
    cases.insert(cases.end(), extra.begin(), extra.end());
  }
  if (options.include_backbones)
  {
    auto extra = backbone_cases();
    cases.insert(cases.end(), extra.begin(), extra.end());
  }

  std::vector<GradSuiteEntry> out;
  Rng rng(options.seed);
  for (const Case& c : cases)
  {
    GradSuiteEntry e;
    e.name = c.name;
    e.level = c.level;
    e.tolerance = c.tolerance;
    for (std::size_t i = 0; i < options.instances; ++i)
    {
      Instance inst = c.make(rng);
      const GradCheckResult r = grad_check(inst.f, inst.inputs, inst.options);
      ++e.instances;
      if (r.max_rel_error >= e.max_rel_error || e.worst.empty())
      {
        e.max_rel_error = r.max_rel_error;
        e.worst = r.describe();
      }
    }
    if (options.progress)
      options.progress(e);
    out.push_back(std::move(e));
  }
  return out;
}

} // namespace fsl
