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

// Acceptance gates. One PASS/FAIL line per criterion on stdout (and in
// <work>/results.txt), progress on stderr. Uses $OMNIGLOT_ROOT when set, otherwise a procedural stand-in
// tree generated (once) under the work directory.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fsl/backbones.hpp"
#include "fsl/data.hpp"
#include "fsl/error.hpp"
#include "fsl/gnn.hpp"
#include "fsl/gradsuite.hpp"
#include "fsl/harness.hpp"
#include "fsl/image.hpp"
#include "fsl/kernels.hpp"
#include "fsl/layers.hpp"
#include "fsl/ops.hpp"
#include "fsl/synth.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace fsl;
using testing::values;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradSuiteSeconds = 300.0;
constexpr double kOracleTolerance = 1e-9;
constexpr std::size_t kOracleCases = 100;
constexpr double kRowSumTolerance = 1e-9;
constexpr double kInvarianceTolerance = 1e-6;
constexpr std::size_t kStructureEpisodes = 50;
constexpr double kChanceLow = 0.162, kChanceHigh = 0.238;
constexpr std::size_t kChanceEpisodes = 1000;
constexpr double kLearnedAccuracy = 0.70;
constexpr double kLearnMinutes = 60.0;
constexpr std::size_t kLearnSteps = 3000;
constexpr std::size_t kLearnEvalEpisodes = 1000;
constexpr std::size_t kAaSteps = 200;

struct Outcome
{
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string slurp(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Checkpoint bytes without the config record, which names the output dir.
std::string state_bytes(const fs::path& p)
{
  const Container c = Container::load(p);
  Container out;
  for (const Record& r : c.records())
    if (r.name != "config")
    {
      if (r.dtype == DType::f64)
        out.put_f64(r.name, r.dims, r.f64);
      else if (r.dtype == DType::u64)
        out.put_u64(r.name, r.u64);
      else
        out.put_text(r.name, std::string(r.u8.begin(), r.u8.end()));
    }
  return out.serialize();
}

Tensor rows(const Tensor& x, const std::vector<std::size_t>& order)
{
  std::vector<Tensor> parts;
  for (std::size_t i : order)
    parts.push_back(narrow(x, 0, i, 1));
  return concat(parts, 0);
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng)
{
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  rng.shuffle(p);
  return p;
}

void progress(const std::string& msg)
{
  std::cerr << "  .. " << msg << std::endl;
}

// ---- 1 --------------------------------------------------------------------

Outcome gradient_suite()
{
  const auto t0 = std::chrono::steady_clock::now();
  GradSuiteOptions o;
  o.instances = 5;
  o.include_backbones = true;
  std::size_t failed = 0;
  std::string first_failure;
  const auto entries = run_grad_suite(o);
  const double secs = seconds_since(t0);
  double worst_unit = 0.0, worst_backbone = 0.0;
  for (const GradSuiteEntry& e : entries)
  {
    if (!e.passed())
    {
      ++failed;
      if (first_failure.empty())
        first_failure = " first failure " + e.name + " " + fmt("%.3g", e.max_rel_error);
    }
    if (e.instances < 5)
    {
      ++failed;
      if (first_failure.empty())
        first_failure = " " + e.name + " ran fewer than 5 instances";
    }
    double& w = e.level == "backbone" ? worst_backbone : worst_unit;
    w = std::max(w, e.max_rel_error);
  }
  Outcome out;
  out.pass = failed == 0 && secs < kGradSuiteSeconds && !entries.empty();
  out.detail = std::to_string(entries.size() - std::min(failed, entries.size())) + "/" +
               std::to_string(entries.size()) + " entries, worst rel err unit " +
               fmt("%.2e", worst_unit) + " (< 1e-4), backbone " + fmt("%.2e", worst_backbone) +
               " (< 1e-3), " + fmt("%.1f", secs) + " s (< 300 s)" + first_failure;
  return out;
}

// ---- 2 --------------------------------------------------------------------

Outcome oracle_equivalence()
{
  Rng rng(20260201);
  double worst[5] = {0, 0, 0, 0, 0};
  std::size_t cases[5] = {0, 0, 0, 0, 0};

  for (std::size_t t = 0; t < kOracleCases; ++t)
  {
    const std::size_t m = 1 + rng.below(8), k = 1 + rng.below(8), n = 1 + rng.below(8);
    Tensor a = testing::random({m, k}, rng);
    Tensor b = testing::random({k, n}, rng);
    Tensor c = matmul(a, b);
    worst[0] = std::max(worst[0], oracle::max_abs_diff(values(c), oracle::matmul(values(a),
                                                                                  values(b), m,
                                                                                  k, n)));
    ++cases[0];
  }

  for (std::size_t t = 0; t < kOracleCases; ++t)
  {
    const std::size_t B = 1 + rng.below(2), Cin = 1 + rng.below(3), Cout = 1 + rng.below(3);
    const std::size_t H = 3 + rng.below(6), W = 3 + rng.below(6);
    const std::size_t pad = rng.below(3), stride = 1 + rng.below(2);
    const std::size_t kh = 1 + rng.below(std::min<std::size_t>(5, H + 2 * pad));
    const std::size_t kw = 1 + rng.below(std::min<std::size_t>(5, W + 2 * pad));
    Tensor x = testing::random({B, Cin, H, W}, rng);
    Tensor w = testing::random({Cout, Cin, kh, kw}, rng);
    Tensor bias = testing::random({Cout}, rng);
    Tensor y = conv2d(x, w, bias, stride, pad);
    std::size_t oh = 0, ow = 0;
    const auto expect = oracle::conv2d(values(x), values(w), values(bias), B, Cin, H, W, Cout,
                                       kh, kw, stride, pad, oh, ow);
    if (y.shape() != Shape{B, Cout, oh, ow})
      worst[1] = INFINITY;
    else
      worst[1] = std::max(worst[1], oracle::max_abs_diff(values(y), expect));
    ++cases[1];
  }

  for (std::size_t t = 0; t < kOracleCases; ++t)
  {
    const std::size_t B = 1 + rng.below(2), C = 1 + rng.below(3);
    const std::size_t H = 2 + rng.below(7), W = 2 + rng.below(7);
    const std::size_t k = 1 + rng.below(std::min(H, W)), stride = 1 + rng.below(3);
    Tensor x = testing::random({B, C, H, W}, rng);
    Tensor y = maxpool2d(x, k, stride);
    std::size_t oh = 0, ow = 0;
    const auto expect = oracle::maxpool2d(values(x), B * C, H, W, k, stride, oh, ow);
    if (y.shape() != Shape{B, C, oh, ow})
      worst[2] = INFINITY;
    else
      worst[2] = std::max(worst[2], oracle::max_abs_diff(values(y), expect));
    ++cases[2];
  }

  for (std::size_t t = 0; t < kOracleCases; ++t)
  {
    // At most four tokens per image.
    const std::size_t H = 1 + rng.below(2), W = 1 + rng.below(2), T = H * W;
    const std::size_t C = 1 + rng.below(4), B = 1 + rng.below(2);
    const MhsaConfig cfg{1 + rng.below(3), 1 + rng.below(4), 1 + rng.below(4)};
    MultiHeadSelfAttention2d mhsa(C, cfg, rng);
    Tensor x = testing::random({B, C, H, W}, rng);
    Tensor y = mhsa.forward(x);
    const std::size_t out_c = cfg.heads * cfg.value_dim;
    for (std::size_t b = 0; b < B; ++b)
    {
      Tensor xb = narrow(x, 0, b, 1);
      Tensor tok = reshape(permute(reshape(xb, {1, C, T}), {0, 2, 1}), {T, C});
      const auto expect =
          oracle::mhsa_tokens(values(tok), T, C, values(mhsa.wq), values(mhsa.wk),
                              values(mhsa.wv), values(mhsa.wo), cfg.heads, cfg.key_dim,
                              cfg.value_dim);
      Tensor yb = narrow(y, 0, b, 1);
      Tensor ytok = reshape(permute(reshape(yb, {1, out_c, T}), {0, 2, 1}), {T, out_c});
      worst[3] = std::max(worst[3], oracle::max_abs_diff(values(ytok), expect));
    }
    ++cases[3];
  }

  for (std::size_t t = 0; t < kOracleCases; ++t)
  {
    const std::size_t steps = rng.below(3); // T in {0,1,2}
    const std::size_t C = 1 + rng.below(3), H = 2 + rng.below(5), W = 2 + rng.below(5);
    const std::size_t B = 1 + rng.below(2);
    RecurrentResidualUnit unit(C, steps, rng);
    for (double& v : unit.bias.data())
      v = rng.uniform(-0.5, 0.5);
    Tensor x = testing::random({B, C, H, W}, rng);
    Tensor y = unit.forward(x);
    for (std::size_t b = 0; b < B; ++b)
    {
      const auto expect = oracle::recurrent_residual(values(narrow(x, 0, b, 1)), C, H, W,
                                                     values(unit.wf), values(unit.wr),
                                                     values(unit.bias), steps);
      worst[4] = std::max(worst[4], oracle::max_abs_diff(values(narrow(y, 0, b, 1)), expect));
    }
    ++cases[4];
  }

  const char* names[5] = {"matmul", "conv2d", "maxpool2d", "mhsa_2d", "rru"};
  Outcome out;
  out.pass = true;
  for (int i = 0; i < 5; ++i)
  {
    out.pass = out.pass && cases[i] >= kOracleCases && worst[i] < kOracleTolerance;
    out.detail += std::string(i ? ", " : "") + names[i] + " " + fmt("%.1e", worst[i]);
  }
  out.detail += " over " + std::to_string(kOracleCases) + " cases each (< 1e-9), kernels " +
                kernels::active().name;
  return out;
}

// ---- 3 --------------------------------------------------------------------

Outcome inception_chain()
{
  Rng rng(3);
  BackboneConfig cfg;
  cfg.kind = BackboneKind::inception;
  InceptionEncoder net(cfg, rng);
  const auto t = net.trace(Tensor::uniform({10, 1, 28, 28}, rng, 0.0, 1.0));
  Outcome out;
  out.pass = t.mixed.shape() == Shape{10, 256, 7, 7} && t.flat.shape() == Shape{10, 12544} &&
             t.output.shape() == Shape{10, 64};
  out.detail = "mixed " + to_string(t.mixed.shape()) + ", flat " + to_string(t.flat.shape()) +
               ", output " + to_string(t.output.shape());
  return out;
}

// ---- 4 --------------------------------------------------------------------

Outcome embedding_contract()
{
  Rng rng(4);
  std::size_t checked = 0, bad = 0;
  std::string first;
  for (BackboneKind kind : {BackboneKind::unet, BackboneKind::attention_unet,
                            BackboneKind::squeeze, BackboneKind::inception, BackboneKind::r2u})
    for (std::size_t width : {1, 2})
    {
      BackboneConfig cfg;
      cfg.kind = kind;
      cfg.width = width;
      auto net = make_backbone(cfg, rng);
      net->eval();
      for (std::size_t batch : {1, 7, 10})
      {
        NoGradGuard guard;
        Tensor e = net->forward(Tensor::uniform({batch, 1, 28, 28}, rng, 0.0, 1.0));
        const auto v = e.data();
        const bool ok = e.shape() == Shape{batch, 64} &&
                        std::all_of(v.begin(), v.end(), [](double d) { return std::isfinite(d); });
        ++checked;
        if (!ok)
        {
          ++bad;
          if (first.empty())
            first = " first failure " + to_string(kind) + " w" + std::to_string(width) + " B" +
                    std::to_string(batch) + " -> " + to_string(e.shape());
        }
      }
    }
  Outcome out;
  out.pass = bad == 0 && checked == 30;
  out.detail = std::to_string(checked - bad) + "/" + std::to_string(checked) +
               " configurations give finite [B,64]" + first;
  return out;
}

// ---- 5 --------------------------------------------------------------------

Outcome dataset_protocol(const fs::path& root, const ImageBank& bank)
{
  const RawDataset raw = ingest(root);
  const std::size_t classes = raw.classes.size(), alphabets = raw.alphabet_count();

  const SplitDataset split = split_classes(classes, kOmniglotTrainClasses, true, false);
  std::set<std::size_t> train_bases, test_bases;
  for (const CharacterClass& c : split.train)
    train_bases.insert(c.base_id);
  for (const CharacterClass& c : split.test)
    test_bases.insert(c.base_id);
  std::size_t shared = 0;
  for (std::size_t b : test_bases)
    shared += train_bases.count(b);
  const SplitDataset plain = split_classes(classes, kOmniglotTrainClasses, false, false);

  // Four quarter turns of every stored image.
  std::size_t mismatched = 0;
  std::vector<double> a(ImageBank::kPixels), b(ImageBank::kPixels);
  for (std::size_t c = 0; c < bank.class_count(); ++c)
    for (std::size_t e = 0; e < bank.info(c).count; ++e)
    {
      const double* src = bank.image(c, e);
      rotate90(src, a.data(), 28, 1);
      rotate90(a.data(), b.data(), 28, 1);
      rotate90(b.data(), a.data(), 28, 1);
      rotate90(a.data(), b.data(), 28, 1);
      if (!std::equal(b.begin(), b.end(), src))
        ++mismatched;
    }

  Outcome out;
  out.pass = classes == kOmniglotClasses && alphabets == kOmniglotAlphabets &&
             train_bases.size() == 1200 && test_bases.size() == 423 && shared == 0 &&
             plain.train.size() == 1200 && split.train.size() == 4 * plain.train.size() &&
             split.test.size() == 423 && mismatched == 0;
  out.detail = std::to_string(classes) + " classes / " + std::to_string(alphabets) +
               " alphabets, split " + std::to_string(train_bases.size()) + "/" +
               std::to_string(test_bases.size()) + " with " + std::to_string(shared) +
               " shared, augmented train " + std::to_string(plain.train.size()) + " -> " +
               std::to_string(split.train.size()) + ", 4x90 identity failures " +
               std::to_string(mismatched) + " of " + std::to_string(bank.image_count());
  return out;
}

// ---- 6 --------------------------------------------------------------------

Outcome gnn_structure(const ImageBank& bank)
{
  const SplitDataset split = split_classes(bank.class_count(), kOmniglotTrainClasses);
  Rng rng(6);
  FewShotModel model(BackboneConfig{}, GnnConfig{}, 5, rng);
  model.eval();
  // Move the head off its structured start so the logits carry signal.
  for (Parameter& p : model.head->parameters())
    for (double& v : p.tensor.data())
      v = rng.uniform(-0.8, 0.8);

  NoGradGuard guard;
  // Scale the readout so logits are of order ten.
  model.head->readout.at({0, 0}) = 1.0;
  {
    Rng probe(60);
    const Tensor l = model.forward(sample_episode(bank, split.test, EpisodeSpec{}, probe));
    double m = 0.0;
    for (double v : l.data())
      m = std::max(m, std::abs(v));
    model.head->readout.at({0, 0}) = 10.0 / std::max(m, 1e-300);
  }
  double worst_row = 0.0, worst_perm = 0.0, worst_order = 0.0;
  double min_entry = 0.0, largest = 0.0;
  for (std::size_t t = 0; t < kStructureEpisodes; ++t)
  {
    const EpisodeSpec spec{5, 1 + t % 3, 1 + t % 2};
    Episode e = sample_episode(bank, split.test, spec, rng);
    Tensor emb = model.backbone->forward(concat({e.support_images, e.query_images}, 0));
    const auto trace = model.head->trace(emb, e.support_labels, e.k_shot);
    for (const Tensor& a : trace.adjacency)
    {
      const std::size_t V = a.dim(0);
      for (std::size_t i = 0; i < V; ++i)
      {
        double s = 0.0;
        for (std::size_t j = 0; j < V; ++j)
        {
          s += a.at({i, j});
          min_entry = std::min(min_entry, a.at({i, j}));
        }
        worst_row = std::max(worst_row, std::abs(s - 1.0));
      }
    }
    const Tensor logits = model.forward(e);
    for (double v : logits.data())
      largest = std::max(largest, std::abs(v));

    Episode p = e;
    const auto pi = permutation(5, rng);
    for (int& l : p.support_labels)
      l = static_cast<int>(pi[static_cast<std::size_t>(l)]);
    const Tensor permuted = model.forward(p);
    for (std::size_t q = 0; q < e.num_query(); ++q)
      for (std::size_t c = 0; c < 5; ++c)
        worst_perm = std::max(worst_perm, std::abs(permuted.at({q, pi[c]}) - logits.at({q, c})));

    Episode o = e;
    const auto order = permutation(e.num_support(), rng);
    o.support_images = rows(e.support_images, order);
    for (std::size_t i = 0; i < order.size(); ++i)
      o.support_labels[i] = e.support_labels[order[i]];
    worst_order =
        std::max(worst_order, oracle::max_abs_diff(values(model.forward(o)), values(logits)));
  }
  Outcome out;
  out.pass = worst_row <= kRowSumTolerance && min_entry >= 0.0 && largest > 0.0 &&
             worst_perm < kInvarianceTolerance && worst_order < kInvarianceTolerance;
  out.detail = "row sum err " + fmt("%.1e", worst_row) + " (<= 1e-9), class permutation " +
               fmt("%.1e", worst_perm) + ", support order " + fmt("%.1e", worst_order) +
               " (< 1e-6) over " + std::to_string(kStructureEpisodes) + " episodes, max |logit| " +
               fmt("%.2g", largest);
  return out;
}

// ---- 7 --------------------------------------------------------------------

Outcome chance_baseline(const ImageBank& bank)
{
  const SplitDataset split = split_classes(bank.class_count(), kOmniglotTrainClasses);
  Rng rng(7);
  FewShotModel model(BackboneConfig{}, GnnConfig{}, 5, rng);
  const EvalResult r = evaluate(model, bank, split.test, EpisodeSpec{5, 1, 1}, kChanceEpisodes, 7);
  Outcome out;
  out.pass = r.total == kChanceEpisodes && r.accuracy >= kChanceLow && r.accuracy <= kChanceHigh;
  out.detail = "accuracy " + fmt("%.3f", r.accuracy) + " over " + std::to_string(r.total) +
               " queries (in [0.162, 0.238])";
  return out;
}

// ---- 8, 9, 10 -------------------------------------------------------------

TrainConfig base_config(const fs::path& out_dir, const fs::path& root)
{
  TrainConfig c;
  c.backbone.kind = BackboneKind::unet;
  c.backbone.width = 1;
  c.episode = EpisodeSpec{5, 1, 1};
  c.episodes_per_step = 10;
  c.optimizer = "adam";
  c.lr = 1e-3;
  c.seed = 20260301;
  c.data_root = root.string();
  c.out_dir = out_dir.string();
  return c;
}

Outcome learning_smoke(const ImageBank& bank, const fs::path& work, const fs::path& root)
{
  TrainConfig c = base_config(work / "learn", root);
  c.total_steps = kLearnSteps;
  c.log_interval = 100;
  c.eval_interval = kLearnSteps;
  c.eval_episodes = kLearnEvalEpisodes;
  fs::remove_all(c.out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  Trainer trainer(c, bank);
  MetricsRow test;
  trainer.run([&](const MetricsRow& r) {
    if (r.split == "test")
      test = r;
    if (r.step % 500 == 0)
      progress("step " + std::to_string(r.step) + " " + r.split + " loss " +
               fmt("%.4f", r.loss) + " acc " + fmt("%.4f", r.accuracy));
  });
  const double minutes = seconds_since(t0) / 60.0;
  Outcome out;
  out.pass = test.step == kLearnSteps && test.accuracy >= kLearnedAccuracy &&
             minutes <= kLearnMinutes;
  out.detail = "test accuracy " + fmt("%.4f", test.accuracy) + " +- " + fmt("%.4f", test.ci95) +
               " over " + std::to_string(kLearnEvalEpisodes) + " episodes (>= 0.70), " +
               fmt("%.1f", minutes) + " min (<= 60)";
  return out;
}

Outcome determinism(const ImageBank& bank, const fs::path& work, const fs::path& root)
{
  auto config = [&](const std::string& name, std::size_t steps) {
    TrainConfig c = base_config(work / name, root);
    c.total_steps = steps;
    c.log_interval = 5;
    c.eval_interval = 10;
    c.eval_episodes = 50;
    c.record_wallclock = false;
    fs::remove_all(c.out_dir);
    return c;
  };
  Trainer a(config("det_a", 30), bank);
  a.run();
  Trainer b(config("det_b", 30), bank);
  b.run();
  const bool same_metrics = slurp(a.metrics_path()) == slurp(b.metrics_path());
  const bool same_final =
      state_bytes(work / "det_a" / "final.fsl") == state_bytes(work / "det_b" / "final.fsl");

  Trainer first(config("det_resume", 10), bank);
  first.run();
  TrainConfig rest = first.config();
  rest.total_steps = 30;
  Trainer second(rest, bank);
  second.resume(first.checkpoint_path(10));
  second.run();
  const bool resumed_metrics = slurp(second.metrics_path()) == slurp(a.metrics_path());
  const bool resumed_final = state_bytes(work / "det_resume" / "final.fsl") ==
                             state_bytes(work / "det_a" / "final.fsl");
  Outcome out;
  out.pass = same_metrics && same_final && resumed_metrics && resumed_final;
  auto yn = [](bool v) { return std::string(v ? "identical" : "DIFFERENT"); };
  out.detail = "repeat run metrics " + yn(same_metrics) + ", final state " + yn(same_final) +
               "; resume at step 10 of 30 metrics " + yn(resumed_metrics) + ", final state " +
               yn(resumed_final);
  return out;
}

double mean_step_seconds(const ImageBank& bank, const TrainConfig& c, std::size_t steps)
{
  Trainer t(c, bank);
  t.train_step(); // warm-up, not timed
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t s = 1; s < steps; ++s)
    t.train_step();
  return seconds_since(t0) / static_cast<double>(steps - 1);
}

Outcome aa_variant(const ImageBank& bank, const fs::path& work, const fs::path& root)
{
  TrainConfig plain = base_config(work / "aa_plain", root);
  TrainConfig aa = base_config(work / "aa", root);
  aa.backbone.aa_layers = 1;
  const double plain_s = mean_step_seconds(bank, plain, kAaSteps);
  const double aa_s = mean_step_seconds(bank, aa, kAaSteps);
  Outcome out;
  out.pass = aa_s > plain_s;
  out.detail = std::to_string(kAaSteps) + " steps each, mean step " + fmt("%.4f", aa_s) +
               " s with aa_conv vs " + fmt("%.4f", plain_s) + " s plain (" +
               fmt("%.2fx", aa_s / plain_s) + ")";
  return out;
}

// ---- driver ---------------------------------------------------------------

fs::path prepare_root(const fs::path& work, bool& stand_in)
{
  if (const char* env = std::getenv("OMNIGLOT_ROOT"); env && *env)
  {
    stand_in = false;
    return env;
  }
  stand_in = true;
  const fs::path root = work / "standin";
  const fs::path marker = work / "standin.complete";
  if (!fs::exists(marker))
  {
    progress("writing the stand-in tree to " + root.string());
    fs::remove_all(root);
    synthesize(root, SynthOptions{});
    std::ofstream(marker) << "ok\n";
  }
  return root;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"fewshot-lab acceptance gates"};
  std::string work_arg = "acceptance_work";
  std::vector<int> only;
  app.add_option("--work", work_arg, "scratch directory")->capture_default_str();
  app.add_option("--only", only, "run only these criteria");
  CLI11_PARSE(app, argc, argv);

  const fs::path work = fs::absolute(work_arg);
  fs::create_directories(work);
  auto wanted = [&](int id) {
    return only.empty() || std::find(only.begin(), only.end(), id) != only.end();
  };

  bool stand_in = false;
  fs::path root;
  std::unique_ptr<ImageBank> bank;
  auto data = [&]() -> const ImageBank& {
    if (!bank)
    {
      root = prepare_root(work, stand_in);
      progress("loading " + root.string());
      bank = std::make_unique<ImageBank>(ImageBank::from_raw(ingest(root)));
    }
    return *bank;
  };

  struct Criterion
  {
    int id;
    const char* title;
    bool uses_data;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient suite", false, gradient_suite},
      {2, "oracle equivalence", false, oracle_equivalence},
      {3, "inception shape chain", false, inception_chain},
      {4, "uniform embedding contract", false, embedding_contract},
      {5, "dataset protocol", true, [&] { return dataset_protocol(root, data()); }},
      {6, "gnn structure", true, [&] { return gnn_structure(data()); }},
      {7, "chance baseline", true, [&] { return chance_baseline(data()); }},
      {8, "learning smoke test", true, [&] { return learning_smoke(data(), work, root); }},
      {9, "determinism and persistence", true,
       [&] { return determinism(data(), work, root); }},
      {10, "aa_conv variant gate", true, [&] { return aa_variant(data(), work, root); }},
  };

  std::ofstream report(work / "results.txt");
  std::size_t failures = 0;
  for (const Criterion& c : criteria)
  {
    if (!wanted(c.id))
      continue;
    std::cerr << "[" << c.id << "] " << c.title << std::endl;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try
    {
      if (c.uses_data)
        data();
      o = c.run();
    }
    catch (const std::exception& e)
    {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    failures += o.pass ? 0 : 1;
    char head[96];
    std::snprintf(head, sizeof(head), "%s %2d %s: ", o.pass ? "PASS" : "FAIL", c.id, c.title);
    const std::string line =
        head + o.detail + (c.uses_data && stand_in ? " [stand-in data]" : "");
    std::cout << line << std::endl;
    report << line << std::endl;
    std::cerr << "    " << fmt("%.1f", seconds_since(t0)) << " s" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
