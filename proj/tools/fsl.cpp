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

// Command-line front end: train, eval, gradcheck and data utilities.
// Exit status 0 on success, 1 on a validation or contract failure, 2 on an
// I/O failure.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "fsl/data.hpp"
#include "fsl/error.hpp"
#include "fsl/gradsuite.hpp"
#include "fsl/harness.hpp"
#include "fsl/kernels.hpp"
#include "fsl/synth.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kIo = 2;

std::string env_root()
{
  const char* v = std::getenv("OMNIGLOT_ROOT");
  return v ? v : "";
}

std::string print_row(const fsl::MetricsRow& r)
{
  char buf[160];
  std::snprintf(buf, sizeof(buf), "step %6zu %-5s loss %.4f acc %.4f +- %.4f  %8.1fs", r.step,
                r.split.c_str(), r.loss, r.accuracy, r.ci95, r.seconds);
  return buf;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs
{
  std::string config, out, resume, root;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

int cmd_train(const TrainArgs& a)
{
  fsl::TrainConfig config = fsl::TrainConfig::load(a.config);
  if (a.seed_set)
    config.seed = a.seed;
  if (!a.out.empty())
    config.out_dir = a.out;
  if (!a.root.empty())
    config.data_root = a.root;
  config.validate();
  const std::string root = config.resolved_data_root();
  std::cout << "loading " << root << "\n" << std::flush;
  const fsl::ImageBank bank = fsl::load_bank(root);
  fsl::Trainer trainer(config, bank);
  std::cout << bank.class_count() << " base classes, " << trainer.split().train.size()
            << " train / " << trainer.split().test.size() << " test classes; "
            << trainer.model().parameter_count() << " parameters; kernels "
            << fsl::kernels::active().name << "\n";
  if (!a.resume.empty())
  {
    trainer.resume(a.resume);
    std::cout << "resumed at step " << trainer.state().step << "\n";
  }
  trainer.run([](const fsl::MetricsRow& r) { std::cout << print_row(r) << "\n" << std::flush; });
  std::cout << "wrote " << trainer.metrics_path().string() << " and "
            << (std::filesystem::path(config.out_dir) / "final.fsl").string() << "\n";
  return kOk;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs
{
  std::string checkpoint, root, out;
  std::size_t n_way = 0, k_shot = 0, episodes = 0, queries = 1;
  std::uint64_t seed = 1;
};

int cmd_eval(const EvalArgs& a)
{
  const fsl::EpisodeSpec spec{a.n_way, a.k_shot, a.queries};
  if (spec.n_way < 2 || spec.k_shot < 1 || spec.queries < 1 || a.episodes < 1)
    throw fsl::ContractError("eval: need --n-way >= 2, --k-shot >= 1, --queries >= 1 and "
                             "--episodes >= 1");
  const fsl::Container c = fsl::Container::load(a.checkpoint);
  const fsl::TrainConfig config = fsl::checkpoint_config(c);
  // No parameter shape depends on N, so any N-way head loads the weights.
  fsl::Rng init(config.seed);
  fsl::FewShotModel model(config.backbone, config.gnn, spec.n_way, init);
  fsl::TrainState state;
  fsl::restore_checkpoint(c, model, nullptr, state);

  std::string root = !a.root.empty() ? a.root : env_root();
  if (root.empty())
    root = config.resolved_data_root();
  const fsl::ImageBank bank = fsl::load_bank(root);
  if (bank.class_count() <= config.n_train_classes)
    throw fsl::ContractError("eval: dataset has " + std::to_string(bank.class_count()) +
                             " base classes, the checkpoint's split needs more than " +
                             std::to_string(config.n_train_classes));
  const fsl::SplitDataset split = fsl::split_classes(
      bank.class_count(), config.n_train_classes, config.augment_train, config.augment_test);

  const auto t0 = std::chrono::steady_clock::now();
  const fsl::EvalResult r = fsl::evaluate(model, bank, split.test, spec, a.episodes, a.seed);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const fsl::MetricsRow row{state.step, "test", r.loss, r.accuracy, r.ci95, secs};
  std::printf("%zu-way %zu-shot, %zu episodes on %zu test classes: accuracy %.4f +- %.4f "
              "(%zu/%zu queries), loss %.4f\n",
              spec.n_way, spec.k_shot, a.episodes, split.test.size(), r.accuracy, r.ci95,
              r.correct, r.total, r.loss);
  std::printf("%s\n%s\n", fsl::kMetricsColumns, fsl::format_row(row).c_str());
  if (!a.out.empty())
  {
    std::ofstream out(a.out, std::ios::binary | std::ios::trunc);
    for (const std::string& line : fsl::metrics_header(config))
      out << line << "\n";
    out << "# eval " << spec.n_way << "-way " << spec.k_shot << "-shot, " << spec.queries
        << " queries, " << a.episodes << " episodes, seed " << a.seed << "\n";
    out << fsl::kMetricsColumns << "\n" << fsl::format_row(row) << "\n";
    if (!out)
      throw fsl::IoError("cannot write " + a.out);
  }
  return kOk;
}

// ---- gradcheck ------------------------------------------------------------

int cmd_gradcheck(std::size_t instances, std::uint64_t seed, bool skip_backbones)
{
  fsl::GradSuiteOptions o;
  o.instances = instances;
  o.seed = seed;
  o.include_backbones = !skip_backbones;
  std::printf("%-9s %-34s %5s %12s %9s\n", "level", "name", "cases", "max rel err", "tolerance");
  o.progress = [](const fsl::GradSuiteEntry& e) {
    std::printf("%-9s %-34s %5zu %12.3e %9.0e %s\n", e.level.c_str(), e.name.c_str(),
                e.instances, e.max_rel_error, e.tolerance, e.passed() ? "PASS" : "FAIL");
    if (!e.passed())
      std::printf("          worst: %s\n", e.worst.c_str());
    std::fflush(stdout);
  };
  const auto t0 = std::chrono::steady_clock::now();
  const auto entries = fsl::run_grad_suite(o);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::size_t failed = 0;
  for (const auto& e : entries)
    failed += e.passed() ? 0 : 1;
  std::printf("%zu entries, %zu failed, %.1fs (kernels %s)\n", entries.size(), failed, secs,
              fsl::kernels::active().name);
  return failed == 0 ? kOk : kInvalid;
}

// ---- data -----------------------------------------------------------------

int cmd_verify(const std::string& root, std::size_t classes, std::size_t alphabets)
{
  const fsl::RawDataset raw = fsl::ingest(root);
  std::printf("%zu classes / %zu alphabets (%zu images)\n", raw.classes.size(),
              raw.alphabet_count(), raw.image_count());
  bool ok = true;
  if (classes && raw.classes.size() != classes)
  {
    std::fprintf(stderr, "expected %zu classes\n", classes);
    ok = false;
  }
  if (alphabets && raw.alphabet_count() != alphabets)
  {
    std::fprintf(stderr, "expected %zu alphabets\n", alphabets);
    ok = false;
  }
  return ok ? kOk : kInvalid;
}

int cmd_prepare(const std::string& root, const std::string& out)
{
  const fsl::ImageBank bank = fsl::ImageBank::from_raw(fsl::ingest(root));
  bank.to_container().save(out);
  std::printf("%zu classes / %zu alphabets, %zu images -> %s\n", bank.class_count(),
              bank.alphabet_count(), bank.image_count(), out.c_str());
  return kOk;
}

int cmd_synth(const std::string& out, const fsl::SynthOptions& o)
{
  const std::size_t n = fsl::synthesize(out, o);
  std::printf("%zu classes / %zu alphabets, %zu images -> %s\n", o.characters, o.alphabets, n,
              out.c_str());
  return kOk;
}

template <class F>
int guarded(F&& f)
{
  try
  {
    return f();
  }
  catch (const fsl::IoError& e)
  {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIo;
  }
  catch (const std::filesystem::filesystem_error& e)
  {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIo;
  }
  catch (const std::exception& e)
  {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInvalid;
  }
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Few-shot Omniglot lab: episodic training and evaluation of GNN classifiers"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "train a model from a config file");
  t->add_option("--config", train.config, "config file (key = value lines)")->required();
  t->add_option("--out", train.out, "output directory (overrides output.dir)");
  t->add_option("--seed", train.seed, "seed (overrides the config)");
  t->add_option("--resume", train.resume, "checkpoint to continue from");
  t->add_option("--root", train.root, "dataset tree or prepared cache (overrides data.root)");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint on fresh test-class episodes");
  e->add_option("--checkpoint", eval.checkpoint, "checkpoint file")->required();
  e->add_option("--n-way", eval.n_way, "classes per episode")->required();
  e->add_option("--k-shot", eval.k_shot, "support images per class")->required();
  e->add_option("--episodes", eval.episodes, "number of episodes")->required();
  e->add_option("--queries", eval.queries, "queries per episode")->capture_default_str();
  e->add_option("--seed", eval.seed, "episode sampling seed")->capture_default_str();
  e->add_option("--root", eval.root, "dataset (default $OMNIGLOT_ROOT, then the checkpoint's)");
  e->add_option("--out", eval.out, "also write the result as a metrics file");

  std::size_t instances = 5;
  std::uint64_t grad_seed = 1;
  bool skip_backbones = false;
  auto* g = app.add_subcommand("gradcheck", "run the central-difference gradient suite");
  g->add_option("--instances", instances, "random instances per entry")->capture_default_str();
  g->add_option("--seed", grad_seed, "seed")->capture_default_str();
  g->add_flag("--skip-backbones", skip_backbones, "skip the whole-backbone checks");

  auto* d = app.add_subcommand("data", "dataset utilities");
  d->require_subcommand(1);
  std::string root = env_root();
  std::size_t expect_classes = fsl::kOmniglotClasses, expect_alphabets = fsl::kOmniglotAlphabets;
  auto* dv = d->add_subcommand("verify", "ingest a tree and report its counts");
  dv->add_option("--root", root, "dataset tree (default $OMNIGLOT_ROOT)");
  dv->add_option("--expect-classes", expect_classes, "required class count, 0 for any")
      ->capture_default_str();
  dv->add_option("--expect-alphabets", expect_alphabets, "required alphabet count, 0 for any")
      ->capture_default_str();
  std::string cache;
  auto* dp = d->add_subcommand("prepare", "preprocess a tree into a tensor cache");
  dp->add_option("--root", root, "dataset tree (default $OMNIGLOT_ROOT)");
  dp->add_option("--out", cache, "cache file")->required();
  std::string synth_out;
  fsl::SynthOptions synth;
  auto* ds = d->add_subcommand("synth", "write a procedural stand-in tree");
  ds->add_option("--out", synth_out, "output directory")->required();
  ds->add_option("--alphabets", synth.alphabets)->capture_default_str();
  ds->add_option("--characters", synth.characters)->capture_default_str();
  ds->add_option("--exemplars", synth.exemplars)->capture_default_str();
  ds->add_option("--seed", synth.seed)->capture_default_str();

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::CallForHelp& ex)
  {
    return app.exit(ex);
  }
  catch (const CLI::CallForAllHelp& ex)
  {
    return app.exit(ex);
  }
  catch (const CLI::ParseError& ex)
  {
    std::cerr << "error: " << ex.what() << "\n\n" << app.help();
    return kInvalid;
  }
  train.seed_set = t->count("--seed") > 0;

  auto need_root = [&] {
    if (root.empty())
      throw fsl::ConfigError("no dataset: pass --root or set OMNIGLOT_ROOT");
  };
  if (*t)
    return guarded([&] { return cmd_train(train); });
  if (*e)
    return guarded([&] { return cmd_eval(eval); });
  if (*g)
    return guarded([&] { return cmd_gradcheck(instances, grad_seed, skip_backbones); });
  if (*dv)
    return guarded([&] {
      need_root();
      return cmd_verify(root, expect_classes, expect_alphabets);
    });
  if (*dp)
    return guarded([&] {
      need_root();
      return cmd_prepare(root, cache);
    });
  if (*ds)
    return guarded([&] { return cmd_synth(synth_out, synth); });
  return kInvalid;
}
