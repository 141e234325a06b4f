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

#ifndef FSL_HARNESS_HPP
#define FSL_HARNESS_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fsl/backbones.hpp"
#include "fsl/container.hpp"
#include "fsl/data.hpp"
#include "fsl/gnn.hpp"
#include "fsl/optim.hpp"
#include "fsl/random.hpp"

namespace fsl {

// ---- configuration --------------------------------------------------------

// Flat `key = value` text with `#` comments; keys are dotted.
struct TrainConfig
{
  BackboneConfig backbone;
  GnnConfig gnn;
  EpisodeSpec episode; // n_way, k_shot, queries
  std::size_t episodes_per_step = 10;
  std::size_t total_steps = 1000;
  std::string optimizer = "adam";
  double lr = 1e-3;
  std::uint64_t seed = 1;
  std::size_t log_interval = 10;
  std::size_t eval_interval = 500;
  std::size_t eval_episodes = 1000;
  std::string data_root; // PNG tree or prepared cache; empty means $OMNIGLOT_ROOT
  std::size_t n_train_classes = kOmniglotTrainClasses;
  bool augment_train = true;
  bool augment_test = false;
  std::string out_dir = "runs/default";
  bool record_wallclock = true;

  // Throws ConfigError naming the offending key.
  void validate() const;

  std::string to_text() const;
  // Unknown keys and malformed lines are ConfigErrors; absent keys keep
  // their defaults.
  static TrainConfig from_text(const std::string& text);
  static TrainConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // data_root, else $OMNIGLOT_ROOT, else ConfigError.
  std::string resolved_data_root() const;
};

// ---- metrics --------------------------------------------------------------

struct MetricsRow
{
  std::size_t step = 0;
  std::string split; // train or test
  double loss = 0.0;
  double accuracy = 0.0;
  double ci95 = 0.0;
  double seconds = 0.0;
};

inline constexpr const char* kMetricsColumns = "step,split,loss,accuracy,ci95,seconds";

std::string format_row(const MetricsRow& row);
MetricsRow parse_row(const std::string& line);

struct MetricsFile
{
  std::vector<std::string> header; // '#' lines, without the '#'
  std::vector<MetricsRow> rows;
};

// Throws IoError when unreadable and IntegrityError on a malformed file.
MetricsFile read_metrics(const std::filesystem::path& path);

// 1.96 * sqrt(acc (1 - acc) / n)
double ci95(double accuracy, std::size_t n);

// ---- evaluation -----------------------------------------------------------

struct EvalResult
{
  double loss = 0.0;
  double accuracy = 0.0;
  double ci95 = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0; // classified queries
};

// Index of the largest logit per row; ties resolve to the lowest index.
std::vector<int> predict(const Tensor& logits);

// Accuracy and mean loss over `episodes` fresh episodes from `classes`,
// in eval mode and without gradients. Throws ContractError when the spec
// cannot be met by the split.
EvalResult evaluate(FewShotModel& model, const ImageBank& bank,
                    const std::vector<CharacterClass>& classes, const EpisodeSpec& spec,
                    std::size_t episodes, std::uint64_t seed);

// ---- checkpoints ----------------------------------------------------------

struct TrainState
{
  std::size_t step = 0;
  std::string rng_state;
  double elapsed = 0.0;
  // Running train-row window: loss sum, correct, queries, steps.
  double window_loss = 0.0;
  std::size_t window_correct = 0;
  std::size_t window_queries = 0;
  std::size_t window_steps = 0;
};

Container make_checkpoint(const TrainConfig& config, const FewShotModel& model,
                          const Optimizer* optimizer, const TrainState& state);
// Restores parameters, buffers and optimizer state in place. Shape or name
// mismatches are IntegrityErrors.
void restore_checkpoint(const Container& c, FewShotModel& model, Optimizer* optimizer,
                        TrainState& state);
TrainConfig checkpoint_config(const Container& c);

// ---- training -------------------------------------------------------------

class Trainer
{
public:
  // Builds the split, model and optimizer; samples nothing yet.
  Trainer(const TrainConfig& config, const ImageBank& bank);

  // Continues from a checkpoint written by a run with the same config
  // (apart from total_steps and out_dir).
  void resume(const std::filesystem::path& checkpoint);

  // Trains to config.total_steps, writing out_dir/metrics.csv,
  // out_dir/checkpoint_<step>.fsl at every eval and out_dir/final.fsl.
  void run(const std::function<void(const MetricsRow&)>& on_row = {});

  // One optimizer step over episodes_per_step episodes; returns the mean
  // loss. Non-finite values raise NonFiniteError naming the step.
  double train_step();

  EvalResult evaluate_test(std::size_t episodes) const;

  FewShotModel& model() { return *model_; }
  const SplitDataset& split() const { return split_; }
  const TrainState& state() const { return state_; }
  const TrainConfig& config() const { return config_; }

  std::filesystem::path metrics_path() const;
  std::filesystem::path checkpoint_path(std::size_t step) const;

private:
  void open_metrics(bool resuming);
  void append(const MetricsRow& row, const std::function<void(const MetricsRow&)>& on_row);
  void save_checkpoint(const std::filesystem::path& path) const;
  double now() const;

  TrainConfig config_;
  const ImageBank& bank_;
  SplitDataset split_;
  std::unique_ptr<FewShotModel> model_;
  std::unique_ptr<Optimizer> optimizer_;
  Rng rng_;
  TrainState state_;
  bool resumed_ = false;
  double clock_start_ = 0.0;
};

// Header lines written at the top of every metrics file.
std::vector<std::string> metrics_header(const TrainConfig& config);

} // namespace fsl

#endif // FSL_HARNESS_HPP
