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

#include "fsl/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fsl/error.hpp"
#include "fsl/ops.hpp"

namespace fsl {

namespace {

// ---- value text -----------------------------------------------------------

std::string format_double(double v)
{
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string format_fixed(double v)
{
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 6);
  return std::string(buf, r.ptr);
}

bool parse_double(const std::string& s, double& out)
{
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

bool parse_size(const std::string& s, std::uint64_t& out)
{
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size() && !s.empty();
}

std::string trim(const std::string& s)
{
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Key
{
  const char* name;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
  bool echoed = true; // written to the metrics header
};

std::size_t as_size(const std::string& key, const std::string& v)
{
  std::uint64_t x = 0;
  if (!parse_size(v, x))
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

double as_double(const std::string& key, const std::string& v)
{
  double x = 0.0;
  if (!parse_double(v, x))
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

bool as_bool(const std::string& key, const std::string& v)
{
  if (v == "true")
    return true;
  if (v == "false")
    return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

#define FSL_SIZE_KEY(NAME, FIELD)                                                                \
  Key{NAME, [](const TrainConfig& c) { return std::to_string(c.FIELD); },                         \
      [](TrainConfig& c, const std::string& v) { c.FIELD = as_size(NAME, v); }}
#define FSL_DOUBLE_KEY(NAME, FIELD)                                                              \
  Key{NAME, [](const TrainConfig& c) { return format_double(c.FIELD); },                          \
      [](TrainConfig& c, const std::string& v) { c.FIELD = as_double(NAME, v); }}
#define FSL_BOOL_KEY(NAME, FIELD)                                                                \
  Key{NAME, [](const TrainConfig& c) { return bool_text(c.FIELD); },                              \
      [](TrainConfig& c, const std::string& v) { c.FIELD = as_bool(NAME, v); }}

const std::vector<Key>& keys()
{
  static const std::vector<Key> table = {
      Key{"backbone.kind", [](const TrainConfig& c) { return to_string(c.backbone.kind); },
          [](TrainConfig& c, const std::string& v) { c.backbone.kind = parse_backbone_kind(v); }},
      FSL_SIZE_KEY("backbone.width", backbone.width),
      FSL_SIZE_KEY("backbone.aa_layers", backbone.aa_layers),
      FSL_SIZE_KEY("backbone.mhsa.heads", backbone.mhsa.heads),
      FSL_SIZE_KEY("backbone.mhsa.key_dim", backbone.mhsa.key_dim),
      FSL_SIZE_KEY("backbone.mhsa.value_dim", backbone.mhsa.value_dim),
      FSL_DOUBLE_KEY("backbone.squeeze_ratio", backbone.squeeze_ratio),
      FSL_DOUBLE_KEY("backbone.expand_split", backbone.expand_split),
      Key{"backbone.bypass", [](const TrainConfig& c) { return to_string(c.backbone.bypass); },
          [](TrainConfig& c, const std::string& v) { c.backbone.bypass = parse_bypass(v); }},
      FSL_SIZE_KEY("backbone.recurrent_steps", backbone.recurrent_steps),
      FSL_DOUBLE_KEY("backbone.leaky_slope", backbone.leaky_slope),
      FSL_SIZE_KEY("gnn.rounds", gnn.rounds),
      FSL_SIZE_KEY("gnn.hidden", gnn.hidden),
      FSL_DOUBLE_KEY("gnn.slope", gnn.slope),
      FSL_DOUBLE_KEY("gnn.embedding_norm", gnn.embedding_norm),
      FSL_SIZE_KEY("episode.n_way", episode.n_way),
      FSL_SIZE_KEY("episode.k_shot", episode.k_shot),
      FSL_SIZE_KEY("episode.queries", episode.queries),
      FSL_SIZE_KEY("train.episodes_per_step", episodes_per_step),
      Key{"train.total_steps", [](const TrainConfig& c) { return std::to_string(c.total_steps); },
          [](TrainConfig& c, const std::string& v) {
            c.total_steps = as_size("train.total_steps", v);
          },
          false},
      FSL_SIZE_KEY("train.log_interval", log_interval),
      Key{"optim.kind", [](const TrainConfig& c) { return c.optimizer; },
          [](TrainConfig& c, const std::string& v) { c.optimizer = v; }},
      FSL_DOUBLE_KEY("optim.lr", lr),
      Key{"seed", [](const TrainConfig& c) { return std::to_string(c.seed); },
          [](TrainConfig& c, const std::string& v) {
            std::uint64_t x = 0;
            if (!parse_size(v, x))
              throw ConfigError("seed: expected a non-negative integer, got '" + v + "'");
            c.seed = x;
          }},
      FSL_SIZE_KEY("eval.interval", eval_interval),
      FSL_SIZE_KEY("eval.episodes", eval_episodes),
      Key{"data.root", [](const TrainConfig& c) { return c.data_root; },
          [](TrainConfig& c, const std::string& v) { c.data_root = v; }, false},
      FSL_SIZE_KEY("data.n_train", n_train_classes),
      FSL_BOOL_KEY("data.augment_train", augment_train),
      FSL_BOOL_KEY("data.augment_test", augment_test),
      Key{"output.dir", [](const TrainConfig& c) { return c.out_dir; },
          [](TrainConfig& c, const std::string& v) { c.out_dir = v; }, false},
      FSL_BOOL_KEY("output.record_wallclock", record_wallclock),
  };
  return table;
}

#undef FSL_SIZE_KEY
#undef FSL_DOUBLE_KEY
#undef FSL_BOOL_KEY

// Config text with the keys a resumed run may change cleared.
std::string resume_identity(TrainConfig c)
{
  c.total_steps = 0;
  c.out_dir.clear();
  c.data_root.clear();
  return c.to_text();
}

void accumulate(EvalResult& r, const std::vector<Tensor>& logits,
                const std::vector<Episode>& episodes, double& loss_sum)
{
  for (std::size_t i = 0; i < episodes.size(); ++i)
  {
    const Tensor loss = episode_loss(logits[i], episodes[i].query_labels);
    loss_sum += loss.item();
    const auto predicted = predict(logits[i]);
    for (std::size_t q = 0; q < predicted.size(); ++q)
      r.correct += predicted[q] == episodes[i].query_labels[q] ? 1 : 0;
    r.total += predicted.size();
  }
}

} // namespace

// ---- configuration --------------------------------------------------------

void TrainConfig::validate() const
{
  backbone.validate();
  gnn.validate();
  if (episode.n_way < 2)
    throw ConfigError("episode.n_way must be at least 2");
  if (episode.k_shot < 1)
    throw ConfigError("episode.k_shot must be at least 1");
  if (episode.queries < 1)
    throw ConfigError("episode.queries must be at least 1");
  if (episodes_per_step < 1)
    throw ConfigError("train.episodes_per_step must be at least 1");
  if (log_interval < 1)
    throw ConfigError("train.log_interval must be at least 1");
  if (eval_interval < 1)
    throw ConfigError("eval.interval must be at least 1");
  if (eval_episodes < 1)
    throw ConfigError("eval.episodes must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr))
    throw ConfigError("optim.lr must be positive and finite");
  if (optimizer != "adam" && optimizer != "sgd")
    throw ConfigError("optim.kind must be adam or sgd, got '" + optimizer + "'");
  if (n_train_classes < 1)
    throw ConfigError("data.n_train must be at least 1");
  if (out_dir.empty())
    throw ConfigError("output.dir must not be empty");
}

std::string TrainConfig::to_text() const
{
  std::string out;
  for (const Key& k : keys())
    out += std::string(k.name) + " = " + k.get(*this) + "\n";
  return out;
}

TrainConfig TrainConfig::from_text(const std::string& text)
{
  TrainConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line))
  {
    ++number;
    const std::string body = trim(line);
    if (body.empty() || body[0] == '#')
      continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    const auto it = std::find_if(keys().begin(), keys().end(),
                                 [&](const Key& k) { return key == k.name; });
    if (it == keys().end())
      throw ConfigError("config line " + std::to_string(number) + ": unknown key '" + key + "'");
    try
    {
      it->set(c, value);
    }
    catch (const ConfigError& e)
    {
      throw ConfigError("config line " + std::to_string(number) + ": " + e.what());
    }
  }
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return from_text(text.str());
}

void TrainConfig::save(const std::filesystem::path& path) const
{
  std::ofstream out(path, std::ios::binary);
  out << to_text();
  if (!out)
    throw IoError("cannot write config " + path.string());
}

std::string TrainConfig::resolved_data_root() const
{
  if (!data_root.empty())
    return data_root;
  if (const char* env = std::getenv("OMNIGLOT_ROOT"); env && *env)
    return env;
  throw ConfigError("no dataset: set data.root or OMNIGLOT_ROOT");
}

// ---- metrics --------------------------------------------------------------

std::string format_row(const MetricsRow& row)
{
  return std::to_string(row.step) + "," + row.split + "," + format_fixed(row.loss) + "," +
         format_fixed(row.accuracy) + "," + format_fixed(row.ci95) + "," +
         format_fixed(row.seconds);
}

MetricsRow parse_row(const std::string& line)
{
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ','))
    cells.push_back(trim(cell));
  if (cells.size() != 6)
    throw IntegrityError("metrics row needs 6 columns: '" + line + "'");
  MetricsRow r;
  std::uint64_t step = 0;
  if (!parse_size(cells[0], step))
    throw IntegrityError("metrics row: bad step '" + cells[0] + "'");
  r.step = static_cast<std::size_t>(step);
  r.split = cells[1];
  if (r.split != "train" && r.split != "test")
    throw IntegrityError("metrics row: split must be train or test, got '" + r.split + "'");
  double* fields[] = {&r.loss, &r.accuracy, &r.ci95, &r.seconds};
  for (std::size_t i = 0; i < 4; ++i)
    if (!parse_double(cells[2 + i], *fields[i]))
      throw IntegrityError("metrics row: bad number '" + cells[2 + i] + "'");
  if (r.accuracy < 0.0 || r.accuracy > 1.0 || r.ci95 < 0.0)
    throw IntegrityError("metrics row: accuracy or ci95 out of range: '" + line + "'");
  return r;
}

MetricsFile read_metrics(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot read metrics " + path.string());
  MetricsFile m;
  std::string line;
  bool columns = false;
  while (std::getline(in, line))
  {
    if (line.empty())
      continue;
    if (!columns)
    {
      if (line[0] == '#')
      {
        m.header.push_back(trim(line.substr(1)));
        continue;
      }
      if (line != kMetricsColumns)
        throw IntegrityError("metrics " + path.string() + ": expected the column line, got '" +
                             line + "'");
      columns = true;
      continue;
    }
    m.rows.push_back(parse_row(line));
  }
  if (!columns)
    throw IntegrityError("metrics " + path.string() + ": no column line");
  return m;
}

double ci95(double accuracy, std::size_t n)
{
  if (n == 0)
    return 0.0;
  return 1.96 * std::sqrt(std::max(0.0, accuracy * (1.0 - accuracy)) / static_cast<double>(n));
}

std::vector<std::string> metrics_header(const TrainConfig& config)
{
  std::vector<std::string> h;
  h.push_back("# fewshot-lab metrics v1");
  h.push_back("# split: first " + std::to_string(config.n_train_classes) +
              " base classes in sorted (alphabet, character) order train, the rest test; "
              "train rotations " + (config.augment_train ? "x4" : "x1") +
              ", test rotations " + (config.augment_test ? "x4" : "x1"));
  for (const Key& k : keys())
    if (k.echoed)
      h.push_back(std::string("# config ") + k.name + " = " + k.get(config));
  return h;
}

// ---- evaluation -----------------------------------------------------------

std::vector<int> predict(const Tensor& logits)
{
  if (logits.rank() != 2)
    throw DimensionError("predict: logits must be [Q,N], got " + to_string(logits.shape()));
  const std::size_t Q = logits.dim(0), N = logits.dim(1);
  const auto d = logits.data();
  std::vector<int> out(Q);
  for (std::size_t q = 0; q < Q; ++q)
  {
    std::size_t best = 0;
    for (std::size_t n = 1; n < N; ++n)
      if (d[q * N + n] > d[q * N + best])
        best = n;
    out[q] = static_cast<int>(best);
  }
  return out;
}

EvalResult evaluate(FewShotModel& model, const ImageBank& bank,
                    const std::vector<CharacterClass>& classes, const EpisodeSpec& spec,
                    std::size_t episodes, std::uint64_t seed)
{
  if (spec.n_way != model.head->n_way)
    throw ContractError("evaluate: model is " + std::to_string(model.head->n_way) +
                        "-way, spec asks for " + std::to_string(spec.n_way) + "-way");
  const bool was_training = model.training();
  model.eval();
  NoGradGuard no_grad;
  Rng rng(seed);
  EvalResult r;
  double loss_sum = 0.0;
  constexpr std::size_t kChunk = 10;
  try
  {
    for (std::size_t done = 0; done < episodes;)
    {
      const std::size_t n = std::min(kChunk, episodes - done);
      std::vector<Episode> batch;
      for (std::size_t i = 0; i < n; ++i)
        batch.push_back(sample_episode(bank, classes, spec, rng));
      accumulate(r, model.forward_batch(batch), batch, loss_sum);
      done += n;
    }
  }
  catch (...)
  {
    model.train(was_training);
    throw;
  }
  model.train(was_training);
  r.loss = episodes ? loss_sum / static_cast<double>(episodes) : 0.0;
  r.accuracy = r.total ? static_cast<double>(r.correct) / static_cast<double>(r.total) : 0.0;
  r.ci95 = ci95(r.accuracy, r.total);
  return r;
}

// ---- checkpoints ----------------------------------------------------------

Container make_checkpoint(const TrainConfig& config, const FewShotModel& model,
                          const Optimizer* optimizer, const TrainState& state)
{
  Container c;
  c.put_text("config", config.to_text());
  c.put_u64("state.step", {state.step});
  c.put_text("state.rng", state.rng_state);
  c.put_f64("state.elapsed", {1}, {state.elapsed});
  c.put_f64("state.window_loss", {1}, {state.window_loss});
  c.put_u64("state.window", {state.window_correct, state.window_queries, state.window_steps});
  for (const Parameter& p : model.parameters())
    c.put("param." + p.name, p.tensor);
  for (const Parameter& b : model.buffers())
    c.put("buffer." + b.name, b.tensor);
  if (optimizer)
  {
    c.put_text("optim.kind", optimizer->kind());
    for (const Parameter& s : optimizer->state())
      c.put("optim." + s.name, s.tensor);
  }
  return c;
}

namespace {

void copy_into(const Container& c, const std::string& name, Tensor& dst)
{
  const Tensor src = c.tensor(name);
  if (src.shape() != dst.shape())
    throw IntegrityError("checkpoint: " + name + " has shape " + to_string(src.shape()) +
                         ", model expects " + to_string(dst.shape()));
  const auto s = src.data();
  std::copy(s.begin(), s.end(), dst.data().begin());
}

} // namespace

void restore_checkpoint(const Container& c, FewShotModel& model, Optimizer* optimizer,
                        TrainState& state)
{
  std::size_t expected = 0;
  for (Parameter& p : model.parameters())
  {
    copy_into(c, "param." + p.name, p.tensor);
    ++expected;
  }
  for (Parameter& b : model.buffers())
  {
    copy_into(c, "buffer." + b.name, b.tensor);
    ++expected;
  }
  std::size_t stored = 0;
  for (const Record& r : c.records())
    if (r.name.rfind("param.", 0) == 0 || r.name.rfind("buffer.", 0) == 0)
      ++stored;
  if (stored != expected)
    throw IntegrityError("checkpoint: holds " + std::to_string(stored) +
                         " parameter and buffer tensors, model has " + std::to_string(expected));

  if (optimizer)
  {
    const std::string kind = c.text("optim.kind");
    if (kind != optimizer->kind())
      throw IntegrityError("checkpoint: optimizer is " + kind + ", run uses " + optimizer->kind());
    std::vector<Parameter> saved;
    for (const Record& r : c.records())
      if (r.name.rfind("optim.", 0) == 0 && r.name != "optim.kind")
        saved.push_back({r.name.substr(6), c.tensor(r.name)});
    try
    {
      optimizer->load_state(saved);
    }
    catch (const ContractError& e)
    {
      throw IntegrityError(std::string("checkpoint: ") + e.what());
    }
  }

  const auto step = c.u64("state.step");
  const auto window = c.u64("state.window");
  const Tensor elapsed = c.tensor("state.elapsed");
  const Tensor window_loss = c.tensor("state.window_loss");
  if (step.size() != 1 || window.size() != 3 || elapsed.numel() != 1 || window_loss.numel() != 1)
    throw IntegrityError("checkpoint: malformed state records");
  state.step = static_cast<std::size_t>(step[0]);
  state.rng_state = c.text("state.rng");
  state.elapsed = elapsed.item();
  state.window_loss = window_loss.item();
  state.window_correct = static_cast<std::size_t>(window[0]);
  state.window_queries = static_cast<std::size_t>(window[1]);
  state.window_steps = static_cast<std::size_t>(window[2]);
}

TrainConfig checkpoint_config(const Container& c) { return TrainConfig::from_text(c.text("config")); }

// ---- training -------------------------------------------------------------

Trainer::Trainer(const TrainConfig& config, const ImageBank& bank)
    : config_(config), bank_(bank), rng_(derive_seed(config.seed, 1))
{
  config_.validate();
  if (bank_.class_count() <= config_.n_train_classes)
    throw ContractError("dataset has " + std::to_string(bank_.class_count()) +
                        " base classes, need more than data.n_train = " +
                        std::to_string(config_.n_train_classes));
  split_ = split_classes(bank_.class_count(), config_.n_train_classes, config_.augment_train,
                         config_.augment_test);
  // Surface unsatisfiable episode specs now rather than at step 1.
  Rng probe(0);
  sample_episode(bank_, split_.train, config_.episode, probe);
  sample_episode(bank_, split_.test, config_.episode, probe);

  Rng init(config_.seed);
  model_ = std::make_unique<FewShotModel>(config_.backbone, config_.gnn, config_.episode.n_way,
                                          init);
  optimizer_ = make_optimizer(config_.optimizer, model_->parameters(), config_.lr);
  state_.rng_state = rng_.state();
}

void Trainer::resume(const std::filesystem::path& checkpoint)
{
  const Container c = Container::load(checkpoint);
  const TrainConfig saved = checkpoint_config(c);
  if (resume_identity(saved) != resume_identity(config_))
    throw ConfigError("resume: " + checkpoint.string() +
                      " was written with a different configuration");
  restore_checkpoint(c, *model_, optimizer_.get(), state_);
  rng_.set_state(state_.rng_state);
  resumed_ = true;
}

std::filesystem::path Trainer::metrics_path() const
{
  return std::filesystem::path(config_.out_dir) / "metrics.csv";
}

std::filesystem::path Trainer::checkpoint_path(std::size_t step) const
{
  return std::filesystem::path(config_.out_dir) / ("checkpoint_" + std::to_string(step) + ".fsl");
}

double Trainer::now() const
{
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

void Trainer::open_metrics(bool resuming)
{
  std::error_code ec;
  std::filesystem::create_directories(config_.out_dir, ec);
  if (ec)
    throw IoError("cannot create " + config_.out_dir + ": " + ec.message());

  std::vector<MetricsRow> kept;
  if (resuming && std::filesystem::exists(metrics_path()))
    for (const MetricsRow& r : read_metrics(metrics_path()).rows)
      if (r.step <= state_.step)
        kept.push_back(r);

  const std::filesystem::path tmp = metrics_path().string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    for (const std::string& line : metrics_header(config_))
      out << line << "\n";
    out << kMetricsColumns << "\n";
    for (const MetricsRow& r : kept)
      out << format_row(r) << "\n";
    if (!out)
      throw IoError("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, metrics_path(), ec);
  if (ec)
    throw IoError("cannot write " + metrics_path().string() + ": " + ec.message());
}

void Trainer::append(const MetricsRow& row, const std::function<void(const MetricsRow&)>& on_row)
{
  std::ofstream out(metrics_path(), std::ios::binary | std::ios::app);
  out << format_row(row) << "\n";
  if (!out)
    throw IoError("cannot append to " + metrics_path().string());
  if (on_row)
    on_row(row);
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const
{
  make_checkpoint(config_, *model_, optimizer_.get(), state_).save(path);
}

double Trainer::train_step()
{
  const std::size_t step = state_.step + 1;
  std::vector<Episode> episodes;
  episodes.reserve(config_.episodes_per_step);
  for (std::size_t i = 0; i < config_.episodes_per_step; ++i)
    episodes.push_back(sample_episode(bank_, split_.train, config_.episode, rng_));

  double value = 0.0;
  try
  {
    model_->train();
    optimizer_->zero_grad();
    const std::vector<Tensor> logits = model_->forward_batch(episodes);
    Tensor total;
    for (std::size_t i = 0; i < episodes.size(); ++i)
    {
      const Tensor l = episode_loss(logits[i], episodes[i].query_labels);
      total = total.defined() ? add(total, l) : l;
    }
    const Tensor loss = scale(total, 1.0 / static_cast<double>(episodes.size()));
    value = loss.item();
    if (!std::isfinite(value))
      throw NonFiniteError("loss is " + format_double(value));
    loss.backward();
    optimizer_->step();

    for (std::size_t i = 0; i < episodes.size(); ++i)
    {
      const auto predicted = predict(logits[i]);
      for (std::size_t q = 0; q < predicted.size(); ++q)
        state_.window_correct += predicted[q] == episodes[i].query_labels[q] ? 1 : 0;
      state_.window_queries += predicted.size();
    }
  }
  catch (const NonFiniteError& e)
  {
    throw NonFiniteError("step " + std::to_string(step) + ": " + e.what());
  }
  state_.step = step;
  state_.window_loss += value;
  state_.window_steps += 1;
  state_.rng_state = rng_.state();
  return value;
}

EvalResult Trainer::evaluate_test(std::size_t episodes) const
{
  return evaluate(*model_, bank_, split_.test, config_.episode, episodes,
                  derive_seed(derive_seed(config_.seed, 2), state_.step));
}

void Trainer::run(const std::function<void(const MetricsRow&)>& on_row)
{
  open_metrics(resumed_);
  clock_start_ = now();
  const double elapsed_before = state_.elapsed;
  auto seconds = [&] {
    if (config_.record_wallclock)
      state_.elapsed = elapsed_before + (now() - clock_start_);
    return state_.elapsed;
  };

  while (state_.step < config_.total_steps)
  {
    train_step();
    const std::size_t step = state_.step;
    if (step % config_.log_interval == 0)
    {
      MetricsRow row;
      row.step = step;
      row.split = "train";
      row.loss = state_.window_loss / static_cast<double>(state_.window_steps);
      row.accuracy = static_cast<double>(state_.window_correct) /
                     static_cast<double>(state_.window_queries);
      row.ci95 = ci95(row.accuracy, state_.window_queries);
      row.seconds = seconds();
      append(row, on_row);
      state_.window_loss = 0.0;
      state_.window_correct = state_.window_queries = state_.window_steps = 0;
    }
    if (step % config_.eval_interval == 0)
    {
      const EvalResult r = evaluate_test(config_.eval_episodes);
      MetricsRow row;
      row.step = step;
      row.split = "test";
      row.loss = r.loss;
      row.accuracy = r.accuracy;
      row.ci95 = r.ci95;
      row.seconds = seconds();
      append(row, on_row);
      save_checkpoint(checkpoint_path(step));
    }
  }
  seconds();
  save_checkpoint(std::filesystem::path(config_.out_dir) / "final.fsl");
}

} // namespace fsl
