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

#include "fsl/data.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include "fsl/error.hpp"
#include "fsl/image.hpp"

namespace fsl {

namespace fs = std::filesystem;

namespace {

std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories)
{
  std::vector<fs::path> out;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec))
  {
    if (directories ? entry.is_directory() : entry.is_regular_file())
      out.push_back(entry.path());
  }
  if (ec)
    throw IoError("cannot list " + dir.string() + ": " + ec.message());
  std::sort(out.begin(), out.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  return out;
}

bool is_png(const fs::path& p)
{
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png";
}

std::string join_lines(const std::vector<std::string>& items)
{
  std::string out;
  for (const auto& s : items)
  {
    if (s.find('\n') != std::string::npos)
      throw ContractError("name contains a newline: " + s);
    out += s;
    out += '\n';
  }
  return out;
}

std::vector<std::string> split_lines(const std::string& text)
{
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    out.push_back(line);
  return out;
}

} // namespace

// ---- ingest ---------------------------------------------------------------

std::size_t RawDataset::alphabet_count() const
{
  std::set<std::string> names;
  for (const auto& c : classes)
    names.insert(c.alphabet);
  return names.size();
}

std::size_t RawDataset::image_count() const
{
  std::size_t n = 0;
  for (const auto& c : classes)
    n += c.files.size();
  return n;
}

RawDataset ingest(const fs::path& root)
{
  std::error_code ec;
  if (!fs::is_directory(root, ec))
    throw IoError("dataset root not found: " + root.string());

  // The distribution ships two top-level halves; accept either layout.
  std::vector<fs::path> alphabet_dirs;
  for (const fs::path& dir : sorted_entries(root, true))
  {
    const std::string name = dir.filename().string();
    if (name.rfind("images_", 0) == 0)
      for (const fs::path& inner : sorted_entries(dir, true))
        alphabet_dirs.push_back(inner);
    else
      alphabet_dirs.push_back(dir);
  }

  RawDataset raw;
  raw.root = root;
  for (const fs::path& alphabet : alphabet_dirs)
    for (const fs::path& character : sorted_entries(alphabet, true))
    {
      BaseClass c;
      c.alphabet = alphabet.filename().string();
      c.character = character.filename().string();
      for (const fs::path& file : sorted_entries(character, false))
        if (is_png(file))
          c.files.push_back(file);
      raw.classes.push_back(std::move(c));
    }

  std::sort(raw.classes.begin(), raw.classes.end(), [](const BaseClass& a, const BaseClass& b) {
    return std::tie(a.alphabet, a.character) < std::tie(b.alphabet, b.character);
  });
  for (std::size_t i = 1; i < raw.classes.size(); ++i)
    if (raw.classes[i].alphabet == raw.classes[i - 1].alphabet &&
        raw.classes[i].character == raw.classes[i - 1].character)
      throw IntegrityError("duplicate class " + raw.classes[i].alphabet + "/" +
                           raw.classes[i].character);
  if (raw.classes.empty())
    throw IntegrityError("no alphabet/character directories under " + root.string());
  for (const auto& c : raw.classes)
    if (c.files.size() < 2)
      throw IntegrityError("class " + c.alphabet + "/" + c.character + " has " +
                           std::to_string(c.files.size()) + " exemplar(s), need at least 2");
  return raw;
}

// ---- image bank -----------------------------------------------------------

ImageBank ImageBank::from_pixels(std::vector<ClassInfo> classes, std::vector<double> pixels)
{
  std::size_t next = 0;
  for (auto& c : classes)
  {
    c.first = next;
    next += c.count;
  }
  if (next * kPixels != pixels.size())
    throw IntegrityError("image bank: " + std::to_string(pixels.size()) +
                         " pixels do not match " + std::to_string(next) + " images");
  ImageBank bank;
  bank.classes_ = std::move(classes);
  bank.pixels_ = std::move(pixels);
  return bank;
}

ImageBank ImageBank::from_raw(const RawDataset& raw)
{
  std::vector<ClassInfo> classes;
  std::vector<double> pixels;
  pixels.reserve(raw.image_count() * kPixels);
  for (const auto& c : raw.classes)
  {
    classes.push_back({c.alphabet, c.character, 0, c.files.size()});
    for (const auto& file : c.files)
    {
      Tensor t = preprocess(read_png(file));
      pixels.insert(pixels.end(), t.data().begin(), t.data().end());
    }
  }
  return from_pixels(std::move(classes), std::move(pixels));
}

Container ImageBank::to_container() const
{
  Container c;
  std::vector<std::string> alphabets, characters;
  std::vector<std::uint64_t> counts;
  for (const auto& info : classes_)
  {
    alphabets.push_back(info.alphabet);
    characters.push_back(info.character);
    counts.push_back(info.count);
  }
  c.put_text("bank.alphabets", join_lines(alphabets));
  c.put_text("bank.characters", join_lines(characters));
  c.put_u64("bank.counts", std::move(counts));
  c.put_f64("bank.images", {image_count(), 28, 28}, pixels_);
  return c;
}

ImageBank ImageBank::from_container(const Container& c)
{
  const auto alphabets = split_lines(c.text("bank.alphabets"));
  const auto characters = split_lines(c.text("bank.characters"));
  const auto counts = c.u64("bank.counts");
  if (alphabets.size() != counts.size() || characters.size() != counts.size())
    throw IntegrityError("image bank: name and count records disagree");
  std::vector<ClassInfo> classes;
  for (std::size_t i = 0; i < counts.size(); ++i)
    classes.push_back({alphabets[i], characters[i], 0, counts[i]});
  return from_pixels(std::move(classes), c.get("bank.images", DType::f64).f64);
}

std::size_t ImageBank::alphabet_count() const
{
  std::set<std::string> names;
  for (const auto& c : classes_)
    names.insert(c.alphabet);
  return names.size();
}

const double* ImageBank::image(std::size_t class_id, std::size_t exemplar) const
{
  const ClassInfo& c = classes_.at(class_id);
  if (exemplar >= c.count)
    throw ContractError("image bank: class " + std::to_string(class_id) + " has no exemplar " +
                        std::to_string(exemplar));
  return pixels_.data() + (c.first + exemplar) * kPixels;
}

ImageBank load_bank(const fs::path& root_or_cache)
{
  std::error_code ec;
  if (fs::is_regular_file(root_or_cache, ec))
    return ImageBank::from_container(Container::load(root_or_cache));
  return ImageBank::from_raw(ingest(root_or_cache));
}

// ---- split and augmentation -----------------------------------------------

std::vector<CharacterClass> augment_rotations(const std::vector<CharacterClass>& classes)
{
  std::vector<CharacterClass> out;
  out.reserve(classes.size() * 4);
  for (const auto& c : classes)
  {
    if (c.rotation != 0)
      throw ContractError("augment_rotations: class of base " + std::to_string(c.base_id) +
                          " is already rotated");
    for (unsigned r = 0; r < 4; ++r)
      out.push_back({c.base_id, r * 90});
  }
  return out;
}

SplitDataset split_classes(std::size_t base_classes, std::size_t n_train, bool augment_train,
                           bool augment_test)
{
  if (n_train == 0 || base_classes <= n_train)
    throw ContractError("split_classes: " + std::to_string(base_classes) +
                        " base classes cannot give " + std::to_string(n_train) +
                        " train classes and a non-empty test split");
  SplitDataset s;
  for (std::size_t i = 0; i < base_classes; ++i)
    (i < n_train ? s.train : s.test).push_back({i, 0});
  if (augment_train)
    s.train = augment_rotations(s.train);
  if (augment_test)
    s.test = augment_rotations(s.test);
  return s;
}

// ---- sampler --------------------------------------------------------------

Episode sample_episode(const ImageBank& bank, const std::vector<CharacterClass>& split,
                       const EpisodeSpec& spec, Rng& rng)
{
  if (spec.n_way < 2 || spec.k_shot < 1 || spec.queries < 1)
    throw ContractError("sample_episode: need n_way >= 2, k_shot >= 1, queries >= 1");
  std::set<std::size_t> bases;
  for (const auto& c : split)
  {
    if (c.base_id >= bank.class_count())
      throw ContractError("sample_episode: base id " + std::to_string(c.base_id) +
                          " outside the bank");
    if (bank.info(c.base_id).count > spec.k_shot)
      bases.insert(c.base_id);
  }
  if (bases.size() < spec.n_way)
    throw ContractError("sample_episode: " + std::to_string(spec.n_way) + "-way " +
                        std::to_string(spec.k_shot) + "-shot needs " +
                        std::to_string(spec.n_way) + " base characters with more than " +
                        std::to_string(spec.k_shot) + " exemplars, split has " +
                        std::to_string(bases.size()));

  // Partial Fisher-Yates over the split, skipping a second rotation of a
  // base already drawn.
  std::vector<std::size_t> order(split.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<const CharacterClass*> chosen;
  std::set<std::size_t> used_bases;
  for (std::size_t i = 0; i < order.size() && chosen.size() < spec.n_way; ++i)
  {
    std::swap(order[i], order[i + rng.below(order.size() - i)]);
    const CharacterClass& c = split[order[i]];
    if (bank.info(c.base_id).count <= spec.k_shot || used_bases.count(c.base_id))
      continue;
    used_bases.insert(c.base_id);
    chosen.push_back(&c);
  }

  const std::size_t N = spec.n_way, K = spec.k_shot, Q = spec.queries;
  std::vector<std::vector<std::size_t>> exemplars(N);
  std::vector<std::size_t> next(N, K);
  for (std::size_t c = 0; c < N; ++c)
  {
    exemplars[c].resize(bank.info(chosen[c]->base_id).count);
    std::iota(exemplars[c].begin(), exemplars[c].end(), 0);
    rng.shuffle(exemplars[c]);
  }

  Episode e;
  e.n_way = N;
  e.k_shot = K;
  e.support_images = Tensor::zeros({N * K, 1, 28, 28});
  e.query_images = Tensor::zeros({Q, 1, 28, 28});
  auto put = [&](Tensor& dst, std::size_t slot, std::size_t c, std::size_t exemplar) {
    rotate90(bank.image(chosen[c]->base_id, exemplar),
             dst.data().data() + slot * ImageBank::kPixels, 28, chosen[c]->rotation / 90);
  };
  for (std::size_t c = 0; c < N; ++c)
    for (std::size_t k = 0; k < K; ++k)
    {
      put(e.support_images, c * K + k, c, exemplars[c][k]);
      e.support_labels.push_back(static_cast<int>(c));
    }
  for (std::size_t q = 0; q < Q; ++q)
  {
    std::vector<std::size_t> open;
    for (std::size_t c = 0; c < N; ++c)
      if (next[c] < exemplars[c].size())
        open.push_back(c);
    if (open.empty())
      throw ContractError("sample_episode: the drawn classes ran out of exemplars after " +
                          std::to_string(q) + " of " + std::to_string(Q) + " queries");
    const std::size_t c = open[rng.below(open.size())];
    put(e.query_images, q, c, exemplars[c][next[c]++]);
    e.query_labels.push_back(static_cast<int>(c));
  }
  return e;
}

} // namespace fsl
