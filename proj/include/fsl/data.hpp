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

#ifndef FSL_DATA_HPP
#define FSL_DATA_HPP

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "fsl/container.hpp"
#include "fsl/gnn.hpp"
#include "fsl/random.hpp"
#include "fsl/tensor.hpp"

namespace fsl {

constexpr std::size_t kOmniglotClasses = 1623;
constexpr std::size_t kOmniglotAlphabets = 50;
constexpr std::size_t kOmniglotTrainClasses = 1200;

// One character directory: root/alphabet/character/*.png.
struct BaseClass
{
  std::string alphabet;
  std::string character;
  std::vector<std::filesystem::path> files; // sorted
};

struct RawDataset
{
  std::filesystem::path root;
  std::vector<BaseClass> classes; // class_id = index, sorted by (alphabet, character)

  std::size_t alphabet_count() const;
  std::size_t image_count() const;
};

// Throws IoError for a missing root, IntegrityError for an empty tree or a
// class with fewer than two exemplars.
RawDataset ingest(const std::filesystem::path& root);

// Every exemplar preprocessed to 28x28 and held in one immutable pool.
class ImageBank
{
public:
  static constexpr std::size_t kPixels = 28 * 28;

  struct ClassInfo
  {
    std::string alphabet;
    std::string character;
    std::size_t first = 0; // index of the first exemplar in the pool
    std::size_t count = 0;
  };

  static ImageBank from_raw(const RawDataset& raw);
  static ImageBank from_container(const Container& c);
  Container to_container() const;

  // Builds a bank directly from images, one [n,28,28]-sized vector per class.
  static ImageBank from_pixels(std::vector<ClassInfo> classes, std::vector<double> pixels);

  std::size_t class_count() const { return classes_.size(); }
  std::size_t image_count() const { return pixels_.size() / kPixels; }
  std::size_t alphabet_count() const;
  const ClassInfo& info(std::size_t class_id) const { return classes_.at(class_id); }
  const double* image(std::size_t class_id, std::size_t exemplar) const;

private:
  std::vector<ClassInfo> classes_;
  std::vector<double> pixels_;
};

// Loads a bank from a PNG tree or from a `data prepare` cache file.
ImageBank load_bank(const std::filesystem::path& root_or_cache);

struct CharacterClass
{
  std::size_t base_id = 0;
  unsigned rotation = 0; // degrees: 0, 90, 180, 270
};

struct SplitDataset
{
  std::vector<CharacterClass> train;
  std::vector<CharacterClass> test;
};

// Each base class becomes four classes, one per quarter turn.
std::vector<CharacterClass> augment_rotations(const std::vector<CharacterClass>& classes);

// First n_train base ids train, the rest test; augmentation after the
// split. Throws ContractError when fewer than n_train + 1 bases exist.
SplitDataset split_classes(std::size_t base_classes, std::size_t n_train,
                           bool augment_train = true, bool augment_test = false);

struct EpisodeSpec
{
  std::size_t n_way = 5;
  std::size_t k_shot = 1;
  std::size_t queries = 1;
};

// N distinct classes (never two rotations of one base), K support
// exemplars each without replacement, `queries` query exemplars from those
// classes disjoint from the support. Support is class-grouped, labels are
// the order of the drawn classes.
Episode sample_episode(const ImageBank& bank, const std::vector<CharacterClass>& split,
                       const EpisodeSpec& spec, Rng& rng);

} // namespace fsl

#endif // FSL_DATA_HPP
