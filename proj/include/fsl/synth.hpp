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

#ifndef FSL_SYNTH_HPP
#define FSL_SYNTH_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "fsl/data.hpp"
#include "fsl/image.hpp"
#include "fsl/random.hpp"

namespace fsl {

// Procedural handwritten-character stand-in laid out like the Omniglot
// tree (alphabet/characterNN/CCCC_EE.png, 105x105 binary pages). Each
// alphabet owns a small stroke vocabulary; a character is 2-4 strokes from
// it; an exemplar redraws the character with point jitter, a small affine
// warp and its own pen width.
struct SynthOptions
{
  std::size_t alphabets = 50;
  std::size_t characters = 1623; // spread as evenly as possible over alphabets
  std::size_t exemplars = 20;
  std::size_t size = 105;
  std::uint64_t seed = 20260101;
  double jitter = 0.03; // control-point noise, fraction of the page
};

// A cubic Bezier stroke in unit page coordinates.
struct Stroke
{
  double x[4], y[4];
};

struct Glyph
{
  std::vector<Stroke> strokes;
};

// Glyph of character `index` of alphabet `alphabet`; a pure function of
// the options' seed.
Glyph synth_glyph(const SynthOptions& options, std::size_t alphabet, std::size_t index);

// One drawn exemplar of a glyph.
GrayImage synth_exemplar(const SynthOptions& options, const Glyph& glyph, Rng& rng);

// Writes the whole tree under root. Returns the number of images written.
std::size_t synthesize(const std::filesystem::path& root, const SynthOptions& options);

// The bank that ingesting synthesize()'s tree would produce, built in memory.
ImageBank synth_bank(const SynthOptions& options);

} // namespace fsl

#endif // FSL_SYNTH_HPP
