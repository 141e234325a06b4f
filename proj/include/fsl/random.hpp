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

#ifndef FSL_RANDOM_HPP
#define FSL_RANDOM_HPP

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace fsl {

// Seeded generator with platform-independent sampling helpers. The std
// distributions are implementation-defined, so the draws are derived here
// directly from the 64-bit engine output.
class Rng
{
public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n); rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller; one draw per call, no cached pair.
  double normal();

  template <class T>
  void shuffle(std::vector<T>& items)
  {
    for (std::size_t i = items.size(); i > 1; --i)
    {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // Textual engine state, restorable bit-exactly.
  std::string state() const;
  void set_state(const std::string& text);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

private:
  std::mt19937_64 engine_;
};

// Independent seed for stream `stream` of a run seeded with `seed`
// (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

} // namespace fsl

#endif // FSL_RANDOM_HPP
