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

#include "fsl/random.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "fsl/error.hpp"

namespace fsl {

std::uint64_t Rng::below(std::uint64_t n)
{
  if (n == 0)
    throw ContractError("Rng::below: empty range");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t draw;
  do
  {
    draw = engine_();
  } while (draw >= limit);
  return draw % n;
}

double Rng::normal()
{
  double u1 = uniform();
  while (u1 <= 0.0)
    u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::state() const
{
  std::ostringstream out;
  out << engine_;
  return out.str();
}

void Rng::set_state(const std::string& text)
{
  std::istringstream in(text);
  in >> engine_;
  if (in.fail())
    throw ContractError("Rng::set_state: malformed generator state");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

} // namespace fsl
