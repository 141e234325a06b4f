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

#ifndef FSL_GRADSUITE_HPP
#define FSL_GRADSUITE_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace fsl {

struct GradSuiteEntry
{
  std::string name;
  std::string level; // op, layer, gnn or backbone
  std::size_t instances = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::string worst; // description of the worst instance
  bool passed() const { return max_rel_error < tolerance; }
};

struct GradSuiteOptions
{
  std::size_t instances = 5;
  std::uint64_t seed = 1;
  bool include_backbones = true;
  // Called after each entry completes.
  std::function<void(const GradSuiteEntry&)> progress;
};

// Central-difference checks of every differentiable op, every layer, the
// GNN pieces and, optionally, every whole backbone. Unit-level tolerance
// 1e-4, backbone level 1e-3.
std::vector<GradSuiteEntry> run_grad_suite(const GradSuiteOptions& options = {});

} // namespace fsl

#endif // FSL_GRADSUITE_HPP
