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

#ifndef FSL_TENSOR_HPP
#define FSL_TENSOR_HPP

#include <atomic>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fsl/random.hpp"

namespace fsl {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

// Byte accounting for every tensor buffer (values and gradients).
namespace memory {

void on_allocate(std::size_t bytes);
void on_release(std::size_t bytes);
std::size_t live_bytes();
std::size_t peak_bytes();
// Sets the peak to the current live count.
void reset_peak();

} // namespace memory

template <class T>
struct TrackingAllocator
{
  using value_type = T;

  TrackingAllocator() = default;
  template <class U>
  TrackingAllocator(const TrackingAllocator<U>&) noexcept
  {
  }

  T* allocate(std::size_t n)
  {
    memory::on_allocate(n * sizeof(T));
    return std::allocator<T>{}.allocate(n);
  }
  void deallocate(T* p, std::size_t n) noexcept
  {
    memory::on_release(n * sizeof(T));
    std::allocator<T>{}.deallocate(p, n);
  }

  template <class U>
  bool operator==(const TrackingAllocator<U>&) const noexcept
  {
    return true;
  }
};

using Buffer = std::vector<double, TrackingAllocator<double>>;

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One recorded value. Non-leaf nodes keep their inputs alive and a closure
// that pushes this node's gradient into them; the set of nodes reachable
// from a loss is the computation record that backward() walks.
struct Node
{
  Shape shape;
  Buffer data;
  Buffer grad;
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<NodePtr> inputs;
  std::function<void(Node& self)> backward;

  bool is_leaf() const { return !backward; }
  // Zero-filled on first use.
  Buffer& ensure_grad();
};

class Tensor
{
public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(const Shape& shape, Rng& rng, double stddev = 1.0, bool requires_grad = false);
  static Tensor uniform(const Shape& shape, Rng& rng, double lo, double hi,
                        bool requires_grad = false);
  static Tensor eye(std::size_t n);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node_->data.size(); }

  // Views into the node; not available on temporaries, whose storage may die
  // with them.
  std::span<double> data() & { return {node_->data.data(), node_->data.size()}; }
  std::span<const double> data() const& { return {node_->data.data(), node_->data.size()}; }
  std::span<const double> data() const&& = delete;
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;
  double& at(std::initializer_list<std::size_t> index);

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const& { return {node_->grad.data(), node_->grad.size()}; }
  std::span<double> grad() & { return {node_->grad.data(), node_->grad.size()}; }
  std::span<const double> grad() const&& = delete;
  void zero_grad();
  void clear_grad();

  // Reverse traversal from this scalar. Leaf gradients accumulate (+=).
  void backward() const;

  // Same values, no history.
  Tensor detach() const;

  const NodePtr& node() const { return node_; }
  const std::string& op() const { return node_->op; }

private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  NodePtr node_;
};

// Disables recording while alive (evaluation, finite differences).
class NoGradGuard
{
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
  bool previous_;
};

bool grad_enabled();

namespace detail {

// Allocates an output. It records `inputs` (and so will receive a backward
// closure) only when recording is on and some input requires grad.
Tensor make_result(const Shape& shape, std::string op, std::initializer_list<Tensor> inputs);
Tensor make_result(const Shape& shape, std::string op, const std::vector<Tensor>& inputs);

// Throws NonFiniteError naming `op` if any value is NaN or Inf.
void check_finite(const Tensor& t, std::string_view op);

} // namespace detail

} // namespace fsl

#endif // FSL_TENSOR_HPP
