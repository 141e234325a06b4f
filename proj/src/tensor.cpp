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

#include "fsl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "fsl/error.hpp"

namespace fsl {

std::size_t numel(const Shape& shape)
{
  std::size_t n = 1;
  for (std::size_t d : shape)
    n *= d;
  return n;
}

std::string to_string(const Shape& shape)
{
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i)
    out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

namespace memory {
namespace {
std::atomic<std::size_t> live{0};
std::atomic<std::size_t> peak{0};
} // namespace

void on_allocate(std::size_t bytes)
{
  const std::size_t now = live.fetch_add(bytes, std::memory_order_relaxed) + bytes;
  std::size_t prev = peak.load(std::memory_order_relaxed);
  while (now > prev && !peak.compare_exchange_weak(prev, now, std::memory_order_relaxed))
  {
  }
}

void on_release(std::size_t bytes)
{
  live.fetch_sub(bytes, std::memory_order_relaxed);
}

std::size_t live_bytes()
{
  return live.load(std::memory_order_relaxed);
}

std::size_t peak_bytes()
{
  return peak.load(std::memory_order_relaxed);
}

void reset_peak()
{
  peak.store(live.load(std::memory_order_relaxed), std::memory_order_relaxed);
}

} // namespace memory

Buffer& Node::ensure_grad()
{
  if (grad.empty())
    grad.assign(data.size(), 0.0);
  return grad;
}

namespace {

thread_local bool recording = true;

NodePtr new_node(const Shape& shape, bool requires_grad)
{
  for (std::size_t d : shape)
    if (d == 0)
      throw DimensionError("tensor: zero-sized dimension in shape " + to_string(shape));
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->data.assign(fsl::numel(shape), 0.0);
  node->requires_grad = requires_grad;
  return node;
}

} // namespace

Tensor Tensor::zeros(const Shape& shape, bool requires_grad)
{
  return Tensor(new_node(shape, requires_grad));
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad)
{
  Tensor t = zeros(shape, requires_grad);
  std::fill(t.node_->data.begin(), t.node_->data.end(), value);
  return t;
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values, bool requires_grad)
{
  if (values.size() != fsl::numel(shape))
    throw DimensionError("tensor: " + std::to_string(values.size()) +
                         " values do not fill shape " + to_string(shape));
  Tensor t = zeros(shape, requires_grad);
  std::copy(values.begin(), values.end(), t.node_->data.begin());
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad)
{
  return full({1}, value, requires_grad);
}

Tensor Tensor::randn(const Shape& shape, Rng& rng, double stddev, bool requires_grad)
{
  Tensor t = zeros(shape, requires_grad);
  for (double& v : t.node_->data)
    v = stddev * rng.normal();
  return t;
}

Tensor Tensor::uniform(const Shape& shape, Rng& rng, double lo, double hi, bool requires_grad)
{
  Tensor t = zeros(shape, requires_grad);
  for (double& v : t.node_->data)
    v = rng.uniform(lo, hi);
  return t;
}

Tensor Tensor::eye(std::size_t n)
{
  Tensor t = zeros({n, n});
  for (std::size_t i = 0; i < n; ++i)
    t.node_->data[i * n + i] = 1.0;
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const
{
  if (axis >= rank())
    throw DimensionError("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                         to_string(shape()));
  return node_->shape[axis];
}

double Tensor::item() const
{
  if (numel() != 1)
    throw ContractError("tensor: item() on shape " + to_string(shape()));
  return node_->data[0];
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const
{
  if (index.size() != rank())
    throw DimensionError("tensor: index rank mismatch for shape " + to_string(shape()));
  std::size_t off = 0;
  std::size_t axis = 0;
  for (std::size_t i : index)
  {
    if (i >= node_->shape[axis])
      throw DimensionError("tensor: index out of range for shape " + to_string(shape()));
    off = off * node_->shape[axis] + i;
    ++axis;
  }
  return off;
}

double Tensor::at(std::initializer_list<std::size_t> index) const
{
  return node_->data[offset(index)];
}

double& Tensor::at(std::initializer_list<std::size_t> index)
{
  return node_->data[offset(index)];
}

Tensor& Tensor::set_requires_grad(bool on)
{
  node_->requires_grad = on;
  return *this;
}

void Tensor::zero_grad()
{
  if (!node_->grad.empty())
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::clear_grad()
{
  Buffer().swap(node_->grad);
}

void Tensor::backward() const
{
  if (numel() != 1)
    throw ContractError("backward: loss must be a scalar, got shape " + to_string(shape()));
  if (!node_->requires_grad)
    throw ContractError("backward: loss does not depend on any tensor that requires grad");

  // Iterative post-order DFS gives a topological order; each node appears once.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty())
  {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size())
    {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second)
        stack.emplace_back(child, 0);
    }
    else
    {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Intermediate gradients are per-pass; only leaves accumulate across passes.
  // Earlier leaf gradients are set aside and added back at the end so that a
  // second identical pass yields exactly twice the first.
  std::vector<std::pair<Node*, Buffer>> earlier;
  for (Node* n : order)
  {
    if (!n->is_leaf())
      Buffer().swap(n->grad);
    else if (!n->grad.empty())
    {
      earlier.emplace_back(n, Buffer());
      earlier.back().second.swap(n->grad);
    }
  }

  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
  {
    Node* n = *it;
    if (n->is_leaf())
      continue;
    if (!n->grad.empty())
      n->backward(*n);
    Buffer().swap(n->grad);
  }

  for (auto& [n, prior] : earlier)
  {
    if (n->grad.empty())
      n->grad.swap(prior);
    else
      for (std::size_t i = 0; i < prior.size(); ++i)
        n->grad[i] = prior[i] + n->grad[i];
  }
}

Tensor Tensor::detach() const
{
  Tensor t = zeros(shape());
  std::copy(node_->data.begin(), node_->data.end(), t.node_->data.begin());
  return t;
}

NoGradGuard::NoGradGuard() : previous_(recording)
{
  recording = false;
}

NoGradGuard::~NoGradGuard()
{
  recording = previous_;
}

bool grad_enabled()
{
  return recording;
}

namespace detail {

Tensor make_result(const Shape& shape, std::string op, const std::vector<Tensor>& inputs)
{
  bool track = false;
  if (recording)
    for (const Tensor& t : inputs)
      track = track || t.requires_grad();
  Tensor out(new_node(shape, track));
  out.node()->op = std::move(op);
  if (track)
    for (const Tensor& t : inputs)
      out.node()->inputs.push_back(t.node());
  return out;
}

Tensor make_result(const Shape& shape, std::string op, std::initializer_list<Tensor> inputs)
{
  return make_result(shape, std::move(op), std::vector<Tensor>(inputs));
}

void check_finite(const Tensor& t, std::string_view op)
{
  for (double v : t.data())
    if (!std::isfinite(v))
      throw NonFiniteError("non-finite value produced by " + std::string(op) + " (shape " +
                           to_string(t.shape()) + ")");
}

} // namespace detail

} // namespace fsl
