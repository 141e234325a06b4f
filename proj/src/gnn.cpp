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

#include "fsl/gnn.hpp"

#include <string>

#include "fsl/error.hpp"
#include "fsl/ops.hpp"

namespace fsl {

namespace {

// s[1,1] * x
Tensor scaled(const Tensor& s, const Tensor& x)
{
  return mul(broadcast_to(s, x.shape()), x);
}

Tensor scaled_identity(const Tensor& s, std::size_t n)
{
  return scaled(s, Tensor::eye(n));
}

void require_labels(const std::vector<int>& labels, std::size_t n_way, const char* what)
{
  for (int label : labels)
    if (label < 0 || static_cast<std::size_t>(label) >= n_way)
      throw ContractError(std::string(what) + ": label " + std::to_string(label) +
                          " outside [0," + std::to_string(n_way) + ")");
}

} // namespace

// ---- episode --------------------------------------------------------------

void Episode::validate() const
{
  if (n_way < 2 || k_shot < 1)
    throw ContractError("episode: need n_way >= 2 and k_shot >= 1, got n_way=" +
                        std::to_string(n_way) + " k_shot=" + std::to_string(k_shot));
  const Shape image{1, kImageSize, kImageSize};
  auto check_images = [&](const Tensor& t, const char* what) {
    if (!t.defined() || t.rank() != 4 || Shape(t.shape().begin() + 1, t.shape().end()) != image)
      throw DimensionError(std::string("episode: ") + what + " must be [n,1,28,28], got " +
                           (t.defined() ? to_string(t.shape()) : std::string("undefined")));
  };
  check_images(support_images, "support_images");
  check_images(query_images, "query_images");
  if (support_images.dim(0) != num_support() || support_labels.size() != num_support())
    throw ContractError("episode: expected " + std::to_string(num_support()) +
                        " support images and labels, got " +
                        std::to_string(support_images.dim(0)) + " and " +
                        std::to_string(support_labels.size()));
  if (num_query() == 0)
    throw ContractError("episode: no query images");
  require_labels(support_labels, n_way, "episode");
  std::vector<std::size_t> per_class(n_way, 0);
  for (int label : support_labels)
    ++per_class[static_cast<std::size_t>(label)];
  for (std::size_t c = 0; c < n_way; ++c)
    if (per_class[c] != k_shot)
      throw ContractError("episode: class " + std::to_string(c) + " has " +
                          std::to_string(per_class[c]) + " support images, expected " +
                          std::to_string(k_shot));
  if (!query_labels.empty())
  {
    if (query_labels.size() != num_query())
      throw ContractError("episode: " + std::to_string(query_labels.size()) +
                          " query labels for " + std::to_string(num_query()) + " queries");
    require_labels(query_labels, n_way, "episode");
  }
}

void GnnConfig::validate() const
{
  if (rounds < 1)
    throw ConfigError("gnn: rounds must be >= 1");
  if (hidden < 1)
    throw ConfigError("gnn: hidden must be >= 1");
  if (!(slope >= 0.0 && slope < 1.0))
    throw ConfigError("gnn: slope must lie in [0,1), got " + std::to_string(slope));
  if (!(embedding_norm >= 0.0) || !std::isfinite(embedding_norm))
    throw ConfigError("gnn: embedding_norm must be finite and >= 0");
}

// ---- operations -----------------------------------------------------------

Tensor build_node_features(const Tensor& embeddings, const std::vector<int>& support_labels,
                           std::size_t n_way, std::size_t k_shot)
{
  if (embeddings.rank() != 2)
    throw DimensionError("build_node_features: embeddings must be [V,e], got " +
                         to_string(embeddings.shape()));
  if (n_way < 1 || support_labels.size() != n_way * k_shot)
    throw ContractError("build_node_features: " + std::to_string(support_labels.size()) +
                        " support labels for " + std::to_string(n_way) + "-way " +
                        std::to_string(k_shot) + "-shot");
  const std::size_t V = embeddings.dim(0);
  const std::size_t S = support_labels.size();
  if (V <= S)
    throw ContractError("build_node_features: " + std::to_string(V) + " nodes leave no query after " +
                        std::to_string(S) + " support nodes");
  require_labels(support_labels, n_way, "build_node_features");

  std::vector<double> block(V * n_way, 1.0 / static_cast<double>(n_way));
  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t c = 0; c < n_way; ++c)
      block[i * n_way + c] = static_cast<std::size_t>(support_labels[i]) == c ? 1.0 : 0.0;
  return concat({embeddings, Tensor::from({V, n_way}, std::move(block))}, 1);
}

Tensor graph_conv(const Tensor& features, const Tensor& adjacency, const Tensor& w_id,
                  const Tensor& w_adj, double slope)
{
  if (features.rank() != 2 || adjacency.rank() != 2 || adjacency.dim(0) != features.dim(0) ||
      adjacency.dim(1) != features.dim(0) || w_id.shape() != w_adj.shape())
    throw DimensionError("graph_conv: features " + to_string(features.shape()) + ", adjacency " +
                         to_string(adjacency.shape()) + ", W_id " + to_string(w_id.shape()) +
                         ", W_adj " + to_string(w_adj.shape()));
  return leaky_relu(add(matmul(features, w_id), matmul(matmul(adjacency, features), w_adj)), slope);
}

namespace {

// Added to self-edge scores; exp() of it underflows to exactly zero.
constexpr double kNoEdge = -1e300;

} // namespace

// ---- psi ------------------------------------------------------------------

EdgeScorer::EdgeScorer(std::size_t embed_dim, std::size_t n_way, double slope, Rng& rng)
    : embed_dim(embed_dim), n_way(n_way), slope(slope)
{
  const std::size_t d = input_dim(), h = hidden();
  w_embed = init::fan_in_uniform({embed_dim, h}, d, rng);
  w_label = init::fan_in_uniform({1, h}, d, rng);
  b1 = Tensor::zeros({h});
  w2 = init::fan_in_uniform({h, 1}, h, rng);
  // Start as a decreasing function of |f_i - f_j|: nearer nodes score higher.
  for (Tensor* w : {&w_embed, &w_label})
    for (double& v : w->data())
      v = std::abs(v);
  for (double& v : w2.data())
    v = -std::abs(v);
  b2 = Tensor::zeros({1});
  register_parameter("w_embed", w_embed);
  register_parameter("w_label", w_label);
  register_parameter("b1", b1);
  register_parameter("w2", w2);
  register_parameter("b2", b2);
}

Tensor EdgeScorer::first_layer() const
{
  return concat({w_embed, broadcast_to(w_label, {n_way, hidden()})}, 0);
}

Tensor EdgeScorer::scores(const Tensor& features) const
{
  if (features.rank() != 2 || features.dim(1) != input_dim())
    throw DimensionError("edge scorer: expected [V," + std::to_string(input_dim()) + "], got " +
                         to_string(features.shape()));
  const std::size_t V = features.dim(0);
  if (V < 2)
    throw ContractError("edge scorer: need at least 2 nodes");
  Tensor hidden = leaky_relu(linear(pairwise_absdiff(features), first_layer(), b1), slope);
  return reshape(linear(hidden, w2, b2), {V, V});
}

Tensor learn_adjacency(const Tensor& features, const EdgeScorer& psi)
{
  const Tensor scores = psi.scores(features);
  const std::size_t V = scores.dim(0);
  Tensor mask = Tensor::zeros({V, V});
  for (std::size_t i = 0; i < V; ++i)
    mask.at({i, i}) = kNoEdge;
  return softmax(add(scores, mask), 1);
}

// ---- graph convolution ----------------------------------------------------

GraphConvLayer::GraphConvLayer(std::size_t in_embed, std::size_t out_embed, std::size_t n_way,
                               double slope, Rng& rng)
    : w_id(init::fan_in_uniform({in_embed, out_embed}, in_embed, rng)),
      w_adj(init::fan_in_uniform({in_embed, out_embed}, in_embed, rng)),
      label_id(Tensor::full({1, 1}, 1.0)), label_adj(Tensor::full({1, 1}, 1.0)),
      in_embed(in_embed), out_embed(out_embed), n_way(n_way), slope(slope)
{
  register_parameter("w_id", w_id);
  register_parameter("w_adj", w_adj);
  register_parameter("label_id", label_id);
  register_parameter("label_adj", label_adj);
}

Tensor GraphConvLayer::forward(const Tensor& features, const Tensor& adjacency) const
{
  if (features.rank() != 2 || features.dim(1) != in_embed + n_way)
    throw DimensionError("graph conv layer: expected [V," + std::to_string(in_embed + n_way) +
                         "], got " + to_string(features.shape()));
  const std::size_t V = features.dim(0);
  if (adjacency.shape() != Shape{V, V})
    throw DimensionError("graph conv layer: adjacency " + to_string(adjacency.shape()) +
                         " for " + std::to_string(V) + " nodes");
  Tensor fe = narrow(features, 1, 0, in_embed);
  Tensor fy = narrow(features, 1, in_embed, n_way);
  Tensor embed = add(matmul(fe, w_id), matmul(matmul(adjacency, fe), w_adj));
  Tensor label = add(scaled(label_id, fy), scaled(label_adj, matmul(adjacency, fy)));
  return leaky_relu(concat({embed, label}, 1), slope);
}

std::pair<Tensor, Tensor> GraphConvLayer::dense_weights() const
{
  auto block = [&](const Tensor& w, const Tensor& s) {
    Tensor top = concat({w, Tensor::zeros({in_embed, n_way})}, 1);
    Tensor bottom = concat({Tensor::zeros({n_way, out_embed}), scaled_identity(s, n_way)}, 1);
    return concat({top, bottom}, 0);
  };
  return {block(w_id, label_id), block(w_adj, label_adj)};
}

// ---- head -----------------------------------------------------------------

GnnHead::GnnHead(const GnnConfig& config, std::size_t n_way, Rng& rng)
    : config(config), n_way(n_way), readout(Tensor::zeros({1, 1}))
{
  config.validate();
  if (n_way < 2)
    throw ConfigError("gnn: n_way must be >= 2");
  std::size_t embed = kEmbeddingDim;
  for (std::size_t r = 0; r < config.rounds; ++r)
  {
    scorers.push_back(std::make_unique<EdgeScorer>(embed, n_way, config.slope, rng));
    convs.push_back(
        std::make_unique<GraphConvLayer>(embed, config.hidden, n_way, config.slope, rng));
    register_module("psi" + std::to_string(r), *scorers.back());
    register_module("conv" + std::to_string(r), *convs.back());
    embed = config.hidden;
  }
  register_parameter("readout", readout);
}

GnnHead::Trace GnnHead::trace(const Tensor& embeddings, const std::vector<int>& support_labels,
                              std::size_t k_shot) const
{
  if (embeddings.rank() != 2 || embeddings.dim(1) != kEmbeddingDim)
    throw DimensionError("gnn: embeddings must be [V,64], got " + to_string(embeddings.shape()));
  Trace t;
  const Tensor nodes = config.embedding_norm > 0.0
                           ? scale(normalize_rows(embeddings), config.embedding_norm)
                           : embeddings;
  t.features.push_back(build_node_features(nodes, support_labels, n_way, k_shot));
  for (std::size_t r = 0; r < config.rounds; ++r)
  {
    t.adjacency.push_back(learn_adjacency(t.features.back(), *scorers[r]));
    t.features.push_back(convs[r]->forward(t.features.back(), t.adjacency.back()));
  }
  const Tensor& last = t.features.back();
  const std::size_t S = support_labels.size();
  const std::size_t Q = last.dim(0) - S;
  t.logits = scaled(readout, narrow(narrow(last, 0, S, Q), 1, config.hidden, n_way));
  return t;
}

Tensor GnnHead::forward(const Tensor& embeddings, const std::vector<int>& support_labels,
                        std::size_t k_shot) const
{
  return trace(embeddings, support_labels, k_shot).logits;
}

Tensor episode_loss(const Tensor& logits, const std::vector<int>& query_labels)
{
  if (logits.rank() != 2)
    throw DimensionError("episode_loss: logits must be [Q,N], got " + to_string(logits.shape()));
  require_labels(query_labels, logits.dim(1), "episode_loss");
  return cross_entropy(logits, query_labels);
}

// ---- model ----------------------------------------------------------------

FewShotModel::FewShotModel(const BackboneConfig& backbone_config, const GnnConfig& gnn_config,
                           std::size_t n_way, Rng& rng)
    : backbone(make_backbone(backbone_config, rng)),
      head(std::make_unique<GnnHead>(gnn_config, n_way, rng))
{
  register_module("backbone", *backbone);
  register_module("gnn", *head);
}

Tensor FewShotModel::forward(const Episode& episode)
{
  return forward_batch({episode}).front();
}

std::vector<Tensor> FewShotModel::forward_batch(const std::vector<Episode>& episodes)
{
  std::vector<Tensor> images;
  for (const Episode& e : episodes)
  {
    e.validate();
    if (e.n_way != head->n_way)
      throw ContractError("model: built for " + std::to_string(head->n_way) +
                          "-way episodes, got " + std::to_string(e.n_way) + "-way");
    images.push_back(e.support_images);
    images.push_back(e.query_images);
  }
  if (images.empty())
    return {};
  Tensor embeddings = backbone->forward(concat(images, 0));
  std::vector<Tensor> logits;
  std::size_t offset = 0;
  for (const Episode& e : episodes)
  {
    const std::size_t V = e.num_nodes();
    logits.push_back(head->forward(narrow(embeddings, 0, offset, V), e.support_labels, e.k_shot));
    offset += V;
  }
  return logits;
}

} // namespace fsl
