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

#ifndef FSL_GNN_HPP
#define FSL_GNN_HPP

#include <cstddef>
#include <memory>
#include <utility>
#include <vector>

#include "fsl/backbones.hpp"
#include "fsl/module.hpp"
#include "fsl/random.hpp"
#include "fsl/tensor.hpp"

namespace fsl {

// An N-way K-shot task. Node order everywhere is support first, then query.
struct Episode
{
  Tensor support_images; // [N*K,1,28,28]
  std::vector<int> support_labels;
  Tensor query_images; // [Q,1,28,28]
  std::vector<int> query_labels; // may be empty at inference
  std::size_t n_way = 0;
  std::size_t k_shot = 0;

  std::size_t num_support() const { return n_way * k_shot; }
  std::size_t num_query() const { return query_images.dim(0); }
  std::size_t num_nodes() const { return num_support() + num_query(); }

  // Throws ContractError / DimensionError on a malformed episode.
  void validate() const;
};

struct GnnConfig
{
  std::size_t rounds = 2;
  std::size_t hidden = 48;
  double slope = 0.01;
  // Embeddings are rescaled to this L2 norm per node before the first
  // round; 0 feeds them through unchanged.
  double embedding_norm = 8.0;

  void validate() const;
};

// [V,64] embeddings -> [V,64+N]: support rows get their one-hot label,
// query rows the uniform vector 1/N.
Tensor build_node_features(const Tensor& embeddings, const std::vector<int>& support_labels,
                           std::size_t n_way, std::size_t k_shot);

// out = leaky_relu(f W_id + A f W_adj)
Tensor graph_conv(const Tensor& features, const Tensor& adjacency, const Tensor& w_id,
                  const Tensor& w_adj, double slope);

// psi: score(i,j) = w2 . leaky_relu(W1^T |f_i - f_j| + b1) + b2, hidden width
// e (the embedding width). Features are [embedding | label block]; every
// label coordinate shares one row of W1, so scores do not depend on which
// class is which and no parameter shape depends on N.
class EdgeScorer : public Module
{
public:
  EdgeScorer(std::size_t embed_dim, std::size_t n_way, double slope, Rng& rng);

  // [V,d] -> [V,V] raw scores.
  Tensor scores(const Tensor& features) const;

  // The full [e+N, e] first-layer matrix.
  Tensor first_layer() const;

  std::size_t input_dim() const { return embed_dim + n_way; }
  std::size_t hidden() const { return embed_dim; }

  Tensor w_embed; // [e, e]
  Tensor w_label; // [1, e]
  Tensor b1;      // [e]
  Tensor w2;      // [e, 1]
  Tensor b2;      // [1]
  std::size_t embed_dim, n_way;
  double slope;
};

// Row-softmax of psi's score matrix over j != i; the diagonal is exactly 0.
Tensor learn_adjacency(const Tensor& features, const EdgeScorer& psi);

// graph_conv with block-structured operators: the embedding block maps
// through dense [e_in, e_out] matrices, the label block through scalar
// multiples of the identity. Output is [V, e_out + N].
class GraphConvLayer : public Module
{
public:
  GraphConvLayer(std::size_t in_embed, std::size_t out_embed, std::size_t n_way, double slope,
                 Rng& rng);

  Tensor forward(const Tensor& features, const Tensor& adjacency) const;

  // The equivalent dense (W_id, W_adj), each [e_in+N, e_out+N].
  std::pair<Tensor, Tensor> dense_weights() const;

  Tensor w_id, w_adj;         // [e_in, e_out]
  Tensor label_id, label_adj; // [1,1]
  std::size_t in_embed, out_embed, n_way;
  double slope;
};

// Message passing over an episode graph, from embeddings to query logits.
class GnnHead : public Module
{
public:
  GnnHead(const GnnConfig& config, std::size_t n_way, Rng& rng);

  struct Trace
  {
    std::vector<Tensor> features;  // rounds + 1 entries
    std::vector<Tensor> adjacency; // rounds entries
    Tensor logits;                 // [Q,N]
  };

  Tensor forward(const Tensor& embeddings, const std::vector<int>& support_labels,
                 std::size_t k_shot) const;
  Trace trace(const Tensor& embeddings, const std::vector<int>& support_labels,
              std::size_t k_shot) const;

  GnnConfig config;
  std::size_t n_way;
  std::vector<std::unique_ptr<EdgeScorer>> scorers;
  std::vector<std::unique_ptr<GraphConvLayer>> convs;
  // logits = readout * (label block of the query rows); starts at zero.
  Tensor readout; // [1,1]
};

// Mean softmax cross-entropy over queries.
Tensor episode_loss(const Tensor& logits, const std::vector<int>& query_labels);

// Shared backbone plus GNN head.
class FewShotModel : public Module
{
public:
  FewShotModel(const BackboneConfig& backbone_config, const GnnConfig& gnn_config,
               std::size_t n_way, Rng& rng);

  Tensor forward(const Episode& episode);

  // One backbone pass over every image of every episode; one logits tensor
  // per episode.
  std::vector<Tensor> forward_batch(const std::vector<Episode>& episodes);

  std::unique_ptr<Backbone> backbone;
  std::unique_ptr<GnnHead> head;
};

} // namespace fsl

#endif // FSL_GNN_HPP
