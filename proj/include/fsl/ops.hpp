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

#ifndef FSL_OPS_HPP
#define FSL_OPS_HPP

#include <cstddef>
#include <vector>

#include "fsl/tensor.hpp"

// Differentiable operations. Every op validates shapes (DimensionError),
// rejects non-finite results (NonFiniteError) and records a backward closure
// when an input requires grad.

namespace fsl {

// ---- linear algebra -------------------------------------------------------

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);

// Batched: [g,m,k] x [g,k,n] -> [g,m,n]; with transpose_b, b is [g,n,k].
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

// x[B,din] * w[din,dout] + bias[dout]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);

// Same-rank broadcast; each source dim must equal the target or be 1.
Tensor broadcast_to(const Tensor& x, const Shape& shape);

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor sigmoid(const Tensor& x);

// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& x) { return scale(x, s); }

// ---- reductions -----------------------------------------------------------

// Full reductions to shape [1].
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Sum along one axis; that axis becomes size 1.
Tensor sum_axis(const Tensor& x, std::size_t axis);

// ---- layout ---------------------------------------------------------------

Tensor reshape(const Tensor& x, const Shape& shape);
// [B, ...] -> [B, rest]
Tensor flatten(const Tensor& x);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
// Slice [start, start+length) along axis.
Tensor narrow(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);

// x[V,d] -> [V*V,d] with row i*V+j = |x_i - x_j|.
Tensor pairwise_absdiff(const Tensor& x);

// ---- spatial --------------------------------------------------------------

// Cross-correlation. x[B,Cin,H,W], weight[Cout,Cin,kh,kw], bias[Cout] (may be
// undefined) -> [B,Cout,(H+2p-kh)/s+1,(W+2p-kw)/s+1].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);

// Window maxima; padded cells never win. Backward routes to the first
// maximum in row-major window order.
Tensor maxpool2d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t padding = 0);

// [B,C,H,W] -> [B,C]
Tensor global_avgpool(const Tensor& x);

// Nearest-neighbour resize to [B,C,height,width]; source index floor(i*H/height).
Tensor upsample_nearest(const Tensor& x, std::size_t height, std::size_t width);

// ---- normalization --------------------------------------------------------

// Per-feature normalization over all non-feature axes; features on axis 1 of
// [B,F] or [B,C,H,W]. In training mode uses batch statistics (requires B>=2)
// and updates the running buffers in place; otherwise uses the buffers.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                 Tensor& running_var, bool training, double eps = 1e-5, double momentum = 0.1);

// Each row of [R,F] divided by sqrt(sum of squares + eps).
Tensor normalize_rows(const Tensor& x, double eps = 1e-12);

// ---- attention ------------------------------------------------------------

// softmax(scale * q k^T) v per group, q/k [g,n,dk], v [g,n,dv] -> [g,n,dv].
// Fused: the n x n weights are recomputed in backward instead of stored.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, double scale);

// The [g,n,n] weight matrices attention() would use. Not differentiable.
Tensor attention_weights(const Tensor& q, const Tensor& k, double scale);

// ---- losses ---------------------------------------------------------------

// Mean softmax cross-entropy; logits[Q,N], labels in [0,N).
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

} // namespace fsl

#endif // FSL_OPS_HPP
