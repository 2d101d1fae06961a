#pragma once

#include <span>
#include <vector>

#include "cvloc/graph.hpp"
#include "cvloc/tensor.hpp"

namespace cvloc {

// Differentiable ops. Each records a backward node on the graph; the
// output requires grad iff any input does. Gradients accumulate (+=)
// into each input's grad buffer, so callers zero grads between steps.

/// 2-D cross-correlation with per-output-channel bias.
/// input [N,C,H,W], weight [K,C,kh,kw], bias [K] -> [N,K,H',W'].
Tensor conv2d(Graph& g, const Tensor& input, const Tensor& weight,
              const Tensor& bias, int stride, int pad);

/// Elementwise max(0, x). Gradient at exactly 0 is 0.
Tensor relu(Graph& g, const Tensor& input);

/// 2x2 window, stride 2. Backward routes to the first max in
/// row-major scan order within each window.
Tensor maxpool2d(Graph& g, const Tensor& input);

/// input [N,D], weight [D,M], bias [M] -> [N,M].
Tensor fully_connected(Graph& g, const Tensor& input, const Tensor& weight,
                       const Tensor& bias);

/// [N,C,H,W] -> [N, C*H*W] (or any rank >= 2 flattened past dim 0).
Tensor flatten(Graph& g, const Tensor& input);

/// Column slice [N,M] -> [N, end-begin].
Tensor slice_cols(Graph& g, const Tensor& input, int begin, int end);

/// Concatenate along dim 1; all inputs [N, D_i] -> [N, sum D_i].
Tensor concat_cols(Graph& g, const std::vector<Tensor>& inputs);

/// Mean over the batch of -log softmax(logits)[label], stabilized by
/// max subtraction; reduction accumulates in double.
Tensor softmax_cross_entropy(Graph& g, const Tensor& logits,
                             std::span<const int> labels);

/// (1/2N) * sum_i ||pred_i - target_i||^2. The target gets no gradient.
Tensor euclidean_loss(Graph& g, const Tensor& pred, const Tensor& target);

// Non-differentiable helpers.

/// Mean over rows of the unsquared distance ||pred_i - target_i||.
double mean_feature_distance(const Tensor& pred, const Tensor& target);

}  // namespace cvloc
