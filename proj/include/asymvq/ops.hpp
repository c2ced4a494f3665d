#pragma once

#include <optional>
#include <vector>

#include "asymvq/autodiff.hpp"

// Differentiable tensor operations. Every function builds one graph node whose backward closure
// propagates only into parents that are active in the current pass.
//
// Single-channel "maps" (N x 1 x H x W) passed as plain tensors are constants: they broadcast over
// channels and receive no gradient.

namespace asymvq {

template <typename S> Var<S> add(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> sub(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> mul(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> scale(const Var<S>& a, S factor);
template <typename S> Var<S> add_scalar(const Var<S>& a, S offset);

template <typename S> Var<S> square(const Var<S>& a);
template <typename S> Var<S> abs(const Var<S>& a);
template <typename S> Var<S> exp(const Var<S>& a);
template <typename S> Var<S> tanh(const Var<S>& a);
template <typename S> Var<S> relu(const Var<S>& a);
template <typename S> Var<S> leaky_relu(const Var<S>& a, S slope);
/// x * sigmoid(x).
template <typename S> Var<S> swish(const Var<S>& a);
/// log(1 + exp(x)), evaluated without overflow.
template <typename S> Var<S> softplus(const Var<S>& a);

/// Scalar (1x1x1x1) reductions.
template <typename S> Var<S> sum(const Var<S>& a);
template <typename S> Var<S> mean(const Var<S>& a);

/// 2-D cross-correlation with square kernel. `weight` is Cout x Cin x k x k, `bias` is Cout x 1 x 1 x 1.
template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& weight, const std::optional<Var<S>>& bias, int stride,
              int padding);

/// Adds a per-channel bias, optionally gated by a constant single-channel map.
template <typename S>
Var<S> add_channel_bias(const Var<S>& x, const Var<S>& bias, const Tensor<S>* map = nullptr);

/// Multiplies every channel by a constant single-channel map.
template <typename S> Var<S> mul_map(const Var<S>& x, const Tensor<S>& map);

template <typename S>
Var<S> group_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, int groups, S eps = S(1e-6));

/// Nearest-neighbour x2 spatial upsampling.
template <typename S> Var<S> upsample_nearest2x(const Var<S>& x);

template <typename S> Var<S> concat_channels(const std::vector<Var<S>>& parts);
template <typename S> Var<S> slice_channels(const Var<S>& x, int begin, int count);

/// Single-head softmax attention over flattened spatial positions: out[:, i] = sum_j A[i, j] v[:, j],
/// A = softmax_j(q[:, i] . k[:, j] / sqrt(C)).
template <typename S> Var<S> spatial_attention(const Var<S>& q, const Var<S>& k, const Var<S>& v);

/// a * m + b * (1 - m) with a constant binary single-channel m.
template <typename S> Var<S> mask_blend(const Var<S>& a, const Var<S>& b, const Tensor<S>& m);

/// Rows of `table` (K x D x 1 x 1) laid out as an N x D x h x w grid according to `indices`
/// (row-major N*h*w). Gradient scatters back into `table`.
template <typename S>
Var<S> gather_codewords(const Var<S>& table, const std::vector<int>& indices, int n, int h, int w);

/// Forward value is `quantized` bit for bit; the backward pass routes the incoming gradient to
/// `continuous` unchanged.
template <typename S> Var<S> straight_through(const Var<S>& continuous, const Var<S>& quantized);

/// Constant (non-trainable) tensor as a graph leaf.
template <typename S>
Var<S> constant(Tensor<S> t) {
  return Var<S>::leaf(std::move(t), false);
}

}  // namespace asymvq
