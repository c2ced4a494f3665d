#pragma once

#include <utility>
#include <vector>

#include "asymvq/arch.hpp"
#include "asymvq/nn.hpp"

namespace asymvq {

/// Conditional features, one tensor per blend point, finest first (index 0 feeds the out block).
template <typename S>
struct FeaturePyramid {
  std::vector<Var<S>> levels;

  [[nodiscard]] std::size_t size() const { return levels.size(); }
  const Var<S>& operator[](std::size_t i) const { return levels[i]; }
};

/// Partial convolution with a single-channel validity map (1 = valid).
///
/// At each output location with at least one valid input the result is
/// conv(x * validity) * (window / valid) + bias and the location becomes valid; locations with
/// no valid input produce 0 and stay invalid. `window` counts the in-bounds taps, so an
/// all-valid map reproduces the ordinary zero-padded convolution exactly.
template <typename S>
std::pair<Var<S>, Tensor<S>> partial_conv(const Var<S>& x, const Tensor<S>& validity, const Conv2d<S>& conv);

/// Lightweight encoder over the masked image Y = X * (1 - m).
///
/// Layer schedule: 3x3/s1, 3x3/s1, then 4x4/s2 per remaining level; widths follow the decoder's
/// blend-point widths. Concatenation mode uses partial convolutions that thread the validity
/// map (1 - m); addition mode uses plain convolutions on Y.
template <typename S>
class ConditionalBranch {
 public:
  ConditionalBranch() = default;
  ConditionalBranch(const DecoderArchConfig& cfg, Rng& rng);

  FeaturePyramid<S> features(const Var<S>& y, const Tensor<S>& mask, BlendMode mode) const;
  FeaturePyramid<S> features(const Var<S>& y, const Tensor<S>& mask) const { return features(y, mask, cfg_.blend_mode); }

  [[nodiscard]] ParameterSet<S> parameters() const;
  [[nodiscard]] const std::vector<Conv2d<S>>& layers() const { return layers_; }

 private:
  DecoderArchConfig cfg_;
  std::vector<Conv2d<S>> layers_;
};

/// Masked input Y = X * (1 - m).
template <typename S>
Tensor<S> masked_input(const Tensor<S>& x, const Tensor<S>& mask);

}  // namespace asymvq
