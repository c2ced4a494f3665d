#pragma once

#include <string>
#include <utility>
#include <vector>

#include "asymvq/arch.hpp"
#include "asymvq/cond_branch.hpp"
#include "asymvq/quantizer.hpp"

namespace asymvq {

/// Mask at 1/2^level resolution: a coarse cell is edited iff any pixel it covers is edited.
template <typename S>
Tensor<S> downsample_mask(const Tensor<S>& mask, int level);

/// Mask-guided blending of decoder and conditional features.
///
/// Addition: f_dec * m + f_cond * (1 - m). Concatenation: `fusion` (1x1) applied to
/// [f_dec, f_cond, 1 - m], mapping back to the width of f_dec.
template <typename S>
Var<S> mgb_blend(const Var<S>& f_dec, const Var<S>& f_cond, const Tensor<S>& mask, BlendMode mode,
                 const Conv2d<S>* fusion);

/// Decoder backbone with optional mask-guided blending at every blend point.
///
/// Layout (top level first): conv-in 3x3, mid {ResBlock, AttnBlock, ResBlock}; per level
/// [blend, ResBlocks, Upsample (all but level 0)]; out block [blend, GroupNorm, swish, conv 3x3,
/// tanh]. With `conditional = false` there are no blends and this is the symmetric decoder used
/// for base training.
template <typename S>
class Decoder {
 public:
  Decoder() = default;
  Decoder(DecoderArchConfig cfg, Rng& rng);

  [[nodiscard]] const DecoderArchConfig& config() const { return cfg_; }
  [[nodiscard]] ParameterSet<S> parameters() const;

  Var<S> decode(const LatentGrid<S>& z, const FeaturePyramid<S>& pyramid, const Tensor<S>& mask) const;
  /// decode with an all-ones mask and an all-zero pyramid.
  Var<S> decode_unconditional(const LatentGrid<S>& z) const;

  /// The final 3x3 convolution (the "last layer" for the adaptive GAN weight).
  [[nodiscard]] const Conv2d<S>& last_layer() const { return conv_out_; }

  /// Zero pyramid matching this decoder's blend points for a batch of `n`.
  [[nodiscard]] FeaturePyramid<S> zero_pyramid(int n) const;

 private:
  Var<S> run(const LatentGrid<S>& z, const FeaturePyramid<S>* pyramid, const Tensor<S>* mask) const;

  DecoderArchConfig cfg_;
  Conv2d<S> conv_in_;
  ResBlock<S> mid1_;
  AttnBlock<S> mid_attn_;
  ResBlock<S> mid2_;
  std::vector<std::vector<ResBlock<S>>> blocks_;  // indexed by level
  std::vector<Upsample<S>> upsample_;              // indexed by level, unused at level 0
  std::vector<Conv2d<S>> fusion_;                  // indexed by blend point (concatenation only)
  GroupNorm<S> norm_out_;
  Conv2d<S> conv_out_;
};

/// Named feature shapes a decoder (and its conditional branch) produces for a batch of one,
/// derived from the configuration without running it.
std::vector<std::pair<std::string, Shape>> trace_shapes(const DecoderArchConfig& cfg);

}  // namespace asymvq
