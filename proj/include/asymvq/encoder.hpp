#pragma once

#include <vector>

#include "asymvq/arch.hpp"
#include "asymvq/quantizer.hpp"

namespace asymvq {

/// Diagonal Gaussian posterior: mean and log-variance.
template <typename S>
struct GaussianLatent {
  Var<S> mu;
  Var<S> log_var;
};

/// z = mu + exp(log_var / 2) * eta with the supplied standard-normal `eta`.
template <typename S>
Var<S> sample_gaussian(const GaussianLatent<S>& g, const Tensor<S>& eta);

/// Draws eta from `rng` and samples.
template <typename S>
Var<S> sample_gaussian(const GaussianLatent<S>& g, Rng& rng);

/// Convolutional encoder: conv-in, per-level ResBlocks with stride-2 downsampling between
/// levels, mid ResBlock/Attention/ResBlock, GroupNorm, swish, conv-out. Zero padding throughout,
/// so the latent is exactly H/f x W/f.
template <typename S>
class Encoder {
 public:
  Encoder() = default;
  Encoder(EncoderArchConfig cfg, Rng& rng);

  [[nodiscard]] const EncoderArchConfig& config() const { return cfg_; }
  [[nodiscard]] ParameterSet<S> parameters() const;

  /// Pre-quantization latent (VQ mode).
  LatentGrid<S> encode(const Var<S>& x) const;
  /// Channel split of the output into (mu, log_var) (KL mode).
  GaussianLatent<S> encode_gaussian(const Var<S>& x) const;

  /// Raw conv-out activations, any mode.
  Var<S> forward(const Var<S>& x) const;

  Conv2d<S>& conv_out() { return conv_out_; }

 private:
  EncoderArchConfig cfg_;
  Conv2d<S> conv_in_;
  std::vector<std::vector<ResBlock<S>>> blocks_;
  std::vector<Conv2d<S>> downsample_;
  ResBlock<S> mid1_;
  AttnBlock<S> mid_attn_;
  ResBlock<S> mid2_;
  GroupNorm<S> norm_out_;
  Conv2d<S> conv_out_;
};

}  // namespace asymvq
