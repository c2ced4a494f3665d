#include "asymvq/encoder.hpp"

#include <cmath>

namespace asymvq {

template <typename S>
Var<S> sample_gaussian(const GaussianLatent<S>& g, const Tensor<S>& eta) {
  require_same_shape(g.mu.shape(), eta.shape(), "sample_gaussian");
  return add(g.mu, mul(exp(scale(g.log_var, S(0.5))), constant(eta)));
}

template <typename S>
Var<S> sample_gaussian(const GaussianLatent<S>& g, Rng& rng) {
  Tensor<S> eta(g.mu.shape());
  for (Eigen::Index i = 0; i < eta.size(); ++i) eta.array()[i] = normal<S>(rng);
  return sample_gaussian(g, eta);
}

template <typename S>
Encoder<S>::Encoder(EncoderArchConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
  if (cfg_.base_channels <= 0 || cfg_.res_blocks <= 0 || cfg_.z_channels <= 0 || cfg_.channel_mult.empty())
    throw ConfigError("encoder widths must be positive");
  const int levels = cfg_.levels();
  conv_in_ = Conv2d<S>(3, cfg_.channels(0), 3, 1, 1, rng);
  int in = cfg_.channels(0);
  blocks_.resize(static_cast<std::size_t>(levels));
  for (int l = 0; l < levels; ++l) {
    for (int i = 0; i < cfg_.res_blocks; ++i) {
      blocks_[l].emplace_back(in, cfg_.channels(l), rng);
      in = cfg_.channels(l);
    }
    if (l + 1 < levels) downsample_.emplace_back(in, in, 4, 2, 1, rng);
  }
  mid1_ = ResBlock<S>(in, in, rng);
  mid_attn_ = AttnBlock<S>(in, rng);
  mid2_ = ResBlock<S>(in, in, rng);
  norm_out_ = GroupNorm<S>(in);
  conv_out_ = Conv2d<S>(in, cfg_.out_channels(), 3, 1, 1, rng);
}

template <typename S>
ParameterSet<S> Encoder<S>::parameters() const {
  ParameterSet<S> out;
  conv_in_.collect(out, "conv_in.");
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    for (std::size_t i = 0; i < blocks_[l].size(); ++i)
      blocks_[l][i].collect(out, "down." + std::to_string(l) + ".block." + std::to_string(i) + ".");
    if (l < downsample_.size()) downsample_[l].collect(out, "down." + std::to_string(l) + ".downsample.");
  }
  mid1_.collect(out, "mid.block_1.");
  mid_attn_.collect(out, "mid.attn_1.");
  mid2_.collect(out, "mid.block_2.");
  norm_out_.collect(out, "norm_out.");
  conv_out_.collect(out, "conv_out.");
  return out;
}

template <typename S>
Var<S> Encoder<S>::forward(const Var<S>& x) const {
  const int f = cfg_.downsample_factor();
  if (x.shape().c != 3) throw InputError("encoder expects 3-channel images, got " + x.shape().str());
  if (x.shape().h % f != 0 || x.shape().w % f != 0)
    throw InputError("image size " + x.shape().str() + " is not divisible by downsample factor " + std::to_string(f));
  Var<S> h = conv_in_(x);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    for (const auto& block : blocks_[l]) h = block(h);
    if (l < downsample_.size()) h = downsample_[l](h);
  }
  h = mid2_(mid_attn_(mid1_(h)));
  return conv_out_(swish(norm_out_(h)));
}

template <typename S>
LatentGrid<S> Encoder<S>::encode(const Var<S>& x) const {
  if (cfg_.latent_mode != LatentMode::VQ) throw ConfigError("encode: encoder is configured for KL mode");
  return {forward(x), false};
}

template <typename S>
GaussianLatent<S> Encoder<S>::encode_gaussian(const Var<S>& x) const {
  if (cfg_.latent_mode != LatentMode::KL)
    throw ConfigError("encode_gaussian: encoder is configured for VQ mode (n_z output channels)");
  Var<S> out = forward(x);
  return {slice_channels(out, 0, cfg_.z_channels), slice_channels(out, cfg_.z_channels, cfg_.z_channels)};
}

template class Encoder<float>;
template class Encoder<double>;
template Var<float> sample_gaussian(const GaussianLatent<float>&, const Tensor<float>&);
template Var<double> sample_gaussian(const GaussianLatent<double>&, const Tensor<double>&);
template Var<float> sample_gaussian(const GaussianLatent<float>&, Rng&);
template Var<double> sample_gaussian(const GaussianLatent<double>&, Rng&);

}  // namespace asymvq
