#include "asymvq/nn.hpp"

#include <cmath>

namespace asymvq {

int group_count(int channels) {
  for (int g = std::min(32, channels / 4); g > 1; --g)
    if (channels % g == 0) return g;
  return 1;
}

template <typename S>
Var<S> parameter(Shape shape, S bound, Rng& rng) {
  Tensor<S> t(shape);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.array()[i] = static_cast<S>(uniform<double>(rng, -bound, bound));
  return Var<S>::leaf(std::move(t), true);
}

template <typename S>
Conv2d<S>::Conv2d(int in_channels, int out_channels, int kernel, int stride_, int padding_, Rng& rng, bool with_bias)
    : stride(stride_), padding(padding_) {
  const S bound = S(1) / std::sqrt(static_cast<S>(in_channels * kernel * kernel));
  weight = parameter<S>(Shape{out_channels, in_channels, kernel, kernel}, bound, rng);
  if (with_bias) bias = parameter<S>(Shape{out_channels, 1, 1, 1}, bound, rng);
}

template <typename S>
void Conv2d<S>::collect(ParameterSet<S>& out, const std::string& prefix) const {
  out.add(prefix + "weight", weight);
  if (bias) out.add(prefix + "bias", *bias);
}

template <typename S>
GroupNorm<S>::GroupNorm(int channels)
    : gamma(Var<S>::leaf(Tensor<S>::ones(Shape{channels, 1, 1, 1}), true)),
      beta(Var<S>::leaf(Tensor<S>::zeros(Shape{channels, 1, 1, 1}), true)),
      groups(group_count(channels)) {}

template <typename S>
void GroupNorm<S>::collect(ParameterSet<S>& out, const std::string& prefix) const {
  out.add(prefix + "gamma", gamma);
  out.add(prefix + "beta", beta);
}

template <typename S>
ResBlock<S>::ResBlock(int in_channels, int out_channels, Rng& rng)
    : norm1(in_channels),
      conv1(in_channels, out_channels, 3, 1, 1, rng),
      norm2(out_channels),
      conv2(out_channels, out_channels, 3, 1, 1, rng) {
  if (in_channels != out_channels) shortcut.emplace(in_channels, out_channels, 1, 1, 0, rng);
}

template <typename S>
Var<S> ResBlock<S>::operator()(const Var<S>& x) const {
  Var<S> h = conv1(swish(norm1(x)));
  h = conv2(swish(norm2(h)));
  return add(shortcut ? (*shortcut)(x) : x, h);
}

template <typename S>
void ResBlock<S>::collect(ParameterSet<S>& out, const std::string& prefix) const {
  norm1.collect(out, prefix + "norm1.");
  conv1.collect(out, prefix + "conv1.");
  norm2.collect(out, prefix + "norm2.");
  conv2.collect(out, prefix + "conv2.");
  if (shortcut) shortcut->collect(out, prefix + "shortcut.");
}

template <typename S>
AttnBlock<S>::AttnBlock(int channels, Rng& rng)
    : norm(channels),
      q(channels, channels, 1, 1, 0, rng),
      k(channels, channels, 1, 1, 0, rng),
      v(channels, channels, 1, 1, 0, rng),
      proj(channels, channels, 1, 1, 0, rng) {}

template <typename S>
Var<S> AttnBlock<S>::operator()(const Var<S>& x) const {
  Var<S> h = norm(x);
  return add(x, proj(spatial_attention(q(h), k(h), v(h))));
}

template <typename S>
void AttnBlock<S>::collect(ParameterSet<S>& out, const std::string& prefix) const {
  norm.collect(out, prefix + "norm.");
  q.collect(out, prefix + "q.");
  k.collect(out, prefix + "k.");
  v.collect(out, prefix + "v.");
  proj.collect(out, prefix + "proj.");
}

template Var<float> parameter(Shape, float, Rng&);
template Var<double> parameter(Shape, double, Rng&);
template struct Conv2d<float>;
template struct Conv2d<double>;
template struct GroupNorm<float>;
template struct GroupNorm<double>;
template struct ResBlock<float>;
template struct ResBlock<double>;
template struct AttnBlock<float>;
template struct AttnBlock<double>;

}  // namespace asymvq
