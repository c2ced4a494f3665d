#include "asymvq/cond_branch.hpp"

namespace asymvq {

template <typename S>
std::pair<Var<S>, Tensor<S>> partial_conv(const Var<S>& x, const Tensor<S>& validity, const Conv2d<S>& conv) {
  const Shape xs = x.shape();
  if (validity.shape() != Shape{xs.n, 1, xs.h, xs.w})
    throw ShapeError("partial_conv: validity " + validity.shape().str() + " does not fit " + xs.str());
  const int k = conv.kernel();
  const int stride = conv.stride;
  const int pad = conv.padding;
  const int out_h = (xs.h + 2 * pad - k) / stride + 1;
  const int out_w = (xs.w + 2 * pad - k) / stride + 1;

  Tensor<S> scale_map(Shape{xs.n, 1, out_h, out_w});
  Tensor<S> updated(Shape{xs.n, 1, out_h, out_w});
  for (int n = 0; n < xs.n; ++n)
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox) {
        int window = 0;
        S valid = 0;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= xs.h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= xs.w) continue;
            ++window;
            valid += validity(n, 0, iy, ix);
          }
        }
        if (valid > S(0)) {
          scale_map(n, 0, oy, ox) = static_cast<S>(window) / valid;
          updated(n, 0, oy, ox) = S(1);
        }
      }

  Var<S> raw = conv2d(mul_map(x, validity), conv.weight, std::optional<Var<S>>{}, stride, pad);
  Var<S> out = mul_map(raw, scale_map);
  if (conv.bias) out = add_channel_bias(out, *conv.bias, &updated);
  return {std::move(out), std::move(updated)};
}

template <typename S>
Tensor<S> masked_input(const Tensor<S>& x, const Tensor<S>& mask) {
  const Shape xs = x.shape();
  if (mask.shape() != Shape{xs.n, 1, xs.h, xs.w})
    throw ShapeError("masked_input: mask " + mask.shape().str() + " does not fit " + xs.str());
  Tensor<S> y = x;
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c)
      for (int i = 0; i < xs.h; ++i)
        for (int j = 0; j < xs.w; ++j)
          if (mask(n, 0, i, j) != S(0)) y(n, c, i, j) = S(0);  // exact zeros, no signed -0
  return y;
}

template <typename S>
ConditionalBranch<S>::ConditionalBranch(const DecoderArchConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  int in = 3;
  for (int point = 0; point < cfg_.blend_points(); ++point) {
    const int out = cfg_.blend_channels(point);
    if (point < 2) layers_.emplace_back(in, out, 3, 1, 1, rng);
    else layers_.emplace_back(in, out, 4, 2, 1, rng);
    in = out;
  }
}

template <typename S>
FeaturePyramid<S> ConditionalBranch<S>::features(const Var<S>& y, const Tensor<S>& mask, BlendMode mode) const {
  const Shape ys = y.shape();
  if (ys.c != 3 || ys.h != cfg_.output_h() || ys.w != cfg_.output_w())
    throw ConfigError("conditional input " + ys.str() + " does not match decoder output " +
                      std::to_string(cfg_.output_h()) + "x" + std::to_string(cfg_.output_w()));
  if (mask.shape() != Shape{ys.n, 1, ys.h, ys.w})
    throw ConfigError("mask " + mask.shape().str() + " does not match conditional input " + ys.str());

  FeaturePyramid<S> pyramid;
  Var<S> h = y;
  if (mode == BlendMode::Concatenation) {
    Tensor<S> validity(mask.shape());
    validity.array() = S(1) - mask.array();
    for (const auto& layer : layers_) {
      auto [out, updated] = partial_conv(h, validity, layer);
      h = swish(out);
      validity = std::move(updated);
      pyramid.levels.push_back(h);
    }
  } else {
    for (const auto& layer : layers_) {
      h = swish(layer(h));
      pyramid.levels.push_back(h);
    }
  }
  return pyramid;
}

template <typename S>
ParameterSet<S> ConditionalBranch<S>::parameters() const {
  ParameterSet<S> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].collect(out, "layer." + std::to_string(i) + ".");
  return out;
}

template class ConditionalBranch<float>;
template class ConditionalBranch<double>;
template std::pair<Var<float>, Tensor<float>> partial_conv(const Var<float>&, const Tensor<float>&, const Conv2d<float>&);
template std::pair<Var<double>, Tensor<double>> partial_conv(const Var<double>&, const Tensor<double>&, const Conv2d<double>&);
template Tensor<float> masked_input(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> masked_input(const Tensor<double>&, const Tensor<double>&);

}  // namespace asymvq
