#include "asymvq/decoder.hpp"

namespace asymvq {

template <typename S>
Tensor<S> downsample_mask(const Tensor<S>& mask, int level) {
  if (level < 0) throw InputError("downsample_mask: negative level");
  const Shape s = mask.shape();
  if (s.c != 1) throw ShapeError("downsample_mask: mask must be single-channel, got " + s.str());
  const int f = 1 << level;
  if (s.h % f != 0 || s.w % f != 0) throw ShapeError("downsample_mask: " + s.str() + " not divisible by " + std::to_string(f));
  if (f == 1) return mask;
  Tensor<S> out(Shape{s.n, 1, s.h / f, s.w / f});
  for (int n = 0; n < s.n; ++n)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x)
        if (mask(n, 0, y, x) != S(0)) out(n, 0, y / f, x / f) = S(1);
  return out;
}

template <typename S>
Var<S> mgb_blend(const Var<S>& f_dec, const Var<S>& f_cond, const Tensor<S>& mask, BlendMode mode,
                 const Conv2d<S>* fusion) {
  const Shape ds = f_dec.shape();
  const Shape cs = f_cond.shape();
  if (ds.n != cs.n || ds.h != cs.h || ds.w != cs.w)
    throw ShapeError("mgb_blend: decoder features " + ds.str() + " vs condition " + cs.str());
  if (mode == BlendMode::Addition) {
    if (ds.c != cs.c) throw ShapeError("mgb_blend: addition needs equal widths, got " + ds.str() + " and " + cs.str());
    return mask_blend(f_dec, f_cond, mask);
  }
  if (fusion == nullptr) throw ConfigError("mgb_blend: concatenation requires a fusion convolution");
  if (fusion->in_channels() != ds.c + cs.c + 1 || fusion->out_channels() != ds.c)
    throw ShapeError("mgb_blend: fusion conv does not map " + std::to_string(ds.c + cs.c + 1) + " -> " + std::to_string(ds.c));
  Tensor<S> keep(mask.shape());
  keep.array() = S(1) - mask.array();
  return (*fusion)(concat_channels<S>({f_dec, f_cond, constant(std::move(keep))}));
}

template <typename S>
Decoder<S>::Decoder(DecoderArchConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const int levels = cfg_.levels();
  const int top = cfg_.channels(levels - 1);
  conv_in_ = Conv2d<S>(cfg_.z_channels, top, 3, 1, 1, rng);
  mid1_ = ResBlock<S>(top, top, rng);
  mid_attn_ = AttnBlock<S>(top, rng);
  mid2_ = ResBlock<S>(top, top, rng);

  if (cfg_.conditional && cfg_.blend_mode == BlendMode::Concatenation) {
    for (int point = 0; point < cfg_.blend_points(); ++point) {
      const int width = cfg_.blend_channels(point);
      fusion_.emplace_back(2 * width + 1, width, 1, 1, 0, rng);
    }
  }
  blocks_.resize(static_cast<std::size_t>(levels));
  upsample_.resize(static_cast<std::size_t>(levels));
  for (int l = levels - 1; l >= 0; --l) {
    int in = cfg_.input_channels(l);
    for (int i = 0; i < cfg_.depth(); ++i) {
      blocks_[l].emplace_back(in, cfg_.channels(l), rng);
      in = cfg_.channels(l);
    }
    if (l != 0) upsample_[l] = Upsample<S>(in, rng);
  }
  norm_out_ = GroupNorm<S>(cfg_.channels(0));
  conv_out_ = Conv2d<S>(cfg_.channels(0), 3, 3, 1, 1, rng);
}

template <typename S>
ParameterSet<S> Decoder<S>::parameters() const {
  ParameterSet<S> out;
  conv_in_.collect(out, "conv_in.");
  mid1_.collect(out, "mid.block_1.");
  mid_attn_.collect(out, "mid.attn_1.");
  mid2_.collect(out, "mid.block_2.");
  for (int l = cfg_.levels() - 1; l >= 0; --l) {
    const std::string prefix = "up." + std::to_string(l) + ".";
    if (!fusion_.empty()) fusion_[l + 1].collect(out, prefix + "fusion.");
    for (std::size_t i = 0; i < blocks_[l].size(); ++i) blocks_[l][i].collect(out, prefix + "block." + std::to_string(i) + ".");
    if (l != 0) upsample_[l].collect(out, prefix + "upsample.");
  }
  if (!fusion_.empty()) fusion_[0].collect(out, "out.fusion.");
  norm_out_.collect(out, "norm_out.");
  conv_out_.collect(out, "conv_out.");
  return out;
}

template <typename S>
FeaturePyramid<S> Decoder<S>::zero_pyramid(int n) const {
  FeaturePyramid<S> pyramid;
  for (int point = 0; point < cfg_.blend_points(); ++point) {
    const int div = cfg_.blend_divisor(point);
    pyramid.levels.push_back(constant(Tensor<S>(Shape{n, cfg_.blend_channels(point), cfg_.output_h() / div, cfg_.output_w() / div})));
  }
  return pyramid;
}

template <typename S>
Var<S> Decoder<S>::decode(const LatentGrid<S>& z, const FeaturePyramid<S>& pyramid, const Tensor<S>& mask) const {
  return run(z, &pyramid, &mask);
}

template <typename S>
Var<S> Decoder<S>::decode_unconditional(const LatentGrid<S>& z) const {
  if (!cfg_.conditional) return run(z, nullptr, nullptr);
  const int n = z.values.shape().n;
  const FeaturePyramid<S> zeros = zero_pyramid(n);
  const Tensor<S> ones = Tensor<S>::ones(Shape{n, 1, cfg_.output_h(), cfg_.output_w()});
  return run(z, &zeros, &ones);
}

template <typename S>
Var<S> Decoder<S>::run(const LatentGrid<S>& z, const FeaturePyramid<S>* pyramid, const Tensor<S>* mask) const {
  const Shape zs = z.values.shape();
  if (zs.c != cfg_.z_channels || zs.h != cfg_.latent_h || zs.w != cfg_.latent_w)
    throw ConfigError("decoder expects latents of " + std::to_string(cfg_.z_channels) + "x" + std::to_string(cfg_.latent_h) +
                      "x" + std::to_string(cfg_.latent_w) + ", got " + zs.str());
  const bool blend = cfg_.conditional && pyramid != nullptr;
  std::vector<Tensor<S>> masks;
  if (blend) {
    if (static_cast<int>(pyramid->size()) != cfg_.blend_points())
      throw ConfigError("feature pyramid has " + std::to_string(pyramid->size()) + " levels, decoder has " +
                        std::to_string(cfg_.blend_points()) + " blend points");
    if (mask->shape() != Shape{zs.n, 1, cfg_.output_h(), cfg_.output_w()})
      throw ConfigError("mask " + mask->shape().str() + " does not match decoder output resolution");
    for (int point = 0; point < cfg_.blend_points(); ++point) {
      const int div = cfg_.blend_divisor(point);
      const Shape expect{zs.n, cfg_.blend_channels(point), cfg_.output_h() / div, cfg_.output_w() / div};
      if ((*pyramid)[point].shape() != expect)
        throw ConfigError("pyramid level " + std::to_string(point) + " is " + (*pyramid)[point].shape().str() +
                          ", expected " + expect.str());
    }
    for (int l = 0; l < cfg_.levels(); ++l) masks.push_back(downsample_mask(*mask, l));
  }
  auto fusion = [&](int point) -> const Conv2d<S>* { return fusion_.empty() ? nullptr : &fusion_[point]; };

  Var<S> h = conv_in_(z.values);
  h = mid2_(mid_attn_(mid1_(h)));
  for (int l = cfg_.levels() - 1; l >= 0; --l) {
    if (blend) h = mgb_blend(h, (*pyramid)[l + 1], masks[l], cfg_.blend_mode, fusion(l + 1));
    for (const auto& block : blocks_[l]) h = block(h);
    if (l != 0) h = upsample_[l](h);
  }
  if (blend) h = mgb_blend(h, (*pyramid)[0], masks[0], cfg_.blend_mode, fusion(0));
  return tanh(conv_out_(swish(norm_out_(h))));
}

std::vector<std::pair<std::string, Shape>> trace_shapes(const DecoderArchConfig& cfg) {
  cfg.validate();
  std::vector<std::pair<std::string, Shape>> out;
  const int H = cfg.output_h();
  const int W = cfg.output_w();
  for (int point = 0; point < cfg.blend_points(); ++point) {
    const int div = cfg.blend_divisor(point);
    out.emplace_back("cond." + std::to_string(point), Shape{1, cfg.blend_channels(point), H / div, W / div});
  }
  const bool concat = cfg.conditional && cfg.blend_mode == BlendMode::Concatenation;
  const int top = cfg.levels() - 1;
  out.emplace_back("mid", Shape{1, cfg.channels(top), cfg.latent_h, cfg.latent_w});
  for (int l = top; l >= 0; --l) {
    const std::string p = "level." + std::to_string(l) + ".";
    const int div = 1 << l;
    const int in = cfg.input_channels(l);
    if (concat) out.emplace_back(p + "concat", Shape{1, 2 * in + 1, H / div, W / div});
    if (cfg.conditional) out.emplace_back(p + "blend", Shape{1, in, H / div, W / div});
    out.emplace_back(p + "resblocks", Shape{1, cfg.channels(l), H / div, W / div});
    if (l != 0) out.emplace_back(p + "upsample", Shape{1, cfg.channels(l), 2 * H / div, 2 * W / div});
  }
  if (concat) out.emplace_back("out.concat", Shape{1, 2 * cfg.channels(0) + 1, H, W});
  if (cfg.conditional) out.emplace_back("out.blend", Shape{1, cfg.channels(0), H, W});
  out.emplace_back("out.norm", Shape{1, cfg.channels(0), H, W});
  out.emplace_back("out.conv", Shape{1, 3, H, W});
  return out;
}

template class Decoder<float>;
template class Decoder<double>;
template Tensor<float> downsample_mask(const Tensor<float>&, int);
template Tensor<double> downsample_mask(const Tensor<double>&, int);
template Var<float> mgb_blend(const Var<float>&, const Var<float>&, const Tensor<float>&, BlendMode, const Conv2d<float>*);
template Var<double> mgb_blend(const Var<double>&, const Var<double>&, const Tensor<double>&, BlendMode, const Conv2d<double>*);

}  // namespace asymvq
