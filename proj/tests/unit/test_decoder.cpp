#include "doctest.h"

#include <map>

#include "asymvq/decoder.hpp"
#include "support/synthetic.hpp"

using namespace asymvq;
using testing::random_tensor;

namespace {

const Conv2d<double>* const kNoFusion = nullptr;

DecoderArchConfig tiny(BlendMode mode, bool conditional = true) {
  DecoderArchConfig cfg;
  cfg.base_channels = 8;
  cfg.channel_mult = {1, 2, 2};
  cfg.res_blocks = 1;
  cfg.blend_mode = mode;
  cfg.conditional = conditional;
  cfg.latent_h = 4;
  cfg.latent_w = 4;
  return cfg;
}

Tensor<double> pool_oracle(const Tensor<double>& m, int f) {
  Tensor<double> out(Shape{m.n(), 1, m.h() / f, m.w() / f});
  for (int n = 0; n < m.n(); ++n)
    for (int y = 0; y < out.h(); ++y)
      for (int x = 0; x < out.w(); ++x) {
        double v = 0;
        for (int i = 0; i < f; ++i)
          for (int j = 0; j < f; ++j) v = std::max(v, m(n, 0, y * f + i, x * f + j));
        out(n, 0, y, x) = v;
      }
  return out;
}

std::map<std::string, Shape> as_map(const std::vector<std::pair<std::string, Shape>>& v) {
  return {v.begin(), v.end()};
}

LatentGrid<double> latent(Rng& rng, int n = 1) {
  return {constant(random_tensor<double>(Shape{n, 4, 4, 4}, rng)), true};
}

}  // namespace

TEST_CASE("downsample_mask: constant masks stay constant") {
  for (int level = 0; level < 4; ++level) {
    auto zeros = downsample_mask(Tensor<double>(Shape{1, 1, 16, 16}), level);
    auto ones = downsample_mask(Tensor<double>(Shape{1, 1, 16, 16}, 1.0), level);
    CHECK(zeros.h() == 16 >> level);
    CHECK((zeros.array() == 0.0).all());
    CHECK((ones.array() == 1.0).all());
  }
}

TEST_CASE("downsample_mask: a single edited pixel marks exactly its coarse cell") {
  Tensor<double> m(Shape{1, 1, 8, 8});
  m(0, 0, 0, 0) = 1;
  auto d = downsample_mask(m, 1);
  CHECK(d(0, 0, 0, 0) == 1.0);
  CHECK(d.array().sum() == 1.0);
}

TEST_CASE("downsample_mask agrees with a max-pool oracle on random masks") {
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor<double> m(Shape{2, 1, 16, 16});
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, 0.0, 1.0) < 0.05 ? 1.0 : 0.0;
    for (int level = 1; level < 4; ++level) CHECK(bit_equal(downsample_mask(m, level), pool_oracle(m, 1 << level)));
  }
  CHECK_THROWS(downsample_mask(Tensor<double>(Shape{1, 1, 6, 6}), 2));
}

TEST_CASE("addition blend: m=1 gives f_dec, m=0 gives f_cond, mixed masks select per element") {
  Rng rng(2);
  auto dec = constant(random_tensor<double>(Shape{2, 3, 4, 4}, rng));
  auto cond = constant(random_tensor<double>(Shape{2, 3, 4, 4}, rng));
  CHECK(bit_equal(mgb_blend(dec, cond, Tensor<double>(Shape{2, 1, 4, 4}, 1.0), BlendMode::Addition, kNoFusion).value(),
                  dec.value()));
  CHECK(bit_equal(mgb_blend(dec, cond, Tensor<double>(Shape{2, 1, 4, 4}), BlendMode::Addition, kNoFusion).value(),
                  cond.value()));
  Tensor<double> m(Shape{2, 1, 4, 4});
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, 0.0, 1.0) < 0.5 ? 1.0 : 0.0;
  auto out = mgb_blend(dec, cond, m, BlendMode::Addition, kNoFusion).value();
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
          CHECK(out(n, c, y, x) == (m(n, 0, y, x) == 1.0 ? dec.value()(n, c, y, x) : cond.value()(n, c, y, x)));
}

TEST_CASE("concatenation blend applies the 1x1 fusion to [f_dec, f_cond, 1 - m]") {
  Rng rng(3);
  auto dec = constant(random_tensor<double>(Shape{1, 2, 3, 3}, rng));
  auto cond = constant(random_tensor<double>(Shape{1, 2, 3, 3}, rng));
  Tensor<double> m(Shape{1, 1, 3, 3});
  m(0, 0, 1, 1) = 1;
  Conv2d<double> fusion(5, 2, 1, 1, 0, rng);
  auto out = mgb_blend(dec, cond, m, BlendMode::Concatenation, &fusion).value();
  const auto& w = fusion.weight.value();
  for (int o = 0; o < 2; ++o)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) {
        double v = (*fusion.bias).value()(o, 0, 0, 0);
        for (int c = 0; c < 2; ++c) v += w(o, c, 0, 0) * dec.value()(0, c, y, x) + w(o, 2 + c, 0, 0) * cond.value()(0, c, y, x);
        v += w(o, 4, 0, 0) * (1.0 - m(0, 0, y, x));
        CHECK(out(0, o, y, x) == doctest::Approx(v).epsilon(1e-12));
      }
  Conv2d<double> wrong(4, 2, 1, 1, 0, rng);
  CHECK_THROWS_AS(mgb_blend(dec, cond, m, BlendMode::Concatenation, &wrong), ShapeError);
  CHECK_THROWS_AS(mgb_blend(dec, cond, m, BlendMode::Concatenation, kNoFusion), ConfigError);
  CHECK_THROWS_AS(mgb_blend(dec, constant(Tensor<double>(Shape{1, 2, 2, 2})), m, BlendMode::Addition, kNoFusion), ShapeError);
}

TEST_CASE("base preset shapes for a 64x64 latent") {
  DecoderArchConfig cfg;
  auto s = as_map(trace_shapes(cfg));
  CHECK(s.at("cond.0") == Shape{1, 128, 512, 512});
  CHECK(s.at("cond.1") == Shape{1, 256, 512, 512});
  CHECK(s.at("cond.2") == Shape{1, 512, 256, 256});
  CHECK(s.at("cond.3") == Shape{1, 512, 128, 128});
  CHECK(s.at("cond.4") == Shape{1, 512, 64, 64});
  CHECK(s.at("mid") == Shape{1, 512, 64, 64});
  CHECK(s.at("level.3.upsample") == Shape{1, 512, 128, 128});
  CHECK(s.at("level.1.concat") == Shape{1, 1025, 256, 256});
  CHECK(s.at("level.0.concat") == Shape{1, 513, 512, 512});
  CHECK(s.at("level.0.blend") == Shape{1, 256, 512, 512});
  CHECK(s.at("out.concat") == Shape{1, 257, 512, 512});
  CHECK(s.at("out.norm") == Shape{1, 128, 512, 512});
  CHECK(s.at("out.conv") == Shape{1, 3, 512, 512});
}

TEST_CASE("larger presets widen and deepen the decoder") {
  DecoderArchConfig cfg;
  cfg.scale_preset = ScalePreset::Large;
  CHECK(cfg.width() == 192);
  CHECK(cfg.depth() == 4);
  CHECK(as_map(trace_shapes(cfg)).at("mid") == Shape{1, 768, 64, 64});
  cfg.scale_preset = ScalePreset::LargeX2;
  CHECK(cfg.width() == 256);
  CHECK(cfg.depth() == 8);
}

TEST_CASE("the unconditional decoder trace has no blend entries") {
  DecoderArchConfig cfg;
  cfg.conditional = false;
  for (const auto& [name, shape] : trace_shapes(cfg)) {
    CHECK(name.find("concat") == std::string::npos);
    CHECK(name.find("blend") == std::string::npos);
  }
}

TEST_CASE("a real forward pass produces the traced output shape") {
  for (auto mode : {BlendMode::Addition, BlendMode::Concatenation}) {
    Rng rng(4);
    auto cfg = tiny(mode);
    Decoder<float> dec(cfg, rng);
    ConditionalBranch<float> branch(cfg, rng);
    auto z = LatentGrid<float>{constant(random_tensor<float>(Shape{2, 4, 4, 4}, rng)), true};
    Tensor<float> m(Shape{2, 1, 16, 16});
    auto out = dec.decode(z, branch.features(constant(random_tensor<float>(Shape{2, 3, 16, 16}, rng)), m), m);
    const auto trace = trace_shapes(cfg);
    CHECK(out.shape() == Shape{2, 3, trace.back().second.h, trace.back().second.w});
    CHECK(out.value().array().abs().maxCoeff() <= 1.0f);
  }
}

TEST_CASE("full-mask addition decode equals the decoder with the branch removed") {
  Rng rng_a(5), rng_b(5), rng(6);
  Decoder<double> conditional(tiny(BlendMode::Addition), rng_a);
  Decoder<double> plain(tiny(BlendMode::Addition, false), rng_b);
  ConditionalBranch<double> branch(tiny(BlendMode::Addition), rng);
  auto z = latent(rng);
  Tensor<double> ones(Shape{1, 1, 16, 16}, 1.0);
  auto x = random_tensor<double>(Shape{1, 3, 16, 16}, rng);
  auto pyr = branch.features(constant(masked_input(x, ones)), ones);
  auto a = conditional.decode(z, pyr, ones).value();
  CHECK(bit_equal(a, plain.decode_unconditional(z).value()));
  CHECK(bit_equal(a, conditional.decode_unconditional(z).value()));
}

TEST_CASE("full-mask outputs do not depend on the source image") {
  for (auto mode : {BlendMode::Addition, BlendMode::Concatenation}) {
    Rng rng(7);
    auto cfg = tiny(mode);
    Decoder<double> dec(cfg, rng);
    ConditionalBranch<double> branch(cfg, rng);
    auto z = latent(rng);
    Tensor<double> ones(Shape{1, 1, 16, 16}, 1.0);
    auto run = [&](const Tensor<double>& x) {
      return dec.decode(z, branch.features(constant(masked_input(x, ones)), ones), ones).value();
    };
    auto a = run(random_tensor<double>(Shape{1, 3, 16, 16}, rng));
    auto b = run(random_tensor<double>(Shape{1, 3, 16, 16}, rng));
    CHECK(bit_equal(a, b));
  }
}

TEST_CASE("decode_unconditional is decode with zeros and an all-ones mask") {
  for (auto mode : {BlendMode::Addition, BlendMode::Concatenation}) {
    Rng rng(8);
    Decoder<double> dec(tiny(mode), rng);
    auto z = latent(rng, 2);
    auto a = dec.decode_unconditional(z).value();
    auto b = dec.decode(z, dec.zero_pyramid(2), Tensor<double>(Shape{2, 1, 16, 16}, 1.0)).value();
    CHECK(bit_equal(a, b));
    CHECK(a.shape() == Shape{2, 3, 16, 16});
    Rng again(8);
    Decoder<double> twin(tiny(mode), again);
    CHECK(bit_equal(twin.decode_unconditional(z).value(), a));
  }
}

TEST_CASE("decoder rejects mismatched latents and pyramids") {
  Rng rng(9);
  auto cfg = tiny(BlendMode::Concatenation);
  Decoder<double> dec(cfg, rng);
  CHECK_THROWS_AS(dec.decode_unconditional({constant(Tensor<double>(Shape{1, 4, 5, 5})), true}), ConfigError);
  auto pyr = dec.zero_pyramid(1);
  pyr.levels.pop_back();
  CHECK_THROWS_AS(dec.decode(latent(rng), pyr, Tensor<double>(Shape{1, 1, 16, 16})), ConfigError);
  CHECK_THROWS_AS(dec.decode(latent(rng), dec.zero_pyramid(1), Tensor<double>(Shape{1, 1, 8, 8})), ConfigError);
}

TEST_CASE("the concatenation decoder exposes one fusion conv per blend point") {
  Rng rng(10);
  auto cfg = tiny(BlendMode::Concatenation);
  Decoder<float> dec(cfg, rng);
  int fusions = 0;
  for (const auto& [name, v] : dec.parameters())
    if (name.find("fusion.weight") != std::string::npos) ++fusions;
  CHECK(fusions == cfg.blend_points());
  CHECK(dec.last_layer().out_channels() == 3);
}
