#include "doctest.h"

#include "asymvq/cond_branch.hpp"
#include "asymvq/decoder.hpp"
#include "support/synthetic.hpp"

using namespace asymvq;
using testing::random_tensor;

namespace {

// Direct per-location evaluation of a partial convolution.
std::pair<Tensor<double>, Tensor<double>> partial_conv_oracle(const Tensor<double>& x, const Tensor<double>& valid,
                                                              const Conv2d<double>& conv) {
  const auto& w = conv.weight.value();
  const int k = conv.kernel(), s = conv.stride, p = conv.padding;
  const int oh = (x.h() + 2 * p - k) / s + 1, ow = (x.w() + 2 * p - k) / s + 1;
  Tensor<double> out(Shape{x.n(), w.n(), oh, ow});
  Tensor<double> upd(Shape{x.n(), 1, oh, ow});
  for (int n = 0; n < x.n(); ++n)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        int window = 0;
        double count = 0;
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            const int iy = oy * s - p + ky, ix = ox * s - p + kx;
            if (iy < 0 || ix < 0 || iy >= x.h() || ix >= x.w()) continue;
            ++window;
            count += valid(n, 0, iy, ix);
          }
        if (count == 0) continue;
        upd(n, 0, oy, ox) = 1;
        for (int o = 0; o < w.n(); ++o) {
          double acc = 0;
          for (int c = 0; c < x.c(); ++c)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * s - p + ky, ix = ox * s - p + kx;
                if (iy < 0 || ix < 0 || iy >= x.h() || ix >= x.w()) continue;
                acc += x(n, c, iy, ix) * valid(n, 0, iy, ix) * w(o, c, ky, kx);
              }
          out(n, o, oy, ox) = acc * window / count + (*conv.bias).value()(o, 0, 0, 0);
        }
      }
  return {out, upd};
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  return (a.array() - b.array()).abs().maxCoeff();
}

DecoderArchConfig tiny(BlendMode mode) {
  DecoderArchConfig cfg;
  cfg.base_channels = 8;
  cfg.channel_mult = {1, 2, 2};
  cfg.res_blocks = 1;
  cfg.blend_mode = mode;
  cfg.latent_h = 4;
  cfg.latent_w = 4;
  return cfg;
}

}  // namespace

TEST_CASE("partial conv with an all-valid map is the ordinary convolution") {
  Rng rng(1);
  for (auto [k, s, p] : {std::array{3, 1, 1}, std::array{4, 2, 1}}) {
    Conv2d<double> conv(3, 5, k, s, p, rng);
    auto x = constant(random_tensor<double>(Shape{2, 3, 8, 8}, rng));
    auto [out, upd] = partial_conv(x, Tensor<double>(Shape{2, 1, 8, 8}, 1.0), conv);
    CHECK(max_abs_diff(out.value(), conv(x).value()) < 1e-13);
    CHECK((upd.array() == 1.0).all());
  }
}

TEST_CASE("partial conv with no valid pixel yields zeros and an all-invalid map") {
  Rng rng(2);
  Conv2d<double> conv(3, 4, 3, 1, 1, rng);
  auto [out, upd] = partial_conv(constant(random_tensor<double>(Shape{1, 3, 6, 6}, rng)), Tensor<double>(Shape{1, 1, 6, 6}), conv);
  CHECK((out.value().array() == 0.0).all());
  CHECK((upd.array() == 0.0).all());
}

TEST_CASE("5x5 input with one invalid pixel matches the renormalising oracle") {
  Rng rng(3);
  Conv2d<double> conv(2, 3, 3, 1, 1, rng);
  auto x = random_tensor<double>(Shape{1, 2, 5, 5}, rng);
  Tensor<double> valid(Shape{1, 1, 5, 5}, 1.0);
  valid(0, 0, 2, 3) = 0;
  auto [out, upd] = partial_conv(constant(x), valid, conv);
  auto [want, want_upd] = partial_conv_oracle(x, valid, conv);
  CHECK(max_abs_diff(out.value(), want) < 1e-13);
  CHECK(bit_equal(upd, want_upd));
  // The corner window has 4 in-bounds taps, not 9.
  Tensor<double> corner_valid(Shape{1, 1, 5, 5}, 1.0);
  corner_valid(0, 0, 0, 1) = 0;
  auto [c_out, c_upd] = partial_conv(constant(x), corner_valid, conv);
  CHECK(max_abs_diff(c_out.value(), partial_conv_oracle(x, corner_valid, conv).first) < 1e-13);
}

TEST_CASE("random partial conv cases match the oracle") {
  Rng rng(4);
  for (int trial = 0; trial < 25; ++trial) {
    const bool strided = trial % 2 == 1;
    Conv2d<double> conv(2, 3, strided ? 4 : 3, strided ? 2 : 1, 1, rng);
    auto x = random_tensor<double>(Shape{1, 2, 8, 6}, rng);
    Tensor<double> valid(Shape{1, 1, 8, 6});
    const double p = uniform(rng, 0.0, 1.0);
    for (Eigen::Index i = 0; i < valid.size(); ++i) valid.data()[i] = uniform(rng, 0.0, 1.0) < p ? 1.0 : 0.0;
    auto [out, upd] = partial_conv(constant(x), valid, conv);
    auto [want, want_upd] = partial_conv_oracle(x, valid, conv);
    CHECK(max_abs_diff(out.value(), want) < 1e-12);
    CHECK(bit_equal(upd, want_upd));
  }
}

TEST_CASE("partial conv rejects a validity map of the wrong size") {
  Rng rng(5);
  Conv2d<double> conv(3, 3, 3, 1, 1, rng);
  CHECK_THROWS_AS(partial_conv(constant(Tensor<double>(Shape{1, 3, 4, 4})), Tensor<double>(Shape{1, 1, 4, 5}), conv),
                  ShapeError);
}

TEST_CASE("masked input zeroes edited pixels across channels") {
  Rng rng(6);
  auto x = random_tensor<double>(Shape{1, 3, 4, 4}, rng);
  Tensor<double> m(Shape{1, 1, 4, 4});
  m(0, 0, 1, 2) = 1;
  auto y = masked_input(x, m);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) CHECK(y(0, c, i, j) == (i == 1 && j == 2 ? 0.0 : x(0, c, i, j)));
}

TEST_CASE("pyramid level shapes follow the decoder blend points") {
  for (auto mode : {BlendMode::Addition, BlendMode::Concatenation}) {
    Rng rng(7);
    auto cfg = tiny(mode);
    ConditionalBranch<float> branch(cfg, rng);
    auto y = constant(random_tensor<float>(Shape{2, 3, 16, 16}, rng));
    auto pyr = branch.features(y, Tensor<float>(Shape{2, 1, 16, 16}));
    REQUIRE(pyr.size() == static_cast<std::size_t>(cfg.blend_points()));
    const auto trace = trace_shapes(cfg);
    for (int p = 0; p < cfg.blend_points(); ++p) {
      const int div = cfg.blend_divisor(p);
      CHECK(pyr[p].shape() == Shape{2, cfg.blend_channels(p), 16 / div, 16 / div});
      const Shape& traced = trace[p].second;
      CHECK(trace[p].first == "cond." + std::to_string(p));
      CHECK(traced.c == pyr[p].shape().c);
      CHECK(traced.h == pyr[p].shape().h);
    }
  }
}

TEST_CASE("the layer schedule is two 3x3 stride-1 layers then 4x4 stride-2 layers") {
  Rng rng(8);
  DecoderArchConfig cfg;
  cfg.base_channels = 8;
  ConditionalBranch<float> branch(cfg, rng);
  REQUIRE(branch.layers().size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(branch.layers()[i].kernel() == (i < 2 ? 3 : 4));
    CHECK(branch.layers()[i].stride == (i < 2 ? 1 : 2));
  }
}

TEST_CASE("concatenation-mode pyramids ignore content inside the edited region") {
  Rng rng(9);
  auto cfg = tiny(BlendMode::Concatenation);
  ConditionalBranch<double> branch(cfg, rng);
  Tensor<double> m(Shape{1, 1, 16, 16});
  for (int i = 3; i < 11; ++i)
    for (int j = 5; j < 14; ++j) m(0, 0, i, j) = 1;
  auto a = random_tensor<double>(Shape{1, 3, 16, 16}, rng);
  auto b = a;
  for (int c = 0; c < 3; ++c)
    for (int i = 3; i < 11; ++i)
      for (int j = 5; j < 14; ++j) b(0, c, i, j) = uniform(rng, -1.0, 1.0);
  // Raw images with different edited content, before any masking.
  auto pa = branch.features(constant(a), m);
  auto pb = branch.features(constant(b), m);
  for (std::size_t l = 0; l < pa.size(); ++l) CHECK(bit_equal(pa[l].value(), pb[l].value()));
}

TEST_CASE("a resolution that does not match the decoder is a configuration error") {
  Rng rng(10);
  ConditionalBranch<float> branch(tiny(BlendMode::Addition), rng);
  CHECK_THROWS_AS(branch.features(constant(Tensor<float>(Shape{1, 3, 32, 32})), Tensor<float>(Shape{1, 1, 32, 32})),
                  ConfigError);
}
