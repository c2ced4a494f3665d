#include "doctest.h"

#include <cmath>
#include <fstream>
#include <sstream>

#include "asymvq/eval.hpp"
#include "support/synthetic.hpp"

using namespace asymvq;

namespace {

double masked_mse_loop(const Tensor<double>& x, const Tensor<double>& y, const MaskGrid& m) {
  double acc = 0;
  int count = 0;
  for (int c = 0; c < x.c(); ++c)
    for (int i = 0; i < x.h(); ++i)
      for (int j = 0; j < x.w(); ++j)
        if (m(i, j) == 0) {
          acc += (x(0, c, i, j) - y(0, c, i, j)) * (x(0, c, i, j) - y(0, c, i, j));
          ++count;
        }
  return acc / count;
}

MaskGrid random_mask(Rng& rng, int h, int w) {
  MaskGrid m(h, w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) m(i, j) = uniform(rng, 0.0, 1.0) < 0.4 ? 1 : 0;
  return m;
}

TrainConfig tiny_stage1_config() {
  TrainConfig cfg;
  cfg.stage = 1;
  cfg.image_size = 16;
  cfg.base_channels = 8;
  cfg.res_blocks = 1;
  cfg.codebook_size = 16;
  cfg.disc_channels = 8;
  cfg.disc_layers = 1;
  return cfg;
}

MaskCorpus corpus_of(std::vector<MaskGrid> masks) {
  MaskCorpus c;
  for (std::size_t i = 0; i < masks.size(); ++i) c.paths.push_back("m" + std::to_string(i) + ".png");
  c.masks = std::move(masks);
  return c;
}

}  // namespace

TEST_CASE("pre_error of an exact reconstruction is zero") {
  Rng rng(1);
  auto x = testing::random_tensor<double>(Shape{1, 3, 8, 8}, rng);
  CHECK(*pre_error(x, x, random_mask(rng, 8, 8)) == 0.0);
}

TEST_CASE("a 0.1 offset on the preserved half gives 0.01, i.e. 1000 units") {
  Rng rng(2);
  auto x = testing::random_tensor<double>(Shape{1, 3, 8, 8}, rng);
  MaskGrid m = MaskGrid::Zero(8, 8);
  m.bottomRows(4).setOnes();
  Tensor<double> x_hat = x;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 8; ++j) x_hat(0, c, i, j) += 0.1;
  // The edited half may hold anything.
  for (int c = 0; c < 3; ++c)
    for (int i = 4; i < 8; ++i)
      for (int j = 0; j < 8; ++j) x_hat(0, c, i, j) = 5.0;
  const double e = *pre_error(x, x_hat, m);
  CHECK(e == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(e / kPreErrorUnit == doctest::Approx(1000.0).epsilon(1e-9));
}

TEST_CASE("pre_error is absent when every pixel is edited") {
  Rng rng(3);
  auto x = testing::random_tensor<double>(Shape{1, 3, 4, 4}, rng);
  CHECK_FALSE(pre_error(x, x, MaskGrid::Ones(4, 4)).has_value());
}

TEST_CASE("pre_error matches a scalar loop on random pairs") {
  Rng rng(4);
  for (int t = 0; t < 30; ++t) {
    auto x = testing::random_tensor<double>(Shape{1, 3, 9, 7}, rng);
    auto y = testing::random_tensor<double>(Shape{1, 3, 9, 7}, rng);
    MaskGrid m = random_mask(rng, 9, 7);
    if ((m == 1).all()) continue;
    CHECK(std::abs(*pre_error(x, y, m) - masked_mse_loop(x, y, m)) < 1e-9);
  }
}

TEST_CASE("pre_error rejects misaligned inputs") {
  Tensor<double> a(Shape{1, 3, 4, 4}), b(Shape{1, 3, 4, 5});
  CHECK_THROWS_AS(pre_error(a, b, MaskGrid::Zero(4, 4)), ShapeError);
  CHECK_THROWS_AS(pre_error(a, a, MaskGrid::Zero(3, 4)), ShapeError);
}

TEST_CASE("naive blend pastes the source outside the edited region") {
  Rng rng(5);
  auto src = testing::random_tensor<float>(Shape{2, 3, 6, 6}, rng);
  auto gen = testing::random_tensor<float>(Shape{2, 3, 6, 6}, rng);
  Tensor<float> zeros(Shape{2, 1, 6, 6}, 0.0f), ones(Shape{2, 1, 6, 6}, 1.0f);
  CHECK(bit_equal(naive_blend(src, gen, zeros), src));
  CHECK(bit_equal(naive_blend(src, gen, ones), gen));
  for (int t = 0; t < 20; ++t) {
    std::vector<MaskGrid> ms{random_mask(rng, 6, 6), random_mask(rng, 6, 6)};
    auto m = mask_to_tensor<float>(ms);
    auto b = naive_blend(src, gen, m);
    for (int n = 0; n < 2; ++n) {
      if ((ms[static_cast<std::size_t>(n)] == 1).all()) continue;
      CHECK(*pre_error(src, b, ms[static_cast<std::size_t>(n)], n) == 0.0);
    }
  }
  CHECK_THROWS_AS(naive_blend(src, gen, Tensor<float>(Shape{2, 3, 6, 6})), ShapeError);
}

TEST_CASE("PSNR and MAE follow their closed forms") {
  Tensor<double> x(Shape{1, 3, 2, 2}, 0.0), y(Shape{1, 3, 2, 2}, 0.2);
  CHECK(mae(x, y) == doctest::Approx(0.2));
  CHECK(psnr(x, y) == doctest::Approx(10.0 * std::log10(4.0 / 0.04)));
  CHECK(std::isinf(psnr(x, x)));
}

TEST_CASE("aggregates equal recomputation from the records") {
  std::vector<EvalRecord> recs;
  Rng rng(6);
  for (int i = 0; i < 40; ++i) {
    EvalRecord r;
    r.image = "img" + std::to_string(i);
    r.coverage_bin = i % 6;
    r.pre_error = i % 6 == 5 ? std::optional<double>{} : std::optional<double>{uniform(rng, 0.0, 1.0)};
    r.psnr = uniform(rng, 10.0, 30.0);
    r.mae = uniform(rng, 0.0, 1.0);
    recs.push_back(r);
  }
  EvalReport report;
  report.records = recs;
  report.finalize();
  double sum = 0;
  int n = 0;
  for (const auto& r : recs)
    if (r.coverage_bin == 4) {
      sum += *r.pre_error;
      ++n;
    }
  CHECK(report.bins[4].count == n);
  CHECK(*report.bins[4].pre_error == doctest::Approx(sum / n).epsilon(1e-14));
  CHECK(report.bins[5].pre_error_count == 0);
  CHECK_FALSE(report.bins[5].pre_error.has_value());
  CHECK(report.overall.count == 40);
  CHECK(report.overall.pre_error_count == 34);
}

TEST_CASE("reports round-trip through JSON") {
  EvalReport report;
  report.model = "vq/base/addition/stage1";
  report.step = 17;
  report.condition = false;
  for (int i = 0; i < 3; ++i) {
    EvalRecord r;
    r.image = "a" + std::to_string(i);
    r.mask = "m" + std::to_string(i);
    r.coverage = 0.1 * i + 0.05;
    r.coverage_bin = i;
    r.pre_error = 1e-3 * (i + 1);
    r.psnr = 20.0 + i;
    r.mae = 0.01 * i;
    report.records.push_back(r);
  }
  report.finalize();
  const EvalReport back = report_from_json(report_to_json(report));
  CHECK(back.model == report.model);
  CHECK(back.step == 17);
  CHECK_FALSE(back.condition);
  REQUIRE(back.records.size() == 3);
  CHECK(*back.records[2].pre_error == doctest::Approx(3e-3).epsilon(1e-12));
  CHECK(*back.overall.pre_error == doctest::Approx(*report.overall.pre_error).epsilon(1e-12));
  CHECK(report_to_text(report).find("all") != std::string::npos);
  CHECK(comparison_table({{"addition", report.overall}}).find("Pre_error") != std::string::npos);
}

TEST_CASE("an untrained model still yields a finite, well-formed report") {
  const Model model = Model::initialise(tiny_stage1_config());
  const Dataset data = testing::synthetic_dataset(5, 16, 7);
  Rng rng(8);
  MaskCorpus masks = corpus_of({random_mask(rng, 16, 16), MaskGrid::Zero(16, 16)});
  for (bool condition : {true, false}) {
    const EvalReport r = evaluate_model(model, data, masks, condition, 2);
    REQUIRE(r.records.size() == 5);
    CHECK(r.condition == condition);
    for (const auto& rec : r.records) {
      REQUIRE(rec.pre_error.has_value());
      CHECK(std::isfinite(*rec.pre_error));
      CHECK(std::isfinite(rec.psnr));
      CHECK(std::isfinite(rec.mae));
    }
    CHECK(std::is_sorted(r.records.begin(), r.records.end(),
                         [](const EvalRecord& a, const EvalRecord& b) { return a.image < b.image; }));
    CHECK(r.overall.count == 5);
  }
}

TEST_CASE("evaluation rejects incompatible inputs") {
  const Dataset data = testing::synthetic_dataset(2, 16, 9);
  MaskCorpus masks = corpus_of({MaskGrid::Zero(16, 16)});
  TrainConfig stage0 = tiny_stage1_config();
  stage0.stage = 0;
  CHECK_THROWS_AS(evaluate_model(Model::initialise(stage0), data, masks, true), ConfigError);
  CHECK_NOTHROW(evaluate_model(Model::initialise(stage0), data, masks, false));
  const Dataset wrong = testing::synthetic_dataset(2, 32, 9);
  CHECK_THROWS_AS(evaluate_model(Model::initialise(tiny_stage1_config()), wrong, masks, true), InputError);
  CHECK_THROWS_AS(evaluate_model(Model::initialise(tiny_stage1_config()), data, MaskCorpus{}, true), InputError);
}

TEST_CASE("emit_grid writes one labelled PNG and refuses empty input") {
  const auto dir = testing::scratch_dir("emit_grid");
  CHECK_THROWS_AS(emit_grid({}, dir / "none.png"), InputError);
  CHECK_FALSE(std::filesystem::exists(dir / "none.png"));

  const Model model = Model::initialise(tiny_stage1_config());
  const Dataset data = testing::synthetic_dataset(2, 16, 10);
  Rng rng(11);
  const auto rows = grid_rows(model, data, corpus_of({random_mask(rng, 16, 16)}), true, 2);
  emit_grid(rows, dir / "a.png");
  emit_grid(rows, dir / "b.png");
  const Image8 g = read_image(dir / "a.png");
  CHECK(g.width > 4 * 16);
  CHECK(g.height > 2 * 16);
  std::ifstream a(dir / "a.png", std::ios::binary), b(dir / "b.png", std::ios::binary);
  std::ostringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());
}
