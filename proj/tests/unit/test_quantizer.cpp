#include "doctest.h"

#include <limits>
#include <vector>

#include "asymvq/quantizer.hpp"
#include "support/gradcheck.hpp"
#include "support/synthetic.hpp"

using namespace asymvq;
using testing::random_tensor;

namespace {

// Exhaustive scan: first index with the smallest squared distance.
std::vector<int> nearest_oracle(const Tensor<double>& z, const Tensor<double>& book) {
  std::vector<int> out;
  for (int n = 0; n < z.n(); ++n)
    for (int y = 0; y < z.h(); ++y)
      for (int x = 0; x < z.w(); ++x) {
        double best = std::numeric_limits<double>::infinity();
        int arg = -1;
        for (int k = 0; k < book.n(); ++k) {
          double d = 0;
          for (int c = 0; c < z.c(); ++c) {
            const double diff = z(n, c, y, x) - book(k, c, 0, 0);
            d += diff * diff;
          }
          if (d < best) {
            best = d;
            arg = k;
          }
        }
        out.push_back(arg);
      }
  return out;
}

LatentGrid<double> grid(Tensor<double> t, bool trainable = false) {
  return {Var<double>::leaf(std::move(t), trainable), false};
}

}  // namespace

TEST_CASE("quantize picks the unambiguous nearest codeword") {
  Tensor<double> book(Shape{2, 2, 1, 1});
  book(1, 0, 0, 0) = 1;
  book(1, 1, 0, 0) = 1;
  Tensor<double> z(Shape{1, 2, 1, 1}, 0.1);
  auto [zq, idx] = quantize(grid(z), Codebook<double>(book));
  CHECK(idx.at(0, 0, 0) == 0);
  CHECK(zq.values.value()(0, 0, 0, 0) == 0.0);
  CHECK(zq.values.value()(0, 1, 0, 0) == 0.0);
  CHECK(zq.quantized);
}

TEST_CASE("an input equal to a codeword maps to it with zero error") {
  Rng rng(4);
  auto book = random_tensor<double>(Shape{6, 3, 1, 1}, rng);
  Tensor<double> z(Shape{1, 3, 1, 1});
  for (int c = 0; c < 3; ++c) z(0, c, 0, 0) = book(3, c, 0, 0);
  auto [zq, idx] = quantize(grid(z), Codebook<double>(book));
  CHECK(idx.at(0, 0, 0) == 3);
  CHECK(bit_equal(zq.values.value(), z));
}

TEST_CASE("ties resolve to the lowest index") {
  Tensor<double> book(Shape{3, 1, 1, 1});
  book(0, 0, 0, 0) = 5;
  book(1, 0, 0, 0) = -1;
  book(2, 0, 0, 0) = 1;
  Tensor<double> z(Shape{1, 1, 1, 1}, 0.0);
  auto [zq, idx] = quantize(grid(z), Codebook<double>(book));
  CHECK(idx.at(0, 0, 0) == 1);
}

TEST_CASE("random grids agree with an exhaustive scan") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    auto z = random_tensor<double>(Shape{2, 2, 4, 4}, rng);
    auto book = random_tensor<double>(Shape{8, 2, 1, 1}, rng);
    auto [zq, idx] = quantize(grid(z), Codebook<double>(book));
    const auto want = nearest_oracle(z, book);
    REQUIRE(idx.indices == want);
    for (int n = 0; n < 2; ++n)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
          for (int c = 0; c < 2; ++c) CHECK(zq.values.value()(n, c, y, x) == book(idx.at(n, y, x), c, 0, 0));
  }
}

TEST_CASE("quantize rejects dimension mismatch and an empty codebook") {
  Rng rng(2);
  auto z = random_tensor<double>(Shape{1, 3, 2, 2}, rng);
  auto book = random_tensor<double>(Shape{4, 2, 1, 1}, rng);
  CHECK_THROWS_AS(quantize(grid(z), Codebook<double>(book)), ConfigError);
  Codebook<double> empty;
  empty.entries = Var<double>::leaf(Tensor<double>(Shape{0, 3, 1, 1}), false);
  CHECK_THROWS_AS(quantize(grid(z), empty), ConfigError);
}

TEST_CASE("codebook default init stays inside (-1/K, 1/K)") {
  Rng rng(8);
  Codebook<float> book(16, 4, rng);
  CHECK(book.size() == 16);
  CHECK(book.dim() == 4);
  CHECK(book.entries.value().array().abs().maxCoeff() <= 1.0f / 16);
  CHECK(book.entries.requires_grad());
}

TEST_CASE("straight-through forwards z_q and passes the gradient to z_hat unchanged") {
  Rng rng(23);
  auto z_hat = grid(random_tensor<double>(Shape{1, 2, 3, 3}, rng), true);
  auto z_q = grid(random_tensor<double>(Shape{1, 2, 3, 3}, rng));
  auto st = straight_through(z_hat, z_q);
  CHECK(bit_equal(st.values.value(), z_q.values.value()));

  backward(sum(st.values));
  CHECK((z_hat.values.grad().array() == 1.0).all());

  // sum(out^2) with z_q held fixed: d/dz_hat = 2 z_q.
  z_hat.values.zero_grad();
  backward(sum(square(straight_through(z_hat, z_q).values)));
  CHECK((z_hat.values.grad().array() - 2.0 * z_q.values.value().array()).abs().maxCoeff() < 1e-12);
}

TEST_CASE("straight-through gradient of sum(out^2) matches finite differences of the held-fixed path") {
  Rng rng(29);
  auto z_hat = grid(random_tensor<double>(Shape{1, 2, 2, 2}, rng), true);
  Codebook<double> book(random_tensor<double>(Shape{4, 2, 1, 1}, rng));
  const Tensor<double> z_q = quantize(grid(z_hat.values.value()), book).first.values.value();
  // z_hat + c with c = z_q - z_hat frozen at the evaluation point.
  const Tensor<double> offset(z_q.shape(), z_q.array() - z_hat.values.value().array());
  auto fixed_path = [&] { return sum(square(add(z_hat.values, constant(offset)))); };

  backward(sum(square(straight_through(z_hat, LatentGrid<double>{constant(z_q), true}).values)));
  const Tensor<double> analytic = z_hat.values.grad();
  z_hat.values.zero_grad();
  auto r = testing::grad_check(fixed_path, {z_hat.values}, 1e-3);
  CHECK(r.max_rel_error < 1e-4);
  z_hat.values.zero_grad();
  backward(fixed_path());
  CHECK((analytic.array() - z_hat.values.grad().array()).abs().maxCoeff() < 1e-12);
}

TEST_CASE("straight-through rejects mismatched shapes") {
  Rng rng(1);
  auto a = grid(random_tensor<double>(Shape{1, 2, 2, 2}, rng), true);
  auto b = grid(random_tensor<double>(Shape{1, 2, 2, 3}, rng));
  CHECK_THROWS(straight_through(a, b));
}

TEST_CASE("vq losses: closed forms and element-loop oracle") {
  SUBCASE("equal inputs give zero") {
    Rng rng(3);
    auto t = random_tensor<double>(Shape{1, 2, 2, 2}, rng);
    auto l = vq_losses(grid(t), grid(t), 0.25);
    CHECK(l.codebook.value().data()[0] == 0.0);
    CHECK(l.commit.value().data()[0] == 0.0);
  }
  SUBCASE("scalar case") {
    auto l = vq_losses(grid(Tensor<double>(Shape{1, 1, 1, 1}, 1.0)), grid(Tensor<double>(Shape{1, 1, 1, 1}, 0.0)), 0.25);
    CHECK(l.codebook.value().data()[0] == doctest::Approx(1.0));
    CHECK(l.commit.value().data()[0] == doctest::Approx(0.25));
  }
  SUBCASE("random tensors") {
    Rng rng(5);
    auto a = random_tensor<double>(Shape{2, 3, 2, 2}, rng);
    auto b = random_tensor<double>(Shape{2, 3, 2, 2}, rng);
    double acc = 0;
    for (Eigen::Index i = 0; i < a.size(); ++i) acc += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
    const double mse = acc / static_cast<double>(a.size());
    auto l = vq_losses(grid(a), grid(b), 0.3);
    CHECK(l.codebook.value().data()[0] == doctest::Approx(mse).epsilon(1e-12));
    CHECK(l.commit.value().data()[0] == doctest::Approx(0.3 * mse).epsilon(1e-12));
  }
}

TEST_CASE("vq losses route gradients through the stop-gradient correctly") {
  Rng rng(7);
  auto enc = grid(random_tensor<double>(Shape{1, 2, 2, 2}, rng), true);
  auto q = grid(random_tensor<double>(Shape{1, 2, 2, 2}, rng), true);
  auto l = vq_losses(enc, q, 0.25);
  backward(l.codebook);
  CHECK(enc.values.grad().size() == 0);
  CHECK(q.values.grad().size() != 0);
  q.values.zero_grad();
  backward(l.commit);
  CHECK(q.values.grad().size() == 0);
  CHECK(enc.values.grad().size() != 0);
}
