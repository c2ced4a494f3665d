#include "asymvq/quantizer.hpp"

#include <limits>

namespace asymvq {

template <typename S>
Codebook<S>::Codebook(int size, int dim, Rng& rng) {
  if (size < 1 || dim < 1) throw ConfigError("codebook needs K >= 1 and n_z >= 1");
  entries = parameter<S>(Shape{size, dim, 1, 1}, S(1) / static_cast<S>(size), rng);
}

template <typename S>
Codebook<S>::Codebook(Tensor<S> table) : entries(Var<S>::leaf(std::move(table), true)) {
  validate();
}

template <typename S>
void Codebook<S>::validate() const {
  if (!entries.defined() || entries.shape().n < 1 || entries.shape().c < 1)
    throw ConfigError("empty codebook");
  if (entries.shape().h != 1 || entries.shape().w != 1) throw ConfigError("codebook must be K x n_z x 1 x 1");
  if (!entries.value().all_finite()) throw ConfigError("codebook contains non-finite entries");
}

template <typename S>
std::pair<LatentGrid<S>, IndexGrid> quantize(const LatentGrid<S>& z_hat, const Codebook<S>& book) {
  book.validate();
  if (z_hat.quantized) throw ConfigError("quantize: latent is already quantized");
  const Shape s = z_hat.values.shape();
  if (s.c != book.dim())
    throw ConfigError("quantize: latent has " + std::to_string(s.c) + " channels, codebook n_z is " +
                      std::to_string(book.dim()));
  const Tensor<S>& z = z_hat.values.value();
  const Tensor<S>& table = book.entries.value();
  const int size = book.size();

  IndexGrid grid{s.n, s.h, s.w, std::vector<int>(static_cast<std::size_t>(s.n) * s.h * s.w)};
  std::vector<S> vec(static_cast<std::size_t>(s.c));
  for (int b = 0; b < s.n; ++b)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        for (int c = 0; c < s.c; ++c) vec[c] = z(b, c, y, x);
        S best = std::numeric_limits<S>::infinity();
        int best_k = 0;
        for (int k = 0; k < size; ++k) {
          S d = 0;
          for (int c = 0; c < s.c; ++c) {
            const S diff = vec[c] - table(k, c, 0, 0);
            d += diff * diff;
          }
          if (d < best) {
            best = d;
            best_k = k;
          }
        }
        grid.indices[(static_cast<std::size_t>(b) * s.h + y) * s.w + x] = best_k;
      }
  LatentGrid<S> out{gather_codewords(book.entries, grid.indices, s.n, s.h, s.w), true};
  return {std::move(out), std::move(grid)};
}

template <typename S>
LatentGrid<S> straight_through(const LatentGrid<S>& z_hat, const LatentGrid<S>& z_q) {
  return {straight_through(z_hat.values, z_q.values), true};
}

template <typename S>
VqLosses<S> vq_losses(const LatentGrid<S>& z_enc, const LatentGrid<S>& z_q, S beta) {
  require_same_shape(z_enc.values.shape(), z_q.values.shape(), "vq_losses");
  Var<S> codebook = mean(square(sub(detach(z_enc.values), z_q.values)));
  Var<S> commit = scale(mean(square(sub(detach(z_q.values), z_enc.values))), beta);
  return {std::move(codebook), std::move(commit)};
}

template struct Codebook<float>;
template struct Codebook<double>;
template std::pair<LatentGrid<float>, IndexGrid> quantize(const LatentGrid<float>&, const Codebook<float>&);
template std::pair<LatentGrid<double>, IndexGrid> quantize(const LatentGrid<double>&, const Codebook<double>&);
template LatentGrid<float> straight_through(const LatentGrid<float>&, const LatentGrid<float>&);
template LatentGrid<double> straight_through(const LatentGrid<double>&, const LatentGrid<double>&);
template VqLosses<float> vq_losses(const LatentGrid<float>&, const LatentGrid<float>&, float);
template VqLosses<double> vq_losses(const LatentGrid<double>&, const LatentGrid<double>&, double);

}  // namespace asymvq
