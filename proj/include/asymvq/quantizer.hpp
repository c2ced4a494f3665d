#pragma once

#include <utility>
#include <vector>

#include "asymvq/nn.hpp"

namespace asymvq {

/// K learnable codewords of dimension n_z, stored as a K x n_z x 1 x 1 trainable leaf.
template <typename S>
struct Codebook {
  Var<S> entries;

  Codebook() = default;
  /// Uniform(-1/K, 1/K) initialisation.
  Codebook(int size, int dim, Rng& rng);
  explicit Codebook(Tensor<S> table);

  [[nodiscard]] int size() const { return entries.shape().n; }
  [[nodiscard]] int dim() const { return entries.shape().c; }
  void validate() const;
  void collect(ParameterSet<S>& out, const std::string& prefix) const { out.add(prefix + "entries", entries); }
};

template <typename S>
struct LatentGrid {
  Var<S> values;  // B x n_z x h x w
  bool quantized = false;
};

struct IndexGrid {
  int n = 0;
  int h = 0;
  int w = 0;
  std::vector<int> indices;  // row-major (n, y, x)

  [[nodiscard]] int at(int b, int y, int x) const { return indices[(static_cast<std::size_t>(b) * h + y) * w + x]; }
};

/// Nearest codeword (squared Euclidean, lowest index on ties) for every spatial vector. The
/// returned values are gathered from the codebook, so gradients reach the codewords.
template <typename S>
std::pair<LatentGrid<S>, IndexGrid> quantize(const LatentGrid<S>& z_hat, const Codebook<S>& book);

/// Forward value of `z_q`, identity gradient into `z_hat`.
template <typename S>
LatentGrid<S> straight_through(const LatentGrid<S>& z_hat, const LatentGrid<S>& z_q);

template <typename S>
struct VqLosses {
  Var<S> codebook;  // mean ||sg[z_enc] - z_q||^2
  Var<S> commit;    // beta * mean ||sg[z_q] - z_enc||^2
};

template <typename S>
VqLosses<S> vq_losses(const LatentGrid<S>& z_enc, const LatentGrid<S>& z_q, S beta);

}  // namespace asymvq
