#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "asymvq/image_io.hpp"
#include "asymvq/training.hpp"

namespace asymvq::testing {

/// Procedural RGB scene: a two-colour linear gradient background with a few filled circles,
/// rectangles and triangles, some of them striped.
Image8 synthetic_image(Rng& rng, int size);

/// `count` scenes drawn from `seed`, in memory. Paths are "synthetic/NNNNN.png".
Dataset synthetic_dataset(int count, int size, std::uint64_t seed);

/// Writes the same scenes as PNG files into `dir`; returns the file paths.
std::vector<std::filesystem::path> write_synthetic_corpus(const std::filesystem::path& dir, int count, int size,
                                                          std::uint64_t seed);

/// Random tensor with entries uniform in [lo, hi).
template <typename S>
Tensor<S> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<S> t(shape);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<S>(uniform(rng, lo, hi));
  return t;
}

/// Fresh scratch directory under the system temp dir (removed first if present).
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace asymvq::testing
