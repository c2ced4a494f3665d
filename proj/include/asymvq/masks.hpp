#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "asymvq/rng.hpp"
#include "asymvq/tensor.hpp"

namespace asymvq {

/// Binary H x W map, 1 = edited.
using MaskGrid = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class MaskKind { RandomIrregular, RandomBox, Mixed, Full };
std::string to_string(MaskKind k);
MaskKind parse_mask_kind(const std::string& s);

/// Random-mask recipe: thick random polylines plus random axis-aligned boxes. Sizes are
/// fractions of the image side (stroke width of min(H, W); box sides of H and W respectively).
struct MaskSpec {
  MaskKind kind = MaskKind::Mixed;
  double coverage_lo = 0.0;
  double coverage_hi = 1.0;

  int strokes_min = 1;
  int strokes_max = 4;
  double stroke_width_min = 0.05;
  double stroke_width_max = 0.15;
  int vertices_min = 3;
  int vertices_max = 8;
  double segment_length_min = 0.1;
  double segment_length_max = 0.4;

  int boxes_min = 0;
  int boxes_max = 3;
  double box_h_min = 0.1;
  double box_h_max = 0.4;
  double box_w_min = 0.1;
  double box_w_max = 0.4;

  std::uint64_t seed = 0;
  int max_attempts = 50;

  void validate() const;
  [[nodiscard]] bool in_range(double coverage) const {
    return coverage >= coverage_lo && (coverage < coverage_hi || (coverage_hi >= 1.0 && coverage <= 1.0));
  }
};

struct GeneratedMask {
  MaskGrid mask;
  double coverage = 0.0;
  bool flagged = false;  // coverage target missed after every attempt; closest attempt kept
  int attempts = 0;
};

/// Draws one mask. Random kinds retry up to `max_attempts` times to land in the coverage range.
GeneratedMask generate_mask(const MaskSpec& spec, int height, int width, Rng& rng);

/// Fraction of edited pixels.
double coverage(const MaskGrid& mask);

/// 0..4 for [0, 0.1), ..., [0.4, 0.5); 5 for >= 0.5. Exact integer arithmetic.
int coverage_bin(const MaskGrid& mask);
int coverage_bin_from_counts(std::int64_t edited, std::int64_t total);
std::string coverage_bin_label(int bin);
inline constexpr int kCoverageBins = 6;

/// Per-step training mask recipe: Full with probability `full_mask_prob`, otherwise `random_spec`.
MaskSpec training_mask_schedule(std::int64_t step, Rng& rng, double full_mask_prob = 0.5,
                                const MaskSpec& random_spec = MaskSpec{});

/// Default random recipe for training masks.
MaskSpec default_training_spec();

template <typename S>
Tensor<S> mask_to_tensor(const std::vector<MaskGrid>& masks);
template <typename S>
MaskGrid tensor_to_mask(const Tensor<S>& t, int n);

struct MaskRecord {
  std::string path;
  double coverage = 0.0;
};

/// "path<TAB>coverage" per line.
void write_coverage_manifest(const std::filesystem::path& file, const std::vector<MaskRecord>& records);
std::vector<MaskRecord> read_coverage_manifest(const std::filesystem::path& file);

}  // namespace asymvq
