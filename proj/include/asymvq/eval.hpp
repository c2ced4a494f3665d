#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "asymvq/image_io.hpp"
#include "asymvq/masks.hpp"
#include "asymvq/training.hpp"

namespace asymvq {

/// Mean squared error over the non-edited (m = 0) pixels of item `n`, all channels. Empty when
/// every pixel is edited.
template <typename S>
std::optional<double> pre_error(const Tensor<S>& x, const Tensor<S>& x_hat, const MaskGrid& m, int n = 0);

/// Pixel-space paste: x_src where m = 0, x_hat where m = 1. `m` is N x 1 x H x W.
template <typename S>
Tensor<S> naive_blend(const Tensor<S>& x_src, const Tensor<S>& x_hat, const Tensor<S>& m);

/// PSNR of item `n` for images in [-1, 1] (peak-to-peak 2); +inf for identical images.
template <typename S>
double psnr(const Tensor<S>& x, const Tensor<S>& x_hat, int n = 0);
template <typename S>
double mae(const Tensor<S>& x, const Tensor<S>& x_hat, int n = 0);

inline constexpr double kPreErrorUnit = 1e-5;

struct EvalRecord {
  std::string image;
  std::string mask;
  double coverage = 0;
  int coverage_bin = 0;
  std::optional<double> pre_error;  // raw MSE
  double psnr = 0;
  double mae = 0;
};

struct EvalAggregate {
  int count = 0;
  int pre_error_count = 0;
  std::optional<double> pre_error;
  std::optional<double> psnr;  // mean over finite values
  std::optional<double> mae;
};

/// Means over `records`, optionally restricted to one coverage bin.
EvalAggregate aggregate(const std::vector<EvalRecord>& records, std::optional<int> bin = std::nullopt);

struct EvalReport {
  std::string model;
  std::int64_t step = 0;
  bool condition = true;
  std::vector<EvalRecord> records;
  std::array<EvalAggregate, kCoverageBins> bins{};
  EvalAggregate overall;

  /// Recomputes every aggregate from `records`.
  void finalize();
};

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
/// Aligned plain-text table: one row per coverage bin plus the overall mean.
std::string report_to_text(const EvalReport& report);

/// Side-by-side table in the Method / FID / LPIPS / Pre_error layout. FID and LPIPS print as "-".
std::string comparison_table(const std::vector<std::pair<std::string, EvalAggregate>>& rows);

/// Binary masks paired with the files they came from.
struct MaskCorpus {
  std::vector<std::string> paths;
  std::vector<MaskGrid> masks;
};

/// Masks listed in `dir`/coverage.tsv, or every PNG in `dir` sorted by path.
MaskCorpus load_mask_corpus(const std::filesystem::path& dir);

/// x_hat for a batch: conditional decode on the masked input, or the unconditional decode.
Tensor<float> reconstruct(const Model& model, const Tensor<float>& x, const Tensor<float>& mask, bool condition);

/// Image i is paired with mask i mod |masks|. Records are ordered by image path.
EvalReport evaluate_model(const Model& model, const Dataset& data, const MaskCorpus& masks, bool condition,
                          int batch_size = 16);
EvalReport evaluate_checkpoint(const Checkpoint& ckpt, const Dataset& data, const MaskCorpus& masks, bool condition);

struct GridRow {
  Image8 input;
  Image8 masked;
  Image8 output;
  Image8 naive;
};

inline const std::vector<std::string> kGridColumns{"input", "masked", "output", "naive blend"};

/// Writes the rows as one labelled PNG. Throws InputError (and writes nothing) when `rows` is empty.
void emit_grid(const std::vector<GridRow>& rows, const std::filesystem::path& path);

/// Grid rows for the first `count` images of `data` with their paired masks.
std::vector<GridRow> grid_rows(const Model& model, const Dataset& data, const MaskCorpus& masks, bool condition,
                               int count);

}  // namespace asymvq
