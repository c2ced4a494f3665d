#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "asymvq/checkpoint.hpp"
#include "asymvq/config.hpp"
#include "asymvq/cond_branch.hpp"
#include "asymvq/decoder.hpp"
#include "asymvq/encoder.hpp"
#include "asymvq/losses.hpp"
#include "asymvq/quantizer.hpp"

namespace asymvq {

/// Learning rate before update `step`: linear warmup from 0 to lr_peak over warmup_steps, then
/// cosine decay to 0 at total_steps. Steps outside [0, total_steps] are clamped.
double lr_schedule(std::int64_t step, const TrainConfig& cfg);

/// Images as an N x 3 x S x S tensor in [-1, 1], with their source paths.
struct Dataset {
  std::vector<std::string> paths;
  Tensor<float> images;

  [[nodiscard]] int size() const { return static_cast<int>(paths.size()); }
  /// Items `indices` stacked into one batch.
  [[nodiscard]] Tensor<float> batch(const std::vector<int>& indices) const;
};

/// Loads every PNG/JPEG under `source` (sorted by path) or every path listed in a manifest file
/// (one per line, '#' lines ignored), center-cropped and resized to `image_size`. Throws
/// InputError when nothing could be loaded.
Dataset load_dataset(const std::filesystem::path& source, int image_size);

/// Adam with decoupled per-parameter moment buffers. The parameter list is fixed at
/// construction: the optimizer can only ever update what it owns.
class Adam {
 public:
  Adam() = default;
  Adam(ParameterSet<float> params, double beta1 = 0.5, double beta2 = 0.9, double eps = 1e-8);

  /// One update from the current `.grad` buffers; parameters without a gradient are skipped.
  void step(double lr);

  [[nodiscard]] const ParameterSet<float>& parameters() const { return params_; }
  [[nodiscard]] bool owns(const Node<float>* node) const { return params_.contains_node(node); }
  [[nodiscard]] std::int64_t steps_taken() const { return t_; }

  void save(Checkpoint& ckpt, const std::string& prefix) const;
  void load(const Checkpoint& ckpt, const std::string& prefix);

 private:
  ParameterSet<float> params_;
  std::vector<Tensor<float>> m_;
  std::vector<Tensor<float>> v_;
  double beta1_ = 0.5;
  double beta2_ = 0.9;
  double eps_ = 1e-8;
  std::int64_t t_ = 0;
};

/// Every network of a run. Stage-0 models have a symmetric decoder and no conditional branch;
/// KL-mode models have no codebook.
struct Model {
  TrainConfig config;
  Encoder<float> encoder;
  std::optional<Codebook<float>> codebook;
  Decoder<float> decoder;
  std::optional<ConditionalBranch<float>> cond;
  Discriminator<float> discriminator;
  PerceptualExtractor<float> perceptual;

  /// Fresh initialisation from the seed's "init", "init.disc" and "perceptual" streams.
  static Model initialise(const TrainConfig& cfg);
  /// Model described by a checkpoint, with its stored weights.
  static Model from_checkpoint(const Checkpoint& ckpt);

  [[nodiscard]] ParameterSet<float> frozen_parameters() const;     // encoder + codebook
  [[nodiscard]] ParameterSet<float> generator_parameters() const;  // trainable generator side
  void store(Checkpoint& ckpt) const;
  void restore(const Checkpoint& ckpt);
};

/// Perceptual-extractor stage widths.
inline const std::vector<int> kPerceptualWidths{16, 32, 64, 64, 64};

/// Quantized (VQ) or mean (KL) latent of `x` through the encoder, without gradients.
LatentGrid<float> encode_latent(const Model& model, const Tensor<float>& x);

struct StepLog {
  std::int64_t step = 0;  // number of completed updates
  double loss_total = 0;
  double loss_pixel = 0;
  double loss_percep = 0;
  double loss_gan = 0;
  std::optional<double> loss_kl;
  double lambda = 0;
  double lr = 0;
  std::string mask_kind = "none";
};

std::string loss_csv_header();
std::string loss_csv_row(const StepLog& log);

struct TrainOptions {
  /// Stop once this many updates are complete (the schedule still spans total_steps).
  std::optional<std::int64_t> stop_at;
  /// Called with a snapshot every checkpoint_every updates.
  std::function<void(const Checkpoint&)> on_checkpoint;
  std::function<void(const StepLog&)> on_step;
  /// Loss log; created with a header, or appended to when resuming.
  std::filesystem::path loss_csv;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StepLog> history;
};

/// End-to-end VQGAN (or VAEGAN) training with the symmetric decoder.
TrainResult train_stage0(const TrainConfig& cfg, const Dataset& data, const TrainOptions& options = {});

/// Asymmetric-decoder training on top of a stage-0 checkpoint. Encoder and codebook are copied
/// from `base` and never handed to an optimizer; decoder and conditional branch start fresh.
TrainResult train_stage1(const Checkpoint& base, const TrainConfig& cfg, const Dataset& data,
                         const TrainOptions& options = {});

/// Continues the run captured in `snapshot` (either stage) up to its configured total_steps.
TrainResult resume_training(const Checkpoint& snapshot, const Dataset& data, const TrainOptions& options = {});

}  // namespace asymvq
