#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "asymvq/arch.hpp"

namespace asymvq {

enum class LambdaNumerator { Pixel, Reconstruction };
std::string to_string(LambdaNumerator n);
LambdaNumerator parse_lambda_numerator(const std::string& s);

/// Every knob of a training run. Field names match the config-file keys.
struct TrainConfig {
  int stage = 0;
  LatentMode latent_mode = LatentMode::VQ;
  BlendMode blend_mode = BlendMode::Concatenation;
  ScalePreset scale_preset = ScalePreset::Base;
  int image_size = 64;
  int downsample_factor = 4;
  int codebook_size = 512;
  int n_z = 4;
  double beta = 0.25;
  double lr_peak = 3.6e-4;
  std::int64_t warmup_steps = 200;
  std::int64_t total_steps = 2000;
  int batch_size = 16;
  std::uint64_t seed = 0;
  std::string dataset_dir;
  std::string out_dir = "runs";
  std::int64_t gan_warmup = 1000;
  double full_mask_prob = 0.5;
  LambdaNumerator lambda_numerator = LambdaNumerator::Pixel;

  int base_channels = 32;
  int res_blocks = 2;
  int disc_channels = 32;
  int disc_layers = 2;
  double perceptual_weight = 1.0;
  double kl_weight = 1.0;
  std::string base_checkpoint;
  bool inherit_discriminator = false;
  std::int64_t checkpoint_every = 0;

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;

  [[nodiscard]] EncoderArchConfig encoder_arch() const;
  /// Symmetric (unconditional) decoder for stage 0, asymmetric for stage 1.
  [[nodiscard]] DecoderArchConfig decoder_arch() const;
  [[nodiscard]] int latent_size() const { return image_size / downsample_factor; }
};

/// Sets one key from its textual value. Unknown keys and unparsable values throw ConfigError.
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Key/value pairs for every field, in a fixed order, formatted so that parsing them back yields
/// an identical configuration.
std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& cfg);
std::vector<std::string> config_keys();

/// Flat "key = value" text with '#' comments. Later lines override earlier ones.
TrainConfig parse_config(const std::string& text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});
std::string format_config(const TrainConfig& cfg);

}  // namespace asymvq
