#pragma once

#include <string>
#include <vector>

namespace asymvq {

enum class BlendMode { Addition, Concatenation };
enum class ScalePreset { Base, Large, LargeX2 };
enum class LatentMode { VQ, KL };

std::string to_string(BlendMode m);
std::string to_string(ScalePreset p);
std::string to_string(LatentMode m);
BlendMode parse_blend_mode(const std::string& s);
ScalePreset parse_scale_preset(const std::string& s);
LatentMode parse_latent_mode(const std::string& s);

/// Per-level channel multipliers for a power-of-two downsample factor: 1, 2, 4, 4, ...
/// (f = 8 gives the four-level 1/2/4/4 schedule).
std::vector<int> channel_schedule(int downsample_factor);

/// Decoder hyperparameters. `base_channels` and `res_blocks` describe the Base preset; the
/// active preset scales them (Large: 1.5x width, floor(1.5x) depth; LargeX2: 2x width,
/// round(2.5x) depth).
struct DecoderArchConfig {
  int base_channels = 128;
  std::vector<int> channel_mult{1, 2, 4, 4};
  int res_blocks = 3;
  ScalePreset scale_preset = ScalePreset::Base;
  BlendMode blend_mode = BlendMode::Concatenation;
  bool conditional = true;
  int z_channels = 4;
  int latent_h = 64;
  int latent_w = 64;

  [[nodiscard]] int levels() const { return static_cast<int>(channel_mult.size()); }
  [[nodiscard]] int width() const;
  [[nodiscard]] int depth() const;
  /// Output width of the ResBlocks at `level`.
  [[nodiscard]] int channels(int level) const { return width() * channel_mult.at(level); }
  /// Width of the features entering `level` (mid-block width at the top level).
  [[nodiscard]] int input_channels(int level) const {
    return channels(level + 1 < levels() ? level + 1 : levels() - 1);
  }
  /// Blend points: 0 is the out block, 1 + l precedes the ResBlocks of level l.
  [[nodiscard]] int blend_points() const { return levels() + 1; }
  [[nodiscard]] int blend_channels(int point) const { return point == 0 ? channels(0) : input_channels(point - 1); }
  /// Spatial scale divisor of a blend point relative to the output image.
  [[nodiscard]] int blend_divisor(int point) const { return point == 0 ? 1 : 1 << (point - 1); }
  [[nodiscard]] int output_h() const { return latent_h << (levels() - 1); }
  [[nodiscard]] int output_w() const { return latent_w << (levels() - 1); }

  void validate() const;
};

/// Encoder hyperparameters; mirrors the Base-preset decoder schedule.
struct EncoderArchConfig {
  int base_channels = 128;
  std::vector<int> channel_mult{1, 2, 4, 4};
  int res_blocks = 3;
  int z_channels = 4;
  LatentMode latent_mode = LatentMode::VQ;

  [[nodiscard]] int levels() const { return static_cast<int>(channel_mult.size()); }
  [[nodiscard]] int downsample_factor() const { return 1 << (levels() - 1); }
  [[nodiscard]] int channels(int level) const { return base_channels * channel_mult.at(level); }
  [[nodiscard]] int out_channels() const { return latent_mode == LatentMode::KL ? 2 * z_channels : z_channels; }
};

}  // namespace asymvq
