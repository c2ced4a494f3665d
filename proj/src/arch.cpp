#include "asymvq/arch.hpp"

#include "asymvq/errors.hpp"

namespace asymvq {

std::string to_string(BlendMode m) { return m == BlendMode::Addition ? "addition" : "concatenation"; }

std::string to_string(ScalePreset p) {
  switch (p) {
    case ScalePreset::Base: return "base";
    case ScalePreset::Large: return "large";
    case ScalePreset::LargeX2: return "large_x2";
  }
  return "base";
}

std::string to_string(LatentMode m) { return m == LatentMode::VQ ? "vq" : "kl"; }

BlendMode parse_blend_mode(const std::string& s) {
  if (s == "addition" || s == "add") return BlendMode::Addition;
  if (s == "concatenation" || s == "concat") return BlendMode::Concatenation;
  throw ConfigError("unknown blend_mode '" + s + "' (expected addition|concatenation)");
}

ScalePreset parse_scale_preset(const std::string& s) {
  if (s == "base") return ScalePreset::Base;
  if (s == "large") return ScalePreset::Large;
  if (s == "large_x2" || s == "largex2") return ScalePreset::LargeX2;
  throw ConfigError("unknown scale_preset '" + s + "' (expected base|large|large_x2)");
}

LatentMode parse_latent_mode(const std::string& s) {
  if (s == "vq") return LatentMode::VQ;
  if (s == "kl") return LatentMode::KL;
  throw ConfigError("unknown latent_mode '" + s + "' (expected vq|kl)");
}

std::vector<int> channel_schedule(int downsample_factor) {
  if (downsample_factor < 1 || (downsample_factor & (downsample_factor - 1)) != 0)
    throw ConfigError("downsample_factor must be a power of two, got " + std::to_string(downsample_factor));
  std::vector<int> mult;
  for (int f = 1, m = 1; f <= downsample_factor; f *= 2, m = std::min(m * 2, 4)) mult.push_back(m);
  return mult;
}

int DecoderArchConfig::width() const {
  switch (scale_preset) {
    case ScalePreset::Base: return base_channels;
    case ScalePreset::Large: return base_channels * 3 / 2;
    case ScalePreset::LargeX2: return base_channels * 2;
  }
  return base_channels;
}

int DecoderArchConfig::depth() const {
  switch (scale_preset) {
    case ScalePreset::Base: return res_blocks;
    case ScalePreset::Large: return res_blocks * 3 / 2;
    case ScalePreset::LargeX2: return (res_blocks * 5 + 1) / 2;
  }
  return res_blocks;
}

void DecoderArchConfig::validate() const {
  if (base_channels <= 0 || res_blocks <= 0 || z_channels <= 0) throw ConfigError("decoder widths must be positive");
  if (scale_preset == ScalePreset::Large && base_channels % 2 != 0)
    throw ConfigError("large preset needs an even base_channels");
  if (channel_mult.empty()) throw ConfigError("decoder needs at least one level");
  if (latent_h <= 0 || latent_w <= 0) throw ConfigError("latent resolution must be positive");
}

}  // namespace asymvq
