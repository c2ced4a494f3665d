#include "asymvq/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "asymvq/errors.hpp"

namespace asymvq {

std::string to_string(LambdaNumerator n) { return n == LambdaNumerator::Pixel ? "pixel" : "rec"; }

LambdaNumerator parse_lambda_numerator(const std::string& s) {
  if (s == "pixel") return LambdaNumerator::Pixel;
  if (s == "rec") return LambdaNumerator::Reconstruction;
  throw ConfigError("lambda_numerator must be 'pixel' or 'rec', got '" + s + "'");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_integer(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("config key '" + key + "': invalid integer '" + value + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "': invalid number '" + value + "'");
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + value + "'");
}

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip form
  return std::string(buf, ptr);
}

struct Field {
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
Field integer_field(T TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string& k, const std::string& v) { c.*member = parse_integer<T>(k, v); },
          [member](const TrainConfig& c) { return std::to_string(c.*member); }};
}

Field real_field(double TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string& k, const std::string& v) { c.*member = parse_real(k, v); },
          [member](const TrainConfig& c) { return format_real(c.*member); }};
}

Field string_field(std::string TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string&, const std::string& v) { c.*member = v; },
          [member](const TrainConfig& c) { return c.*member; }};
}

template <typename E>
Field enum_field(E TrainConfig::*member, E (*parse)(const std::string&)) {
  return {[member, parse](TrainConfig& c, const std::string& k, const std::string& v) {
            try {
              c.*member = parse(v);
            } catch (const std::exception& e) {
              throw ConfigError("config key '" + k + "': " + e.what());
            }
          },
          [member](const TrainConfig& c) { return to_string(c.*member); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table{
      {"stage", integer_field(&TrainConfig::stage)},
      {"latent_mode", enum_field(&TrainConfig::latent_mode, &parse_latent_mode)},
      {"blend_mode", enum_field(&TrainConfig::blend_mode, &parse_blend_mode)},
      {"scale_preset", enum_field(&TrainConfig::scale_preset, &parse_scale_preset)},
      {"image_size", integer_field(&TrainConfig::image_size)},
      {"downsample_factor", integer_field(&TrainConfig::downsample_factor)},
      {"codebook_size", integer_field(&TrainConfig::codebook_size)},
      {"n_z", integer_field(&TrainConfig::n_z)},
      {"beta", real_field(&TrainConfig::beta)},
      {"lr_peak", real_field(&TrainConfig::lr_peak)},
      {"warmup_steps", integer_field(&TrainConfig::warmup_steps)},
      {"total_steps", integer_field(&TrainConfig::total_steps)},
      {"batch_size", integer_field(&TrainConfig::batch_size)},
      {"seed", integer_field(&TrainConfig::seed)},
      {"dataset_dir", string_field(&TrainConfig::dataset_dir)},
      {"out_dir", string_field(&TrainConfig::out_dir)},
      {"gan_warmup", integer_field(&TrainConfig::gan_warmup)},
      {"full_mask_prob", real_field(&TrainConfig::full_mask_prob)},
      {"lambda_numerator", enum_field(&TrainConfig::lambda_numerator, &parse_lambda_numerator)},
      {"base_channels", integer_field(&TrainConfig::base_channels)},
      {"res_blocks", integer_field(&TrainConfig::res_blocks)},
      {"disc_channels", integer_field(&TrainConfig::disc_channels)},
      {"disc_layers", integer_field(&TrainConfig::disc_layers)},
      {"perceptual_weight", real_field(&TrainConfig::perceptual_weight)},
      {"kl_weight", real_field(&TrainConfig::kl_weight)},
      {"base_checkpoint", string_field(&TrainConfig::base_checkpoint)},
      {"inherit_discriminator",
       {[](TrainConfig& c, const std::string& k, const std::string& v) { c.inherit_discriminator = parse_bool(k, v); },
        [](const TrainConfig& c) { return std::string(c.inherit_discriminator ? "true" : "false"); }}},
      {"checkpoint_every", integer_field(&TrainConfig::checkpoint_every)},
  };
  return table;
}

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (stage != 0 && stage != 1) fail("stage must be 0 or 1");
  if (!is_power_of_two(downsample_factor) || downsample_factor < 2) fail("downsample_factor must be a power of two >= 2");
  if (image_size <= 0 || image_size % downsample_factor != 0)
    fail("image_size " + std::to_string(image_size) + " is not divisible by downsample_factor " +
         std::to_string(downsample_factor));
  if (codebook_size < 1) fail("codebook_size must be positive");
  if (n_z < 1) fail("n_z must be positive");
  if (beta < 0) fail("beta must be nonnegative");
  if (!(lr_peak > 0)) fail("lr_peak must be positive");
  if (total_steps < 1) fail("total_steps must be positive");
  if (warmup_steps < 0 || warmup_steps >= total_steps) fail("warmup_steps must satisfy 0 <= warmup_steps < total_steps");
  if (batch_size < 1) fail("batch_size must be positive");
  if (gan_warmup < 0) fail("gan_warmup must be nonnegative");
  if (full_mask_prob < 0 || full_mask_prob > 1) fail("full_mask_prob must lie in [0, 1]");
  if (base_channels < 1 || res_blocks < 1) fail("base_channels and res_blocks must be positive");
  if (disc_channels < 1 || disc_layers < 1) fail("disc_channels and disc_layers must be positive");
  if (perceptual_weight < 0 || kl_weight < 0) fail("loss weights must be nonnegative");
  if (checkpoint_every < 0) fail("checkpoint_every must be nonnegative");
}

EncoderArchConfig TrainConfig::encoder_arch() const {
  EncoderArchConfig a;
  a.base_channels = base_channels;
  a.channel_mult = channel_schedule(downsample_factor);
  a.res_blocks = res_blocks;
  a.z_channels = n_z;
  a.latent_mode = latent_mode;
  return a;
}

DecoderArchConfig TrainConfig::decoder_arch() const {
  DecoderArchConfig a;
  a.base_channels = base_channels;
  a.channel_mult = channel_schedule(downsample_factor);
  a.res_blocks = res_blocks;
  a.scale_preset = stage == 0 ? ScalePreset::Base : scale_preset;
  a.blend_mode = blend_mode;
  a.conditional = stage == 1;
  a.z_channels = n_z;
  a.latent_h = latent_size();
  a.latent_w = latent_size();
  return a;
}

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(cfg, key, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [name, field] : fields()) out.emplace_back(name, field.get(cfg));
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.first);
  return out;
}

TrainConfig parse_config(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": missing key");
    set_config_value(base, key, trim(line.substr(eq + 1)));
  }
  return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), std::move(base));
}

std::string format_config(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_entries(cfg)) out += k + " = " + v + "\n";
  return out;
}

}  // namespace asymvq
