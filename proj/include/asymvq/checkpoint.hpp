#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "asymvq/config.hpp"
#include "asymvq/nn.hpp"
#include "asymvq/tensor.hpp"

namespace asymvq {

/// Versioned training snapshot: configuration, step counter, named float arrays (parameters and
/// optimizer moments) and named strings (RNG states, sampler cursors).
///
/// Binary layout, little endian: magic "ASYMVQCK", u32 version, then length-prefixed sections
/// for config entries, step, arrays and strings, each in insertion order.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  TrainConfig config;
  std::int64_t step = 0;
  std::vector<std::pair<std::string, Tensor<float>>> arrays;
  std::vector<std::pair<std::string, std::string>> strings;

  [[nodiscard]] const Tensor<float>* find_array(const std::string& name) const;
  [[nodiscard]] const std::string* find_string(const std::string& name) const;
  /// Throws InputError when absent.
  [[nodiscard]] const Tensor<float>& array(const std::string& name) const;
  [[nodiscard]] const std::string& string(const std::string& name) const;

  void set_array(const std::string& name, Tensor<float> value);
  void set_string(const std::string& name, std::string value);

  /// Stores every parameter of `params` under `prefix + name`.
  void store(const ParameterSet<float>& params, const std::string& prefix);
  /// Copies stored values into `params`; missing names or shape mismatches throw InputError.
  void restore(const ParameterSet<float>& params, const std::string& prefix) const;
  /// Checksum over the stored arrays whose names start with `prefix`.
  [[nodiscard]] std::uint64_t checksum(const std::string& prefix) const;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace asymvq
