#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "asymvq/autodiff.hpp"
#include "asymvq/ops.hpp"
#include "asymvq/rng.hpp"

namespace asymvq {

/// Ordered, named view over trainable leaves. Entries share nodes with the owning modules.
template <typename S>
class ParameterSet {
 public:
  void add(std::string name, Var<S> var) { entries_.emplace_back(std::move(name), std::move(var)); }
  void append(const ParameterSet& other, const std::string& prefix = "") {
    for (const auto& [name, var] : other.entries_) add(prefix + name, var);
  }

  [[nodiscard]] std::size_t size() const { return entries_.size(); }
  [[nodiscard]] auto begin() const { return entries_.begin(); }
  [[nodiscard]] auto end() const { return entries_.end(); }
  [[nodiscard]] const std::pair<std::string, Var<S>>& operator[](std::size_t i) const { return entries_[i]; }

  [[nodiscard]] const Var<S>* find(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.first == name) return &e.second;
    return nullptr;
  }
  [[nodiscard]] bool contains_node(const Node<S>* node) const {
    for (const auto& e : entries_)
      if (e.second.node() == node) return true;
    return false;
  }

  [[nodiscard]] Eigen::Index element_count() const {
    Eigen::Index total = 0;
    for (const auto& e : entries_) total += e.second.value().size();
    return total;
  }

  [[nodiscard]] std::uint64_t checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& e : entries_) h = asymvq::checksum(e.second.value(), h);
    return h;
  }

  void set_requires_grad(bool on) const {
    for (auto e : entries_) e.second.set_requires_grad(on);
  }
  void zero_grad() const {
    for (auto e : entries_) e.second.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Var<S>>> entries_;
};

/// Largest divisor of `channels` not exceeding 32 that leaves at least four channels per group.
int group_count(int channels);

template <typename S>
Var<S> parameter(Shape shape, S bound, Rng& rng);

template <typename S>
struct Conv2d {
  Var<S> weight;
  std::optional<Var<S>> bias;
  int stride = 1;
  int padding = 0;

  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding, Rng& rng, bool with_bias = true);

  [[nodiscard]] int in_channels() const { return weight.shape().c; }
  [[nodiscard]] int out_channels() const { return weight.shape().n; }
  [[nodiscard]] int kernel() const { return weight.shape().h; }

  Var<S> operator()(const Var<S>& x) const { return conv2d(x, weight, bias, stride, padding); }
  void collect(ParameterSet<S>& out, const std::string& prefix) const;
};

template <typename S>
struct GroupNorm {
  Var<S> gamma;
  Var<S> beta;
  int groups = 1;

  GroupNorm() = default;
  explicit GroupNorm(int channels);

  Var<S> operator()(const Var<S>& x) const { return group_norm(x, gamma, beta, groups); }
  void collect(ParameterSet<S>& out, const std::string& prefix) const;
};

/// norm -> swish -> conv3x3 -> norm -> swish -> conv3x3, plus a 1x1 shortcut when widths differ.
template <typename S>
struct ResBlock {
  GroupNorm<S> norm1;
  Conv2d<S> conv1;
  GroupNorm<S> norm2;
  Conv2d<S> conv2;
  std::optional<Conv2d<S>> shortcut;

  ResBlock() = default;
  ResBlock(int in_channels, int out_channels, Rng& rng);

  Var<S> operator()(const Var<S>& x) const;
  void collect(ParameterSet<S>& out, const std::string& prefix) const;
};

/// Single-head self-attention over spatial positions with a residual connection.
template <typename S>
struct AttnBlock {
  GroupNorm<S> norm;
  Conv2d<S> q;
  Conv2d<S> k;
  Conv2d<S> v;
  Conv2d<S> proj;

  AttnBlock() = default;
  AttnBlock(int channels, Rng& rng);

  Var<S> operator()(const Var<S>& x) const;
  void collect(ParameterSet<S>& out, const std::string& prefix) const;
};

/// Nearest x2 followed by a 3x3 conv.
template <typename S>
struct Upsample {
  Conv2d<S> conv;

  Upsample() = default;
  Upsample(int channels, Rng& rng) : conv(channels, channels, 3, 1, 1, rng) {}

  Var<S> operator()(const Var<S>& x) const { return conv(upsample_nearest2x(x)); }
  void collect(ParameterSet<S>& out, const std::string& prefix) const { conv.collect(out, prefix + "conv."); }
};

}  // namespace asymvq
