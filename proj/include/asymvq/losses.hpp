#pragma once

#include <optional>
#include <string>
#include <vector>

#include "asymvq/encoder.hpp"
#include "asymvq/nn.hpp"

namespace asymvq {

/// Fixed multi-stage feature pyramid for the perceptual loss.
///
/// Each stage is conv3x3 -> ReLU -> conv3x3 -> ReLU (the first conv of stages 1.. has stride 2,
/// halving the resolution), followed by a nonnegative 1x1 reduction to one channel. Weights are
/// drawn once from a seed and never trained. A stage without convolutions is the identity.
template <typename S>
class PerceptualExtractor {
 public:
  struct Stage {
    std::vector<Conv2d<S>> convs;
    Var<S> reduce;  // 1 x C x 1 x 1, nonnegative
  };

  PerceptualExtractor() = default;
  PerceptualExtractor(const std::vector<int>& widths, Rng& rng);
  explicit PerceptualExtractor(std::vector<Stage> stages);

  /// Identity feature map with the given 1x1 reduction weights (one stage).
  static PerceptualExtractor identity(const Tensor<S>& reduce_weights);

  [[nodiscard]] const std::vector<Stage>& stages() const { return stages_; }
  [[nodiscard]] ParameterSet<S> parameters() const;

  /// Stage outputs for `x`, finest first.
  [[nodiscard]] std::vector<Var<S>> features(const Var<S>& x) const;

 private:
  std::vector<Stage> stages_;
};

/// Patch discriminator: strided 4x4 convs with LeakyReLU(0.2) emitting a grid of logits.
template <typename S>
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(int base_channels, int layers, Rng& rng);

  Var<S> operator()(const Var<S>& x) const;
  [[nodiscard]] ParameterSet<S> parameters() const;

 private:
  std::vector<Conv2d<S>> convs_;
  std::vector<GroupNorm<S>> norms_;  // one per hidden conv after the first
};

/// Mean absolute error over every element.
template <typename S>
Var<S> pixel_loss(const Var<S>& x, const Var<S>& x_hat);

/// Sum over stages of the spatially averaged, channel-reduced squared feature difference.
template <typename S>
Var<S> perceptual_loss(const Var<S>& x, const Var<S>& x_hat, const PerceptualExtractor<S>& extractor);

template <typename S>
struct GanLosses {
  Var<S> d_loss;  // -mean log sigma(real) - mean log(1 - sigma(fake))
  Var<S> g_loss;  // -mean log sigma(fake)
};

template <typename S>
GanLosses<S> gan_losses(const Var<S>& real_logits, const Var<S>& fake_logits);
template <typename S>
Var<S> discriminator_loss(const Var<S>& real_logits, const Var<S>& fake_logits);
template <typename S>
Var<S> generator_loss(const Var<S>& fake_logits);

inline constexpr double kLambdaDelta = 1e-4;
inline constexpr double kLambdaMax = 1e4;

/// grad_pixel_norm / (grad_gan_norm + delta), clamped to [0, 1e4].
double adaptive_lambda(double grad_pixel_norm, double grad_gan_norm, double delta = kLambdaDelta);

/// 0.5 * (sum mu^2 + sum(exp(log_var) - log_var - 1)), averaged over the batch.
template <typename S>
Var<S> kl_loss(const GaussianLatent<S>& g);

enum class Objective { VqStage0, AsymStage1, VaeganStage0, AsymVaeStage1 };
std::string to_string(Objective o);

template <typename S>
struct LossComponents {
  std::optional<Var<S>> pixel;
  std::optional<Var<S>> percep;
  std::optional<Var<S>> gan;  // generator loss; absent while the discriminator is warming up
  std::optional<Var<S>> codebook;
  std::optional<Var<S>> commit;  // already weighted by beta
  std::optional<Var<S>> kl;
};

template <typename S>
struct TotalLoss {
  Var<S> value;
  std::vector<std::string> terms;  // names of the components that were summed

  [[nodiscard]] bool has(const std::string& term) const;
};

/// Objective for `mode`:
///   VqStage0:       pixel + w_p * percep + codebook + commit + lambda * gan
///   VaeganStage0:   pixel + percep + kl + lambda * gan
///   Asym(Vae)Stage1: pixel + percep + lambda * gan (VQ and KL terms never enter)
template <typename S>
TotalLoss<S> total_loss(const LossComponents<S>& c, S lambda, Objective mode, S perceptual_weight = S(1));

}  // namespace asymvq
