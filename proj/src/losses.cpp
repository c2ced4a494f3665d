#include "asymvq/losses.hpp"

#include <algorithm>
#include <cmath>

namespace asymvq {

template <typename S>
PerceptualExtractor<S>::PerceptualExtractor(const std::vector<int>& widths, Rng& rng) {
  int in = 3;
  for (std::size_t k = 0; k < widths.size(); ++k) {
    Stage stage;
    const int stride = k == 0 ? 1 : 2;
    const int pad = 1;
    stage.convs.emplace_back(in, widths[k], 3, stride, pad, rng);
    stage.convs.emplace_back(widths[k], widths[k], 3, 1, 1, rng);
    Tensor<S> reduce(Shape{1, widths[k], 1, 1});
    for (Eigen::Index i = 0; i < reduce.size(); ++i) reduce.array()[i] = static_cast<S>(uniform<double>(rng, 0.0, 1.0));
    reduce.array() /= reduce.array().sum();
    stage.reduce = Var<S>::leaf(std::move(reduce), false);
    stages_.push_back(std::move(stage));
    in = widths[k];
  }
  parameters().set_requires_grad(false);
}

template <typename S>
PerceptualExtractor<S>::PerceptualExtractor(std::vector<Stage> stages) : stages_(std::move(stages)) {
  for (const auto& stage : stages_)
    if ((stage.reduce.value().array() < S(0)).any()) throw ConfigError("perceptual reduction weights must be nonnegative");
  parameters().set_requires_grad(false);
}

template <typename S>
PerceptualExtractor<S> PerceptualExtractor<S>::identity(const Tensor<S>& reduce_weights) {
  Stage stage;
  stage.reduce = Var<S>::leaf(reduce_weights, false);
  return PerceptualExtractor(std::vector<Stage>{std::move(stage)});
}

template <typename S>
ParameterSet<S> PerceptualExtractor<S>::parameters() const {
  ParameterSet<S> out;
  for (std::size_t k = 0; k < stages_.size(); ++k) {
    const std::string prefix = "stage." + std::to_string(k) + ".";
    for (std::size_t i = 0; i < stages_[k].convs.size(); ++i) stages_[k].convs[i].collect(out, prefix + "conv." + std::to_string(i) + ".");
    out.add(prefix + "reduce", stages_[k].reduce);
  }
  return out;
}

template <typename S>
std::vector<Var<S>> PerceptualExtractor<S>::features(const Var<S>& x) const {
  std::vector<Var<S>> out;
  Var<S> h = x;
  for (const auto& stage : stages_) {
    for (const auto& conv : stage.convs) h = relu(conv(h));
    out.push_back(h);
  }
  return out;
}

template <typename S>
Discriminator<S>::Discriminator(int base_channels, int layers, Rng& rng) {
  if (base_channels <= 0 || layers < 1) throw ConfigError("discriminator needs positive width and depth");
  int in = 3;
  int width = base_channels;
  convs_.emplace_back(in, width, 4, 2, 1, rng);
  in = width;
  for (int i = 1; i <= layers; ++i) {
    width = base_channels * std::min(1 << i, 8);
    const int stride = i < layers ? 2 : 1;
    convs_.emplace_back(in, width, 4, stride, 1, rng);
    norms_.emplace_back(width);
    in = width;
  }
  convs_.emplace_back(in, 1, 4, 1, 1, rng);
}

template <typename S>
Var<S> Discriminator<S>::operator()(const Var<S>& x) const {
  Var<S> h = leaky_relu(convs_.front()(x), S(0.2));
  for (std::size_t i = 0; i < norms_.size(); ++i) h = leaky_relu(norms_[i](convs_[i + 1](h)), S(0.2));
  return convs_.back()(h);
}

template <typename S>
ParameterSet<S> Discriminator<S>::parameters() const {
  ParameterSet<S> out;
  for (std::size_t i = 0; i < convs_.size(); ++i) convs_[i].collect(out, "conv." + std::to_string(i) + ".");
  for (std::size_t i = 0; i < norms_.size(); ++i) norms_[i].collect(out, "norm." + std::to_string(i) + ".");
  return out;
}

template <typename S>
Var<S> pixel_loss(const Var<S>& x, const Var<S>& x_hat) {
  require_same_shape(x.shape(), x_hat.shape(), "pixel_loss");
  return mean(abs(sub(x_hat, x)));
}

template <typename S>
Var<S> perceptual_loss(const Var<S>& x, const Var<S>& x_hat, const PerceptualExtractor<S>& extractor) {
  require_same_shape(x.shape(), x_hat.shape(), "perceptual_loss");
  const auto fx = extractor.features(x);
  const auto fy = extractor.features(x_hat);
  Var<S> total;
  for (std::size_t k = 0; k < fx.size(); ++k) {
    Var<S> diff = square(sub(fx[k], fy[k]));
    Var<S> reduced = conv2d(diff, extractor.stages()[k].reduce, std::optional<Var<S>>{}, 1, 0);
    Var<S> term = mean(reduced);
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

template <typename S>
Var<S> discriminator_loss(const Var<S>& real_logits, const Var<S>& fake_logits) {
  return add(mean(softplus(scale(real_logits, S(-1)))), mean(softplus(fake_logits)));
}

template <typename S>
Var<S> generator_loss(const Var<S>& fake_logits) {
  return mean(softplus(scale(fake_logits, S(-1))));
}

template <typename S>
GanLosses<S> gan_losses(const Var<S>& real_logits, const Var<S>& fake_logits) {
  return {discriminator_loss(real_logits, fake_logits), generator_loss(fake_logits)};
}

double adaptive_lambda(double grad_pixel_norm, double grad_gan_norm, double delta) {
  if (grad_pixel_norm < 0.0 || grad_gan_norm < 0.0 || delta < 0.0)
    throw InputError("adaptive_lambda: gradient norms must be nonnegative");
  return std::clamp(grad_pixel_norm / (grad_gan_norm + delta), 0.0, kLambdaMax);
}

template <typename S>
Var<S> kl_loss(const GaussianLatent<S>& g) {
  require_same_shape(g.mu.shape(), g.log_var.shape(), "kl_loss");
  const S batch = static_cast<S>(g.mu.shape().n);
  Var<S> spread = add_scalar(sub(exp(g.log_var), g.log_var), S(-1));
  return scale(add(sum(square(g.mu)), sum(spread)), S(0.5) / batch);
}

std::string to_string(Objective o) {
  switch (o) {
    case Objective::VqStage0: return "vq-stage0";
    case Objective::AsymStage1: return "asym-stage1";
    case Objective::VaeganStage0: return "vaegan-stage0";
    case Objective::AsymVaeStage1: return "asymvae-stage1";
  }
  return "?";
}

template <typename S>
bool TotalLoss<S>::has(const std::string& term) const {
  return std::find(terms.begin(), terms.end(), term) != terms.end();
}

template <typename S>
TotalLoss<S> total_loss(const LossComponents<S>& c, S lambda, Objective mode, S perceptual_weight) {
  auto need = [&](const std::optional<Var<S>>& v, const char* name) -> const Var<S>& {
    if (!v) throw ConfigError(std::string("objective ") + to_string(mode) + " requires the " + name + " loss");
    return *v;
  };
  TotalLoss<S> out;
  auto push = [&](const Var<S>& term, const char* name) {
    out.value = out.value.defined() ? add(out.value, term) : term;
    out.terms.emplace_back(name);
  };
  push(need(c.pixel, "pixel"), "pixel");
  const S w_percep = mode == Objective::VqStage0 ? perceptual_weight : S(1);
  push(w_percep == S(1) ? need(c.percep, "perceptual") : scale(need(c.percep, "perceptual"), w_percep), "percep");
  if (mode == Objective::VqStage0) {
    push(need(c.codebook, "codebook"), "codebook");
    push(need(c.commit, "commitment"), "commit");
  } else if (mode == Objective::VaeganStage0) {
    push(need(c.kl, "kl"), "kl");
  }
  if (c.gan) push(scale(*c.gan, lambda), "gan");
  return out;
}

#define ASYMVQ_INSTANTIATE_LOSSES(S)                                                             \
  template class PerceptualExtractor<S>;                                                         \
  template class Discriminator<S>;                                                               \
  template struct TotalLoss<S>;                                                                  \
  template Var<S> pixel_loss(const Var<S>&, const Var<S>&);                                      \
  template Var<S> perceptual_loss(const Var<S>&, const Var<S>&, const PerceptualExtractor<S>&);  \
  template GanLosses<S> gan_losses(const Var<S>&, const Var<S>&);                                \
  template Var<S> discriminator_loss(const Var<S>&, const Var<S>&);                              \
  template Var<S> generator_loss(const Var<S>&);                                                 \
  template Var<S> kl_loss(const GaussianLatent<S>&);                                             \
  template TotalLoss<S> total_loss(const LossComponents<S>&, S, Objective, S);

ASYMVQ_INSTANTIATE_LOSSES(float)
ASYMVQ_INSTANTIATE_LOSSES(double)

}  // namespace asymvq
