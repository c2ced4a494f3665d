#include "asymvq/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "asymvq/errors.hpp"
#include "asymvq/image_io.hpp"
#include "asymvq/masks.hpp"

namespace asymvq {

double lr_schedule(std::int64_t step, const TrainConfig& cfg) {
  const std::int64_t s = std::clamp<std::int64_t>(step, 0, cfg.total_steps);
  if (s < cfg.warmup_steps) return cfg.lr_peak * static_cast<double>(s) / static_cast<double>(cfg.warmup_steps);
  const double progress =
      static_cast<double>(s - cfg.warmup_steps) / static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.lr_peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

// ---------------------------------------------------------------------------------------------
// Data

Tensor<float> Dataset::batch(const std::vector<int>& indices) const {
  const Shape s = images.shape();
  Tensor<float> out(Shape{static_cast<int>(indices.size()), s.c, s.h, s.w});
  for (std::size_t i = 0; i < indices.size(); ++i) out.item(static_cast<int>(i)) = images.item(indices[i]);
  return out;
}

namespace {

bool has_image_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& source, int image_size) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(source)) {
    for (const auto& entry : std::filesystem::directory_iterator(source))
      if (entry.is_regular_file() && has_image_extension(entry.path())) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
  } else if (std::filesystem::is_regular_file(source)) {
    std::ifstream in(source);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line.front() == '#') continue;
      std::filesystem::path p(line);
      files.push_back(p.is_relative() ? source.parent_path() / p : p);
    }
  } else {
    throw InputError("dataset source does not exist: " + source.string());
  }
  if (files.empty()) throw InputError("dataset is empty: " + source.string());

  Dataset data;
  std::vector<Image8> images;
  images.reserve(files.size());
  for (const auto& f : files) {
    Image8 img = read_image(f);
    if (img.width != image_size || img.height != image_size) img = center_crop_resize(img, image_size);
    images.push_back(std::move(img));
    data.paths.push_back(f.string());
  }
  data.images = images_to_tensor<float>(images);
  return data;
}

// ---------------------------------------------------------------------------------------------
// Optimizer

Adam::Adam(ParameterSet<float> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& [name, var] : params_) {
    m_.emplace_back(var.shape());
    v_.emplace_back(var.shape());
  }
}

void Adam::step(double lr) {
  ++t_;
  const float b1 = static_cast<float>(beta1_);
  const float b2 = static_cast<float>(beta2_);
  const float c1 = static_cast<float>(1.0 - std::pow(beta1_, static_cast<double>(t_)));
  const float c2 = static_cast<float>(1.0 - std::pow(beta2_, static_cast<double>(t_)));
  const float rate = static_cast<float>(lr);
  const float eps = static_cast<float>(eps_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var<float> p = params_[i].second;
    const Tensor<float>& g = p.grad();
    if (g.size() == 0) continue;
    m_[i].array() = b1 * m_[i].array() + (1.0f - b1) * g.array();
    v_[i].array() = b2 * v_[i].array() + (1.0f - b2) * g.array().square();
    p.mutable_value().array() -= rate * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
  }
}

void Adam::save(Checkpoint& ckpt, const std::string& prefix) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ckpt.set_array(prefix + "m." + params_[i].first, m_[i]);
    ckpt.set_array(prefix + "v." + params_[i].first, v_[i]);
  }
  ckpt.set_string(prefix + "t", std::to_string(t_));
}

void Adam::load(const Checkpoint& ckpt, const std::string& prefix) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& m = ckpt.array(prefix + "m." + params_[i].first);
    const auto& v = ckpt.array(prefix + "v." + params_[i].first);
    if (m.shape() != m_[i].shape() || v.shape() != v_[i].shape())
      throw InputError("optimizer state for '" + params_[i].first + "' has the wrong shape");
    m_[i] = m;
    v_[i] = v;
  }
  t_ = std::stoll(ckpt.string(prefix + "t"));
}

// ---------------------------------------------------------------------------------------------
// Model

Model Model::initialise(const TrainConfig& cfg) {
  cfg.validate();
  Model m;
  m.config = cfg;
  Rng init = substream(cfg.seed, "init");
  m.encoder = Encoder<float>(cfg.encoder_arch(), init);
  if (cfg.latent_mode == LatentMode::VQ) m.codebook.emplace(cfg.codebook_size, cfg.n_z, init);
  m.decoder = Decoder<float>(cfg.decoder_arch(), init);
  if (cfg.stage == 1) m.cond.emplace(cfg.decoder_arch(), init);
  Rng disc = substream(cfg.seed, "init.disc");
  m.discriminator = Discriminator<float>(cfg.disc_channels, cfg.disc_layers, disc);
  Rng percep = substream(cfg.seed, "perceptual");
  m.perceptual = PerceptualExtractor<float>(kPerceptualWidths, percep);
  if (cfg.stage == 1) m.frozen_parameters().set_requires_grad(false);
  return m;
}

Model Model::from_checkpoint(const Checkpoint& ckpt) {
  Model m = initialise(ckpt.config);
  m.restore(ckpt);
  return m;
}

ParameterSet<float> Model::frozen_parameters() const {
  ParameterSet<float> out;
  out.append(encoder.parameters(), "encoder.");
  if (codebook) {
    ParameterSet<float> book;
    codebook->collect(book, "");
    out.append(book, "codebook.");
  }
  return out;
}

ParameterSet<float> Model::generator_parameters() const {
  ParameterSet<float> out;
  if (config.stage == 0) out.append(frozen_parameters());
  out.append(decoder.parameters(), "decoder.");
  if (cond) out.append(cond->parameters(), "cond.");
  return out;
}

void Model::store(Checkpoint& ckpt) const {
  ckpt.store(frozen_parameters(), "");
  ckpt.store(decoder.parameters(), "decoder.");
  if (cond) ckpt.store(cond->parameters(), "cond.");
  ckpt.store(discriminator.parameters(), "disc.");
  ckpt.store(perceptual.parameters(), "percep.");
}

void Model::restore(const Checkpoint& ckpt) {
  ckpt.restore(frozen_parameters(), "");
  ckpt.restore(decoder.parameters(), "decoder.");
  if (cond) ckpt.restore(cond->parameters(), "cond.");
  ckpt.restore(discriminator.parameters(), "disc.");
  ckpt.restore(perceptual.parameters(), "percep.");
}

LatentGrid<float> encode_latent(const Model& model, const Tensor<float>& x) {
  if (model.config.latent_mode == LatentMode::KL) {
    GaussianLatent<float> g = model.encoder.encode_gaussian(constant(x));
    return LatentGrid<float>{constant(g.mu.value()), false};
  }
  LatentGrid<float> z = model.encoder.encode(constant(x));
  auto [zq, indices] = quantize(z, *model.codebook);
  return LatentGrid<float>{constant(zq.values.value()), true};
}

// ---------------------------------------------------------------------------------------------
// Logging

std::string loss_csv_header() { return "step,loss_total,loss_pixel,loss_percep,loss_gan,loss_kl,lambda,lr,mask_kind"; }

std::string loss_csv_row(const StepLog& log) {
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  std::string row = std::to_string(log.step);
  for (double v : {log.loss_total, log.loss_pixel, log.loss_percep, log.loss_gan}) row += "," + num(v);
  row += "," + (log.loss_kl ? num(*log.loss_kl) : std::string());
  row += "," + num(log.lambda) + "," + num(log.lr) + "," + log.mask_kind;
  return row;
}

namespace {

// Epoch-wise shuffled index stream. Its state is the RNG at the start of the current epoch plus
// the position within that epoch, which is enough to regenerate the permutation on resume.
class BatchSampler {
 public:
  BatchSampler(int n, int batch, Rng rng) : n_(n), batch_(batch), rng_(std::move(rng)) {}

  std::vector<int> next() {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(batch_));
    while (static_cast<int>(out.size()) < batch_) {
      if (cursor_ == 0 || perm_.empty()) start_epoch();
      out.push_back(perm_[static_cast<std::size_t>(cursor_)]);
      cursor_ = (cursor_ + 1) % n_;
    }
    return out;
  }

  [[nodiscard]] std::string state() const { return rng_state(epoch_start_) + "|" + std::to_string(cursor_); }

  void set_state(const std::string& s) {
    const auto bar = s.rfind('|');
    if (bar == std::string::npos) throw InputError("malformed sampler state");
    set_rng_state(rng_, s.substr(0, bar));
    const int cursor = std::stoi(s.substr(bar + 1));
    start_epoch();
    cursor_ = cursor;
  }

 private:
  void start_epoch() {
    epoch_start_ = rng_;
    perm_.resize(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i) perm_[static_cast<std::size_t>(i)] = i;
    for (int i = n_ - 1; i > 0; --i) std::swap(perm_[static_cast<std::size_t>(i)], perm_[static_cast<std::size_t>(uniform_int(rng_, 0, i))]);
    cursor_ = 0;
  }

  int n_;
  int batch_;
  Rng rng_;
  Rng epoch_start_;
  std::vector<int> perm_;
  int cursor_ = 0;
};

double frobenius(const Tensor<float>& t) {
  double acc = 0;
  for (Eigen::Index i = 0; i < t.size(); ++i) acc += static_cast<double>(t.data()[i]) * t.data()[i];
  return std::sqrt(acc);
}

double scalar(const Var<float>& v) { return static_cast<double>(v.value().data()[0]); }

void require_compatible_base(const TrainConfig& base, const TrainConfig& cfg) {
  auto mismatch = [](const std::string& key, const std::string& a, const std::string& b) {
    throw InputError("incompatible base checkpoint: " + key + " is " + a + " in the base but " + b + " in the config");
  };
  if (base.stage != 0) throw InputError("incompatible base checkpoint: expected a stage-0 checkpoint");
  const auto lhs = config_entries(base);
  const auto rhs = config_entries(cfg);
  for (const char* key : {"latent_mode", "image_size", "downsample_factor", "codebook_size", "n_z", "base_channels",
                          "res_blocks"}) {
    for (std::size_t i = 0; i < lhs.size(); ++i)
      if (lhs[i].first == key && lhs[i].second != rhs[i].second) mismatch(key, lhs[i].second, rhs[i].second);
  }
}

class Trainer {
 public:
  Trainer(Model model, const Dataset& data, const TrainOptions& options)
      : cfg_(model.config),
        model_(std::move(model)),
        data_(data),
        options_(options),
        gen_opt_(model_.generator_parameters()),
        disc_opt_(model_.discriminator.parameters()),
        disc_params_(model_.discriminator.parameters()),
        sampler_(data.size(), cfg_.batch_size, substream(cfg_.seed, "data")),
        mask_rng_(substream(cfg_.seed, "masks")),
        latent_rng_(substream(cfg_.seed, "latent")) {
    if (data.size() == 0) throw InputError("dataset is empty");
    if (data.images.h() != cfg_.image_size || data.images.w() != cfg_.image_size)
      throw InputError("dataset images are " + std::to_string(data.images.h()) + "px, config expects " +
                       std::to_string(cfg_.image_size));
    if (cfg_.stage == 1) cache_latents();
  }

  void load_state(const Checkpoint& ckpt) {
    gen_opt_.load(ckpt, "opt.gen.");
    disc_opt_.load(ckpt, "opt.disc.");
    sampler_.set_state(ckpt.string("rng.data"));
    set_rng_state(mask_rng_, ckpt.string("rng.masks"));
    set_rng_state(latent_rng_, ckpt.string("rng.latent"));
    step_ = ckpt.step;
  }

  [[nodiscard]] Checkpoint snapshot() const {
    Checkpoint ckpt;
    ckpt.config = cfg_;
    ckpt.step = step_;
    model_.store(ckpt);
    gen_opt_.save(ckpt, "opt.gen.");
    disc_opt_.save(ckpt, "opt.disc.");
    ckpt.set_string("rng.data", sampler_.state());
    ckpt.set_string("rng.masks", rng_state(mask_rng_));
    ckpt.set_string("rng.latent", rng_state(latent_rng_));
    return ckpt;
  }

  TrainResult run() {
    TrainResult result;
    std::ofstream csv;
    if (!options_.loss_csv.empty()) {
      const bool append = step_ > 0 && std::filesystem::exists(options_.loss_csv);
      if (options_.loss_csv.has_parent_path()) std::filesystem::create_directories(options_.loss_csv.parent_path());
      csv.open(options_.loss_csv, append ? std::ios::app : std::ios::trunc);
      if (!csv) throw std::runtime_error("cannot write loss log " + options_.loss_csv.string());
      if (!append) csv << loss_csv_header() << '\n';
    }
    const std::int64_t end = std::min(cfg_.total_steps, options_.stop_at.value_or(cfg_.total_steps));
    while (step_ < end) {
      StepLog log = step();
      result.history.push_back(log);
      if (csv.is_open()) csv << loss_csv_row(log) << '\n' << std::flush;
      if (options_.on_step) options_.on_step(log);
      if (options_.on_checkpoint && cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0)
        options_.on_checkpoint(snapshot());
    }
    result.checkpoint = snapshot();
    return result;
  }

 private:
  void cache_latents() {
    const int n = data_.size();
    const int chunk = 16;
    for (int begin = 0; begin < n; begin += chunk) {
      std::vector<int> idx;
      for (int i = begin; i < std::min(n, begin + chunk); ++i) idx.push_back(i);
      const Tensor<float> x = data_.batch(idx);
      Tensor<float> mu;
      Tensor<float> log_var;
      if (cfg_.latent_mode == LatentMode::KL) {
        GaussianLatent<float> g = model_.encoder.encode_gaussian(constant(x));
        mu = g.mu.value();
        log_var = g.log_var.value();
      } else {
        mu = encode_latent(model_, x).values.value();
      }
      if (begin == 0) {
        const Shape s = mu.shape();
        latent_mu_ = Tensor<float>(Shape{n, s.c, s.h, s.w});
        if (cfg_.latent_mode == LatentMode::KL) latent_log_var_ = Tensor<float>(latent_mu_.shape());
      }
      for (std::size_t i = 0; i < idx.size(); ++i) {
        latent_mu_.item(idx[i]) = mu.item(static_cast<int>(i));
        if (cfg_.latent_mode == LatentMode::KL) latent_log_var_.item(idx[i]) = log_var.item(static_cast<int>(i));
      }
    }
  }

  Tensor<float> gather(const Tensor<float>& source, const std::vector<int>& idx) const {
    const Shape s = source.shape();
    Tensor<float> out(Shape{static_cast<int>(idx.size()), s.c, s.h, s.w});
    for (std::size_t i = 0; i < idx.size(); ++i) out.item(static_cast<int>(i)) = source.item(idx[i]);
    return out;
  }

  Tensor<float> draw_masks(int batch, std::string& kind) {
    const MaskSpec spec = training_mask_schedule(step_, mask_rng_, cfg_.full_mask_prob, default_training_spec());
    kind = to_string(spec.kind);
    const int size = cfg_.image_size;
    if (spec.kind == MaskKind::Full) return Tensor<float>::ones(Shape{batch, 1, size, size});
    std::vector<MaskGrid> masks;
    for (int b = 0; b < batch; ++b) masks.push_back(generate_mask(spec, size, size, mask_rng_).mask);
    return mask_to_tensor<float>(masks);
  }

  StepLog step() {
    StepLog log;
    log.lr = lr_schedule(step_ + 1, cfg_);
    const std::vector<int> idx = sampler_.next();
    const Tensor<float> x = data_.batch(idx);
    const Var<float> xv = constant(x);
    const int batch = static_cast<int>(idx.size());

    LossComponents<float> parts;
    Var<float> x_hat;
    if (cfg_.stage == 0) {
      if (cfg_.latent_mode == LatentMode::VQ) {
        LatentGrid<float> z = model_.encoder.encode(xv);
        auto [zq, indices] = quantize(z, *model_.codebook);
        VqLosses<float> vq = vq_losses(z, zq, static_cast<float>(cfg_.beta));
        parts.codebook = vq.codebook;
        parts.commit = vq.commit;
        x_hat = model_.decoder.decode_unconditional(straight_through(z, zq));
      } else {
        GaussianLatent<float> g = model_.encoder.encode_gaussian(xv);
        parts.kl = scale(kl_loss(g), static_cast<float>(cfg_.kl_weight));
        x_hat = model_.decoder.decode_unconditional(LatentGrid<float>{sample_gaussian(g, latent_rng_), false});
      }
    } else {
      LatentGrid<float> z{constant(gather(latent_mu_, idx)), cfg_.latent_mode == LatentMode::VQ};
      if (cfg_.latent_mode == LatentMode::KL) {
        GaussianLatent<float> g{z.values, constant(gather(latent_log_var_, idx))};
        z = LatentGrid<float>{constant(sample_gaussian(g, latent_rng_).value()), false};
      }
      const Tensor<float> mask = draw_masks(batch, log.mask_kind);
      const FeaturePyramid<float> pyramid = model_.cond->features(constant(masked_input(x, mask)), mask);
      x_hat = model_.decoder.decode(z, pyramid, mask);
    }
    parts.pixel = pixel_loss(xv, x_hat);
    parts.percep = perceptual_loss(xv, x_hat, model_.perceptual);

    if (step_ >= cfg_.gan_warmup) {
      disc_params_.zero_grad();
      const Var<float> d_loss = discriminator_loss(model_.discriminator(xv), model_.discriminator(detach(x_hat)));
      backward(d_loss);
      disc_opt_.step(log.lr);
      disc_params_.zero_grad();

      disc_params_.set_requires_grad(false);
      const Var<float> g_loss = generator_loss(model_.discriminator(x_hat));
      disc_params_.set_requires_grad(true);

      const Var<float> numerator =
          cfg_.lambda_numerator == LambdaNumerator::Pixel ? *parts.pixel : add(*parts.pixel, *parts.percep);
      const std::vector<Var<float>> last{model_.decoder.last_layer().weight};
      const double p_norm = frobenius(gradients(numerator, std::span<const Var<float>>(last)).front());
      const double g_norm = frobenius(gradients(g_loss, std::span<const Var<float>>(last)).front());
      log.lambda = adaptive_lambda(p_norm, g_norm);
      parts.gan = g_loss;
    }

    const Objective objective = cfg_.stage == 0
                                    ? (cfg_.latent_mode == LatentMode::VQ ? Objective::VqStage0 : Objective::VaeganStage0)
                                    : (cfg_.latent_mode == LatentMode::VQ ? Objective::AsymStage1 : Objective::AsymVaeStage1);
    const TotalLoss<float> total =
        total_loss(parts, static_cast<float>(log.lambda), objective, static_cast<float>(cfg_.perceptual_weight));

    log.step = step_ + 1;
    log.loss_total = scalar(total.value);
    log.loss_pixel = scalar(*parts.pixel);
    log.loss_percep = scalar(*parts.percep);
    log.loss_gan = parts.gan ? scalar(*parts.gan) : 0.0;
    if (parts.kl) log.loss_kl = scalar(*parts.kl);
    if (!std::isfinite(log.loss_total)) {
      std::ostringstream msg;
      msg << "non-finite loss at step " << log.step << ": " << loss_csv_header() << " = " << loss_csv_row(log);
      throw TrainingError(msg.str());
    }

    gen_opt_.parameters().zero_grad();
    backward(total.value);
    gen_opt_.step(log.lr);
    gen_opt_.parameters().zero_grad();
    ++step_;
    return log;
  }

  TrainConfig cfg_;
  Model model_;
  const Dataset& data_;
  TrainOptions options_;
  Adam gen_opt_;
  Adam disc_opt_;
  ParameterSet<float> disc_params_;
  BatchSampler sampler_;
  Rng mask_rng_;
  Rng latent_rng_;
  std::int64_t step_ = 0;
  Tensor<float> latent_mu_;
  Tensor<float> latent_log_var_;
};

}  // namespace

TrainResult train_stage0(const TrainConfig& cfg, const Dataset& data, const TrainOptions& options) {
  if (cfg.stage != 0) throw ConfigError("train_stage0 needs stage = 0");
  Trainer trainer(Model::initialise(cfg), data, options);
  return trainer.run();
}

TrainResult train_stage1(const Checkpoint& base, const TrainConfig& cfg, const Dataset& data, const TrainOptions& options) {
  if (cfg.stage != 1) throw ConfigError("train_stage1 needs stage = 1");
  require_compatible_base(base.config, cfg);
  Model model = Model::initialise(cfg);
  base.restore(model.frozen_parameters(), "");
  if (base.find_array("percep." + model.perceptual.parameters()[0].first))
    base.restore(model.perceptual.parameters(), "percep.");
  if (cfg.inherit_discriminator) base.restore(model.discriminator.parameters(), "disc.");
  Trainer trainer(std::move(model), data, options);
  return trainer.run();
}

TrainResult resume_training(const Checkpoint& snapshot, const Dataset& data, const TrainOptions& options) {
  Trainer trainer(Model::from_checkpoint(snapshot), data, options);
  trainer.load_state(snapshot);
  return trainer.run();
}

}  // namespace asymvq
