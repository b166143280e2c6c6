#include "uqsr/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "uqsr/errors.hpp"

namespace uqsr {

void validate(const TrainConfig& cfg) {
  if (!(cfg.lr0 > 0.0)) throw ConfigError("lr0 must be positive");
  if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0)
    throw ConfigError("Adam betas must be in [0, 1)");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be positive");
  if (cfg.epochs < 0) throw ConfigError("epochs must be non-negative");
  if (!(cfg.decay_factor > 0.0)) throw ConfigError("decay_factor must be positive");
  for (std::size_t i = 1; i < cfg.milestones.size(); ++i)
    if (cfg.milestones[i] <= cfg.milestones[i - 1])
      throw ConfigError("milestones must be strictly increasing");
  // A partially applied random crop would make batches ragged.
  if (cfg.augment.crop_lr_size > 0 && cfg.batch_size > 1 && cfg.augment.p_crop != 0.0 &&
      cfg.augment.p_crop != 1.0)
    throw ConfigError("augment.p_crop must be 0 or 1 when batch_size > 1");
}

double lr_at(int epoch, const TrainConfig& cfg) {
  int passed = 0;
  for (int m : cfg.milestones)
    if (m <= epoch) ++passed;
  return cfg.lr0 / std::pow(cfg.decay_factor, passed);
}

// ---------------------------------------------------------------------------
// Report artifacts

namespace {

std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_train_csv(const TrainReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write training csv: " + path);
  out << "epoch,lr,gen_total,gen_content,gen_perceptual,gen_adversarial,disc\n";
  for (const EpochRecord& r : report.epochs)
    out << r.epoch << ',' << fmt_g17(r.lr) << ',' << fmt_g17(r.gen_total) << ','
        << fmt_g17(r.gen_content) << ',' << fmt_g17(r.gen_perceptual) << ','
        << fmt_g17(r.gen_adversarial) << ',' << fmt_g17(r.disc) << '\n';
  if (!out) throw IoError("error writing training csv: " + path);
}

void write_train_log(const TrainReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write training log: " + path);
  out << "seed " << report.seed << "\n";
  for (const EpochRecord& r : report.epochs)
    out << "epoch " << r.epoch << " lr " << fmt_g17(r.lr) << " gen " << fmt_g17(r.gen_total)
        << " content " << fmt_g17(r.gen_content) << " perceptual " << fmt_g17(r.gen_perceptual)
        << " adversarial " << fmt_g17(r.gen_adversarial) << " disc " << fmt_g17(r.disc) << "\n";
  if (!out) throw IoError("error writing training log: " + path);
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(const std::vector<ParamRef>& params, double lr) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i].value->size(), 0.0);
      v_[i].assign(params[i].value->size(), 0.0);
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::vector<double>& x = *params[i].value;
    const std::vector<double>& g = *params[i].grad;
    for (std::size_t j = 0; j < x.size(); ++j) {
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g[j];
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g[j] * g[j];
      x[j] -= lr * (m_[i][j] / bc1) / (std::sqrt(v_[i][j] / bc2) + eps_);
    }
  }
}

// ---------------------------------------------------------------------------
// Batch assembly

namespace {

void shuffle_indices(std::vector<int>& idx, Rng& rng) {
  for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i)
    std::swap(idx[i], idx[rng.uniform_int(i + 1)]);
}

void assemble_batch(const PairDataset& data, const std::vector<int>& order, std::size_t start,
                    int batch_size, const AugmentConfig& aug, Rng& rng, Tensor& lr_batch,
                    Tensor& hr_batch) {
  std::vector<ImageTensor> lrs, hrs;
  lrs.reserve(batch_size);
  hrs.reserve(batch_size);
  for (int b = 0; b < batch_size; ++b) {
    TrainingPair pair = augment_pair(data.pairs[order[start + b]], aug, rng);
    lrs.push_back(std::move(pair.lr));
    hrs.push_back(std::move(pair.hr));
  }
  lr_batch = to_tensor(lrs);
  hr_batch = to_tensor(hrs);
}

void check_dataset(const PairDataset& data, const TrainConfig& cfg) {
  if (data.pairs.empty()) throw ConfigError("training dataset is empty");
  if (cfg.batch_size > static_cast<int>(data.pairs.size()))
    throw ConfigError("batch_size exceeds the dataset size");
}

std::vector<double> trace_of(const TrainReport& report, bool disc) {
  std::vector<double> trace;
  for (const EpochRecord& r : report.epochs) trace.push_back(disc ? r.disc : r.gen_total);
  return trace;
}

}  // namespace

// ---------------------------------------------------------------------------
// PSNR pretrain

Checkpoint pretrain_psnr(Model& gen, const PairDataset& data, const TrainConfig& cfg,
                         TrainReport* report) {
  validate(cfg);
  if (cfg.phase != Phase::psnr_pretrain)
    throw ConfigError("pretrain_psnr requires phase = psnr_pretrain");
  if (!gen.is_generator()) throw ConfigError("pretrain_psnr requires a generator");
  check_dataset(data, cfg);

  TrainReport local;
  TrainReport& rep = report ? *report : local;
  rep.seed = cfg.seed;
  const std::vector<ParamRef> params = gen.params();
  Adam opt(cfg.beta1, cfg.beta2);

  std::vector<int> order(data.pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  const std::size_t steps_per_epoch = data.pairs.size() / cfg.batch_size;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    shuffle_indices(order, rng);
    double epoch_loss = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      Tensor lr_batch, hr_batch;
      assemble_batch(data, order, s * cfg.batch_size, cfg.batch_size, cfg.augment, rng,
                     lr_batch, hr_batch);
      zero_grads(params);
      ForwardCtx ctx{true, true, &rng};
      Tensor sr = gen.forward_raw(lr_batch, ctx);
      Tensor dsr;
      const double loss = content_l1(sr, hr_batch, &dsr);
      if (!std::isfinite(loss))
        throw TrainingDiverged("non-finite pretrain loss", epoch, static_cast<int>(s));
      gen.backward(dsr);
      opt.step(params, lr);
      epoch_loss += loss;
    }
    epoch_loss /= static_cast<double>(steps_per_epoch);
    rep.epochs.push_back({epoch, lr, epoch_loss, epoch_loss, 0.0, 0.0, 0.0});
  }

  Provenance prov{"psnr_pretrain", cfg.epochs, cfg.seed, loss_trace_digest(trace_of(rep, false))};
  return snapshot(gen, prov);
}

// ---------------------------------------------------------------------------
// Adversarial steps

double gan_disc_step(Model& gen, Model& disc, Adam& opt_d, double lr, const Tensor& lr_batch,
                     const Tensor& hr_batch, Rng& rng) {
  const std::vector<ParamRef> d_params = disc.params();
  zero_grads(d_params);

  ForwardCtx gctx{true, false, &rng};
  Tensor sr = gen.forward_raw(lr_batch, gctx);
  Tensor x = concat_samples(hr_batch, sr);
  ForwardCtx dctx{false, true, nullptr};
  Tensor out = disc.forward_raw(x, dctx);

  const int n = hr_batch.n;
  std::vector<double> real(out.v.begin(), out.v.begin() + n);
  std::vector<double> fake(out.v.begin() + n, out.v.end());
  std::vector<double> d_real, d_fake;
  const bool relativistic = disc.dcfg.relativistic;
  const double loss = relativistic ? ragan_disc_loss(real, fake, &d_real, &d_fake)
                                   : gan_discriminator_loss(real, fake, &d_real, &d_fake);

  Tensor dy(out.n, 1, 1, 1);
  for (int i = 0; i < n; ++i) dy.v[i] = d_real[i];
  for (int i = 0; i < n; ++i) dy.v[n + i] = d_fake[i];
  disc.backward(dy);
  opt_d.step(d_params, lr);
  return loss;
}

GanStepStats gan_gen_step(Model& gen, Model& disc, Adam& opt_g, double lr,
                          const Tensor& lr_batch, const Tensor& hr_batch,
                          const LossSetup& losses, Rng& rng) {
  const std::vector<ParamRef> g_params = gen.params();
  zero_grads(g_params);

  ForwardCtx gctx{true, true, &rng};
  Tensor sr = gen.forward_raw(lr_batch, gctx);
  Tensor x = concat_samples(hr_batch, sr);
  ForwardCtx dctx{false, true, nullptr};
  Tensor out = disc.forward_raw(x, dctx);

  const int n = hr_batch.n;
  std::vector<double> real(out.v.begin(), out.v.begin() + n);
  std::vector<double> fake(out.v.begin() + n, out.v.end());

  GanStepStats stats;
  Tensor dsr;
  std::vector<double> d_real(n, 0.0), d_fake(n, 0.0);
  if (disc.dcfg.relativistic) {
    Tensor d_perc, d_cont;
    stats.gen_perceptual = perceptual(sr, hr_batch, *losses.fx, PercNorm::l1, &d_perc);
    stats.gen_content = content_l1(sr, hr_batch, &d_cont);
    stats.gen_adversarial = ragan_gen_loss(real, fake, &d_real, &d_fake);
    const LossWeights& w = losses.weights;
    stats.gen_total = w.lambda_perc * stats.gen_perceptual + w.lambda_adv * stats.gen_adversarial +
                      w.lambda_cont * stats.gen_content;
    dsr = Tensor(sr.n, sr.c, sr.h, sr.w);
    for (std::size_t i = 0; i < dsr.v.size(); ++i)
      dsr.v[i] = w.lambda_perc * d_perc.v[i] + w.lambda_cont * d_cont.v[i];
    for (double& g : d_real) g *= w.lambda_adv;
    for (double& g : d_fake) g *= w.lambda_adv;
  } else {
    std::vector<double> d_prob;
    stats.gen_perceptual = perceptual(sr, hr_batch, *losses.fx, PercNorm::l2, &dsr);
    stats.gen_adversarial = srgan_adv(fake, &d_prob);
    stats.gen_total = stats.gen_perceptual + 1e-3 * stats.gen_adversarial;
    for (int i = 0; i < n; ++i) d_fake[i] = 1e-3 * d_prob[i];
  }

  Tensor dy(out.n, 1, 1, 1);
  for (int i = 0; i < n; ++i) dy.v[i] = d_real[i];
  for (int i = 0; i < n; ++i) dy.v[n + i] = d_fake[i];
  Tensor dx = disc.backward(dy);
  Tensor dsr_adv = take_samples(dx, n, n);
  dsr += dsr_adv;
  gen.backward(dsr);
  opt_g.step(g_params, lr);
  return stats;
}

// ---------------------------------------------------------------------------
// Adversarial training

GanCheckpoints train_gan(Model& gen, Model& disc, const PairDataset& data,
                         const TrainConfig& cfg, const LossSetup& losses, TrainReport* report) {
  validate(cfg);
  if (cfg.phase != Phase::adversarial)
    throw ConfigError("train_gan requires phase = adversarial");
  if (!gen.is_generator() || disc.is_generator())
    throw ConfigError("train_gan requires a generator and a discriminator");
  if ((gen.kind == ModelKind::esrgan_gen) != disc.dcfg.relativistic)
    throw ConfigError("generator flavor and discriminator flavor do not match");
  if (!losses.fx) throw ConfigError("train_gan requires a feature extractor");
  check_dataset(data, cfg);

  TrainReport local;
  TrainReport& rep = report ? *report : local;
  rep.seed = cfg.seed;
  Adam opt_g(cfg.beta1, cfg.beta2);
  Adam opt_d(cfg.beta1, cfg.beta2);

  std::vector<int> order(data.pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  const std::size_t steps_per_epoch = data.pairs.size() / cfg.batch_size;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    shuffle_indices(order, rng);
    EpochRecord rec{epoch, lr, 0.0, 0.0, 0.0, 0.0, 0.0};
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      Tensor lr_batch, hr_batch;
      assemble_batch(data, order, s * cfg.batch_size, cfg.batch_size, cfg.augment, rng,
                     lr_batch, hr_batch);
      const double dl = gan_disc_step(gen, disc, opt_d, lr, lr_batch, hr_batch, rng);
      const GanStepStats gs =
          gan_gen_step(gen, disc, opt_g, lr, lr_batch, hr_batch, losses, rng);
      if (!std::isfinite(dl) || !std::isfinite(gs.gen_total))
        throw TrainingDiverged("non-finite adversarial loss", epoch, static_cast<int>(s));
      rec.disc += dl;
      rec.gen_total += gs.gen_total;
      rec.gen_content += gs.gen_content;
      rec.gen_perceptual += gs.gen_perceptual;
      rec.gen_adversarial += gs.gen_adversarial;
    }
    const double inv = 1.0 / static_cast<double>(steps_per_epoch);
    rec.disc *= inv;
    rec.gen_total *= inv;
    rec.gen_content *= inv;
    rec.gen_perceptual *= inv;
    rec.gen_adversarial *= inv;
    rep.epochs.push_back(rec);
  }

  GanCheckpoints out;
  out.gen = snapshot(
      gen, {"adversarial", cfg.epochs, cfg.seed, loss_trace_digest(trace_of(rep, false))});
  out.disc = snapshot(
      disc, {"adversarial", cfg.epochs, cfg.seed, loss_trace_digest(trace_of(rep, true))});
  return out;
}

// ---------------------------------------------------------------------------
// Full runs and ensembles

Checkpoint train_one(const TrainSpec& spec, const PairDataset& data, std::uint64_t seed,
                     TrainReport* report) {
  FeatureExtractor fx =
      (!spec.fx_weights_path.empty() && std::filesystem::exists(spec.fx_weights_path))
          ? FeatureExtractor::from_file(spec.fx_weights_path)
          : FeatureExtractor(spec.fx_layer_tag, spec.fx_seed);

  Model gen = spec.esrgan ? build_esrgan_generator(spec.gcfg, seed)
                          : build_srgan_generator(spec.gcfg, seed);

  TrainReport local;
  TrainReport& rep = report ? *report : local;
  rep.seed = seed;

  Checkpoint last = snapshot(gen, {"init", 0, seed, 0});
  if (spec.pretrain.epochs > 0) {
    TrainConfig pcfg = spec.pretrain;
    pcfg.phase = Phase::psnr_pretrain;
    pcfg.seed = mix_seed(seed, 1);
    TrainReport prep;
    last = pretrain_psnr(gen, data, pcfg, &prep);
    for (EpochRecord r : prep.epochs) {
      r.epoch = static_cast<int>(rep.epochs.size());
      rep.epochs.push_back(r);
    }
  }
  if (spec.adversarial.epochs > 0) {
    TrainConfig acfg = spec.adversarial;
    acfg.phase = Phase::adversarial;
    acfg.seed = mix_seed(seed, 2);
    Model disc = spec.esrgan ? build_esrgan_discriminator(spec.dcfg, mix_seed(seed, 3))
                             : build_srgan_discriminator(spec.dcfg, mix_seed(seed, 3));
    LossSetup losses{&fx, spec.weights};
    TrainReport arep;
    GanCheckpoints ckpts = train_gan(gen, disc, data, acfg, losses, &arep);
    for (EpochRecord r : arep.epochs) {
      r.epoch = static_cast<int>(rep.epochs.size());
      rep.epochs.push_back(r);
    }
    last = std::move(ckpts.gen);
  }
  // Record the member seed, not the phase sub-seed, for provenance.
  last.prov.seed = seed;
  return last;
}

std::vector<Checkpoint> train_ensemble(const TrainSpec& spec, const PairDataset& data, int m,
                                       const std::vector<std::uint64_t>& seeds,
                                       std::vector<TrainReport>* reports) {
  if (m < 1) throw ConfigError("ensemble size must be at least 1");
  if (static_cast<int>(seeds.size()) != m)
    throw ConfigError("ensemble needs exactly one seed per member");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw ConfigError("ensemble seeds must be distinct");

  std::vector<Checkpoint> members;
  for (int k = 0; k < m; ++k) {
    TrainReport rep;
    members.push_back(train_one(spec, data, seeds[k], &rep));
    if (reports) reports->push_back(std::move(rep));
  }
  return members;
}

}  // namespace uqsr
