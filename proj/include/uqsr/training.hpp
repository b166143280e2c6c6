#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uqsr/checkpoint.hpp"
#include "uqsr/imaging.hpp"
#include "uqsr/losses.hpp"
#include "uqsr/models.hpp"

namespace uqsr {

enum class Phase { psnr_pretrain, adversarial };

struct TrainConfig {
  double lr0 = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int batch_size = 16;
  int epochs = 300;
  std::vector<int> milestones;  // empty = constant lr
  double decay_factor = 2.0;
  std::uint64_t seed = 0;
  Phase phase = Phase::adversarial;
  AugmentConfig augment;
};

void validate(const TrainConfig& cfg);

// lr0 / decay_factor^(number of milestones <= epoch).
double lr_at(int epoch, const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double gen_total = 0.0;
  double gen_content = 0.0;
  double gen_perceptual = 0.0;
  double gen_adversarial = 0.0;
  double disc = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  double wall_seconds = 0.0;  // stdout diagnostics only, never in artifacts
  std::uint64_t seed = 0;
  std::string checkpoint_path;
};

// CSV columns: epoch,lr,gen_total,gen_content,gen_perceptual,gen_adversarial,disc
void write_train_csv(const TrainReport& report, const std::string& path);
// Line-oriented text log of the same records.
void write_train_log(const TrainReport& report, const std::string& path);

class Adam {
 public:
  Adam(double beta1, double beta2, double eps = 1e-8);
  // Bias-corrected update at the given learning rate; call after gradients
  // for exactly one step have been accumulated.
  void step(const std::vector<ParamRef>& params, double lr);

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Loss wiring for one adversarial setup. SRGAN flavor: composite generator
// loss (perceptual L2 + 1e-3 adversarial) against the plain GAN
// discriminator loss. ESRGAN flavor: three-term weighted loss with
// relativistic-average adversarial terms.
struct LossSetup {
  FeatureExtractor* fx = nullptr;
  LossWeights weights;  // ESRGAN flavor only
};

struct GanStepStats {
  double disc = 0.0;
  double gen_total = 0.0;
  double gen_content = 0.0;
  double gen_perceptual = 0.0;
  double gen_adversarial = 0.0;
};

// One discriminator update against the current (frozen) generator.
double gan_disc_step(Model& gen, Model& disc, Adam& opt_d, double lr, const Tensor& lr_batch,
                     const Tensor& hr_batch, Rng& rng);
// One generator update against the current (frozen) discriminator.
GanStepStats gan_gen_step(Model& gen, Model& disc, Adam& opt_g, double lr,
                          const Tensor& lr_batch, const Tensor& hr_batch,
                          const LossSetup& losses, Rng& rng);

// Generator-only optimization on content_l1 (ESRGAN phase 1).
Checkpoint pretrain_psnr(Model& gen, const PairDataset& data, const TrainConfig& cfg,
                         TrainReport* report = nullptr);

// Alternating one-disc-step / one-gen-step adversarial training. Non-finite
// losses abort with diagnostic state.
struct GanCheckpoints {
  Checkpoint gen;
  Checkpoint disc;
};
GanCheckpoints train_gan(Model& gen, Model& disc, const PairDataset& data,
                         const TrainConfig& cfg, const LossSetup& losses,
                         TrainReport* report = nullptr);

// Everything needed to train one model end to end; ensemble members differ
// only in seed.
struct TrainSpec {
  bool esrgan = true;
  GeneratorConfig gcfg;
  DiscriminatorConfig dcfg;
  TrainConfig pretrain;     // epochs = 0 skips the phase
  TrainConfig adversarial;  // epochs = 0 skips the phase
  LossWeights weights;
  int fx_layer_tag = 3;
  std::uint64_t fx_seed = 0x5eed0fea;
  std::string fx_weights_path;  // loaded when non-empty and present
};

Checkpoint train_one(const TrainSpec& spec, const PairDataset& data, std::uint64_t seed,
                     TrainReport* report = nullptr);

std::vector<Checkpoint> train_ensemble(const TrainSpec& spec, const PairDataset& data, int m,
                                       const std::vector<std::uint64_t>& seeds,
                                       std::vector<TrainReport>* reports = nullptr);

}  // namespace uqsr
