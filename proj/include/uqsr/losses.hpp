#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uqsr/layers.hpp"
#include "uqsr/tensor.hpp"

namespace uqsr {

// Probabilities are clamped to [kProbEps, 1 - kProbEps] before any logarithm.
inline constexpr double kProbEps = 1e-7;

enum class PercNorm { l2, l1 };
enum class FxProvenance { pretrained, random_seeded };

// Frozen convolutional embedding network for perceptual losses. layer_tag
// counts conv+pool stages; 0 is the identity embedding. Weights are fixed at
// construction (seeded) or loaded from a weights file; they never train.
class FeatureExtractor {
 public:
  FeatureExtractor(int layer_tag, std::uint64_t seed);
  static FeatureExtractor from_file(const std::string& path);
  void save(const std::string& path);

  // `store` caches activations for the following backward().
  Tensor forward(const Tensor& x, bool store = false);
  Tensor backward(const Tensor& dfeat);

  int layer_tag() const { return layer_tag_; }
  std::uint64_t seed() const { return seed_; }
  FxProvenance provenance() const { return provenance_; }

 private:
  FeatureExtractor() = default;
  void build(Rng& rng);

  int layer_tag_ = 0;
  std::uint64_t seed_ = 0;
  FxProvenance provenance_ = FxProvenance::random_seeded;
  std::vector<Conv2d> convs_;
  std::vector<LeakyReLU> acts_;
  std::vector<AvgPool2d> pools_;
};

struct LossWeights {
  double lambda_cont = 1e-2;
  double lambda_adv = 5e-3;
  double lambda_perc = 1.0;
};

void validate(const LossWeights& w);

// Mean absolute difference over all elements. Optional dsr receives
// d loss / d sr.
double content_l1(const Tensor& sr, const Tensor& hr, Tensor* dsr = nullptr);

// Mean-reduced distance between frozen embeddings: squared L2 (SRGAN mode)
// or L1 (ESRGAN mode).
double perceptual(const Tensor& sr, const Tensor& hr, FeatureExtractor& fx, PercNorm norm,
                  Tensor* dsr = nullptr);

// Mean of -log d over the batch; acts only on super-resolved probabilities.
double srgan_adv(const std::vector<double>& d_prob_sr, std::vector<double>* grad = nullptr);

// perceptual(L2) + 1e-3 * srgan_adv.
double srgan_generator_loss(const Tensor& sr, const Tensor& hr,
                            const std::vector<double>& d_prob_sr, FeatureExtractor& fx,
                            Tensor* dsr = nullptr, std::vector<double>* d_prob_grad = nullptr);

// Mean of -log d_real plus mean of -log(1 - d_fake).
double gan_discriminator_loss(const std::vector<double>& d_prob_real,
                              const std::vector<double>& d_prob_fake,
                              std::vector<double>* d_real_grad = nullptr,
                              std::vector<double>* d_fake_grad = nullptr);

// Relativistic-average terms over raw logits:
//   D_ra(a, b) = sigmoid(C(a) - mean_b C(b))
//   disc    = -mean log D_ra(real, fake) - mean log(1 - D_ra(fake, real))
//   gen_adv = -mean log(1 - D_ra(real, fake)) - mean log D_ra(fake, real)
struct RaganPair {
  double gen_adv = 0.0;
  double disc = 0.0;
};
RaganPair ragan_losses(const std::vector<double>& logits_real,
                       const std::vector<double>& logits_fake);
double ragan_disc_loss(const std::vector<double>& logits_real,
                       const std::vector<double>& logits_fake,
                       std::vector<double>* d_real_grad = nullptr,
                       std::vector<double>* d_fake_grad = nullptr);
double ragan_gen_loss(const std::vector<double>& logits_real,
                      const std::vector<double>& logits_fake,
                      std::vector<double>* d_real_grad = nullptr,
                      std::vector<double>* d_fake_grad = nullptr);

// w.lambda_perc * perceptual(L1) + w.lambda_adv * ragan gen_adv
// + w.lambda_cont * content_l1.
double esrgan_generator_loss(const Tensor& sr, const Tensor& hr,
                             const std::vector<double>& logits_real,
                             const std::vector<double>& logits_fake, FeatureExtractor& fx,
                             const LossWeights& w, Tensor* dsr = nullptr,
                             std::vector<double>* d_real_grad = nullptr,
                             std::vector<double>* d_fake_grad = nullptr);

}  // namespace uqsr
