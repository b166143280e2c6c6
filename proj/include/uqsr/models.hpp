#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "uqsr/image.hpp"
#include "uqsr/layers.hpp"

namespace uqsr {

struct GeneratorConfig {
  int scale = 4;  // power of two, realized as factor-2 pixel-shuffle stages
  int base_channels = 64;
  int n_blocks = 16;  // residual blocks (SRGAN) or RRDBs (ESRGAN)
  int rdb_per_rrdb = 3;
  int convs_per_rdb = 5;
  int growth_channels = 32;
  double residual_scale = 0.2;
  int dropout_count = 0;
  double dropout_p = 0.1;
};

struct DiscriminatorConfig {
  int base_channels = 64;
  int n_stages = 4;  // stride-2 conv stages; channels double per stage, cap 8x
  bool relativistic = false;
};

void validate(const GeneratorConfig& cfg, bool esrgan);
void validate(const DiscriminatorConfig& cfg);

// Positions (1-based block indices) after which the dropout layers sit:
// floor(k * n_blocks / count) for k = 1..count.
std::vector<int> dropout_positions(int n_blocks, int count);

class Net {
 public:
  virtual ~Net() = default;
  virtual Tensor forward(const Tensor& x, const ForwardCtx& ctx) = 0;
  virtual Tensor backward(const Tensor& dy) = 0;
  virtual void collect_params(std::vector<ParamRef>& out) = 0;
};

enum class ModelKind { srgan_gen, srgan_disc, esrgan_gen, esrgan_disc };

std::string kind_name(ModelKind kind);
ModelKind kind_from_name(const std::string& name);

struct Model {
  ModelKind kind;
  GeneratorConfig gcfg;
  DiscriminatorConfig dcfg;
  std::uint64_t init_seed = 0;
  std::vector<int> dropout_pos;  // recorded placement, generators only
  std::unique_ptr<Net> net;

  bool is_generator() const {
    return kind == ModelKind::srgan_gen || kind == ModelKind::esrgan_gen;
  }
  Tensor forward_raw(const Tensor& x, const ForwardCtx& ctx) { return net->forward(x, ctx); }
  Tensor backward(const Tensor& dy) { return net->backward(dy); }
  std::vector<ParamRef> params() const;
  std::size_t param_count() const;
};

// Builders. Construction is deterministic: (config, seed) fixes every weight.
//
// SRGAN generator: 9x9 conv + PReLU; n_blocks residual blocks, each
// conv3-PReLU-conv3 with identity skip (no batch norm); 3x3 trunk conv added
// to a global skip; log2(scale) stages of conv3 (B -> 4B) + pixel shuffle +
// PReLU; final 9x9 conv to 3 channels.
Model build_srgan_generator(const GeneratorConfig& cfg, std::uint64_t seed);

// Discriminators: 3x3 stride-1 conv to base_channels + leaky ReLU, then
// n_stages stride-2 convs with channels base*min(2^s, 8) + leaky ReLU, global
// average pool, linear head to one scalar. SRGAN flavor ends in a sigmoid;
// the relativistic flavor emits the raw logit.
Model build_srgan_discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed);

// ESRGAN generator: 3x3 conv; n_blocks RRDBs (each rdb_per_rrdb dense blocks,
// residuals scaled by residual_scale); 3x3 trunk conv + global skip;
// conv + pixel shuffle + leaky ReLU per factor-2 stage; 3x3 HR conv + leaky
// ReLU; final 3x3 conv.
Model build_esrgan_generator(const GeneratorConfig& cfg, std::uint64_t seed);

Model build_esrgan_discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed);

Model build_model(ModelKind kind, const GeneratorConfig& gcfg, const DiscriminatorConfig& dcfg,
                  std::uint64_t seed);

// Inference surfaces. Generator outputs are clamped to [0,1]; training code
// uses forward_raw instead, which never clamps. A non-null rng is required
// only when dropout_active and the model carries live dropout.
std::vector<ImageTensor> forward(Model& m, const std::vector<ImageTensor>& batch,
                                 bool dropout_active, Rng* rng = nullptr);
std::vector<double> forward_scores(Model& m, const std::vector<ImageTensor>& batch);

}  // namespace uqsr
