#include "uqsr/models.hpp"

#include <cmath>
#include <utility>

#include "uqsr/errors.hpp"

namespace uqsr {

namespace {

bool power_of_two(int x) { return x >= 1 && (x & (x - 1)) == 0; }

int upsample_stages(int scale) {
  int stages = 0;
  while ((1 << stages) < scale) ++stages;
  return stages;
}

}  // namespace

void validate(const GeneratorConfig& cfg, bool esrgan) {
  if (!power_of_two(cfg.scale)) throw ConfigError("generator scale must be a power of two");
  if (cfg.base_channels < 1) throw ConfigError("base_channels must be positive");
  if (cfg.n_blocks < 1) throw ConfigError("n_blocks must be positive");
  if (cfg.dropout_p < 0.0 || cfg.dropout_p >= 1.0)
    throw ConfigError("dropout_p must be in [0, 1)");
  if (cfg.dropout_count < 0 || cfg.dropout_count > cfg.n_blocks)
    throw ConfigError("dropout_count must be in [0, n_blocks]");
  if (esrgan) {
    if (cfg.rdb_per_rrdb < 1) throw ConfigError("rdb_per_rrdb must be positive");
    if (cfg.convs_per_rdb < 2) throw ConfigError("convs_per_rdb must be at least 2");
    if (cfg.growth_channels < 1) throw ConfigError("growth_channels must be positive");
    if (!std::isfinite(cfg.residual_scale)) throw ConfigError("residual_scale must be finite");
  }
}

void validate(const DiscriminatorConfig& cfg) {
  if (cfg.base_channels < 1) throw ConfigError("base_channels must be positive");
  if (cfg.n_stages < 1) throw ConfigError("n_stages must be at least 1");
}

std::vector<int> dropout_positions(int n_blocks, int count) {
  std::vector<int> pos;
  for (int k = 1; k <= count; ++k)
    pos.push_back(static_cast<int>(static_cast<long long>(k) * n_blocks / count));
  return pos;
}

std::string kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::srgan_gen: return "srgan_gen";
    case ModelKind::srgan_disc: return "srgan_disc";
    case ModelKind::esrgan_gen: return "esrgan_gen";
    case ModelKind::esrgan_disc: return "esrgan_disc";
  }
  throw DomainError("unknown model kind");
}

ModelKind kind_from_name(const std::string& name) {
  if (name == "srgan_gen") return ModelKind::srgan_gen;
  if (name == "srgan_disc") return ModelKind::srgan_disc;
  if (name == "esrgan_gen") return ModelKind::esrgan_gen;
  if (name == "esrgan_disc") return ModelKind::esrgan_disc;
  throw FormatError("unknown model kind: " + name);
}

// ---------------------------------------------------------------------------
// Blocks

namespace {

// conv3-PReLU-conv3 with identity skip.
struct SrganResBlock {
  Conv2d conv1, conv2;
  PReLU act;

  SrganResBlock(int ch, Rng& rng) : conv1(ch, ch, 3), conv2(ch, ch, 3) {
    conv1.init_kaiming(rng);
    conv2.init_kaiming(rng);
  }

  Tensor forward(const Tensor& x, const ForwardCtx& ctx) {
    Tensor y = conv2.forward(act.forward(conv1.forward(x, ctx), ctx), ctx);
    y += x;
    return y;
  }

  Tensor backward(const Tensor& dy) {
    Tensor dx = conv1.backward(act.backward(conv2.backward(dy)));
    dx += dy;
    return dx;
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
    conv1.collect_params(prefix + ".conv1", out);
    act.collect_params(prefix + ".act", out);
    conv2.collect_params(prefix + ".conv2", out);
  }
};

// Dense block: conv k sees the input plus all previous growth maps; the last
// conv fuses back to base channels; output = x + beta * fusion.
struct ResidualDenseBlock {
  int base, growth, n_convs;
  double beta;
  std::vector<Conv2d> convs;
  std::vector<LeakyReLU> acts;
  std::vector<Tensor> feats_;  // cached forward features, feats_[0] = x

  ResidualDenseBlock(const GeneratorConfig& cfg, Rng& rng)
      : base(cfg.base_channels),
        growth(cfg.growth_channels),
        n_convs(cfg.convs_per_rdb),
        beta(cfg.residual_scale) {
    for (int k = 1; k <= n_convs; ++k) {
      const int in_ch = base + (k - 1) * growth;
      const int out_ch = k < n_convs ? growth : base;
      convs.emplace_back(in_ch, out_ch, 3);
      convs.back().init_kaiming(rng);
    }
    acts.resize(n_convs - 1, LeakyReLU(0.2));
  }

  Tensor forward(const Tensor& x, const ForwardCtx& ctx) {
    std::vector<Tensor> feats;
    feats.push_back(x);
    std::vector<const Tensor*> views{&feats[0]};
    for (int k = 0; k + 1 < n_convs; ++k) {
      Tensor f = acts[k].forward(convs[k].forward(concat_channels(views), ctx), ctx);
      feats.push_back(std::move(f));
      views.clear();
      for (const Tensor& t : feats) views.push_back(&t);
    }
    Tensor fusion = convs[n_convs - 1].forward(concat_channels(views), ctx);
    fusion *= beta;
    fusion += x;
    if (ctx.store) feats_ = std::move(feats);
    return fusion;
  }

  Tensor backward(const Tensor& dy) {
    // d_feats[k] accumulates the gradient flowing into feature k
    // (k = 0 is the block input, k >= 1 the growth maps).
    std::vector<Tensor> d_feats(n_convs);
    d_feats[0] = Tensor(dy.n, base, dy.h, dy.w);
    for (int k = 1; k < n_convs; ++k) d_feats[k] = Tensor(dy.n, growth, dy.h, dy.w);

    auto scatter = [&](const Tensor& d_concat, int upto) {
      int off = 0;
      for (int k = 0; k <= upto; ++k) {
        const int ch = k == 0 ? base : growth;
        Tensor part = slice_channels(d_concat, off, off + ch);
        d_feats[k] += part;
        off += ch;
      }
    };

    Tensor d_fusion = dy;
    d_fusion *= beta;
    scatter(convs[n_convs - 1].backward(d_fusion), n_convs - 2);
    for (int k = n_convs - 2; k >= 0; --k) {
      Tensor d_in = convs[k].backward(acts[k].backward(d_feats[k + 1]));
      scatter(d_in, k - 1);
    }
    Tensor dx = dy;
    dx += d_feats[0];
    return dx;
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
    for (int k = 0; k < n_convs; ++k)
      convs[k].collect_params(prefix + ".conv" + std::to_string(k + 1), out);
  }
};

struct Rrdb {
  double beta;
  std::vector<ResidualDenseBlock> rdbs;

  Rrdb(const GeneratorConfig& cfg, Rng& rng) : beta(cfg.residual_scale) {
    for (int i = 0; i < cfg.rdb_per_rrdb; ++i) rdbs.emplace_back(cfg, rng);
  }

  Tensor forward(const Tensor& x, const ForwardCtx& ctx) {
    Tensor y = x;
    for (ResidualDenseBlock& rdb : rdbs) y = rdb.forward(y, ctx);
    y *= beta;
    y += x;
    return y;
  }

  Tensor backward(const Tensor& dy) {
    Tensor d = dy;
    d *= beta;
    for (auto it = rdbs.rbegin(); it != rdbs.rend(); ++it) d = it->backward(d);
    d += dy;
    return d;
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
    for (std::size_t i = 0; i < rdbs.size(); ++i)
      rdbs[i].collect_params(prefix + ".rdb" + std::to_string(i + 1), out);
  }
};

struct UpsampleStage {
  Conv2d conv;
  PixelShuffle shuffle{2};

  UpsampleStage(int ch, Rng& rng) : conv(ch, 4 * ch, 3) { conv.init_kaiming(rng); }
};

}  // namespace

// ---------------------------------------------------------------------------
// SRGAN generator

namespace {

class SrganGeneratorNet final : public Net {
 public:
  SrganGeneratorNet(const GeneratorConfig& cfg, Rng& rng)
      : cfg_(cfg),
        conv_first_(3, cfg.base_channels, 9),
        conv_trunk_(cfg.base_channels, cfg.base_channels, 3),
        conv_last_(cfg.base_channels, 3, 9),
        drop_after_(cfg.n_blocks + 1, -1) {
    conv_first_.init_kaiming(rng);
    for (int i = 0; i < cfg.n_blocks; ++i) blocks_.emplace_back(cfg.base_channels, rng);
    conv_trunk_.init_kaiming(rng);
    for (int s = 0; s < upsample_stages(cfg.scale); ++s) {
      ups_.emplace_back(cfg.base_channels, rng);
      up_acts_.emplace_back();
    }
    conv_last_.init_kaiming(rng);
    const std::vector<int> pos = dropout_positions(cfg.n_blocks, cfg.dropout_count);
    for (std::size_t i = 0; i < pos.size(); ++i) {
      drops_.emplace_back(cfg.dropout_p);
      drop_after_[pos[i]] = static_cast<int>(i);
    }
  }

  Tensor forward(const Tensor& x, const ForwardCtx& ctx) override {
    Tensor f0 = act_first_.forward(conv_first_.forward(x, ctx), ctx);
    Tensor f = f0;
    for (int i = 0; i < cfg_.n_blocks; ++i) {
      f = blocks_[i].forward(f, ctx);
      if (drop_after_[i + 1] >= 0) f = drops_[drop_after_[i + 1]].forward(f, ctx);
    }
    Tensor t = conv_trunk_.forward(f, ctx);
    t += f0;
    for (std::size_t s = 0; s < ups_.size(); ++s)
      t = up_acts_[s].forward(ups_[s].shuffle.forward(ups_[s].conv.forward(t, ctx), ctx), ctx);
    return conv_last_.forward(t, ctx);
  }

  Tensor backward(const Tensor& dy) override {
    Tensor d = conv_last_.backward(dy);
    for (std::size_t s = ups_.size(); s-- > 0;)
      d = ups_[s].conv.backward(ups_[s].shuffle.backward(up_acts_[s].backward(d)));
    Tensor df0 = d;  // global skip
    d = conv_trunk_.backward(d);
    for (int i = cfg_.n_blocks - 1; i >= 0; --i) {
      if (drop_after_[i + 1] >= 0) d = drops_[drop_after_[i + 1]].backward(d);
      d = blocks_[i].backward(d);
    }
    df0 += d;
    return conv_first_.backward(act_first_.backward(df0));
  }

  void collect_params(std::vector<ParamRef>& out) override {
    conv_first_.collect_params("conv_first", out);
    act_first_.collect_params("act_first", out);
    for (std::size_t i = 0; i < blocks_.size(); ++i)
      blocks_[i].collect_params("block" + std::to_string(i + 1), out);
    conv_trunk_.collect_params("conv_trunk", out);
    for (std::size_t s = 0; s < ups_.size(); ++s) {
      ups_[s].conv.collect_params("up" + std::to_string(s + 1) + ".conv", out);
      up_acts_[s].collect_params("up" + std::to_string(s + 1) + ".act", out);
    }
    conv_last_.collect_params("conv_last", out);
  }

 private:
  GeneratorConfig cfg_;
  Conv2d conv_first_;
  PReLU act_first_;
  std::vector<SrganResBlock> blocks_;
  Conv2d conv_trunk_;
  std::vector<UpsampleStage> ups_;
  std::vector<PReLU> up_acts_;
  Conv2d conv_last_;
  std::vector<Dropout> drops_;
  std::vector<int> drop_after_;  // block index (1-based) -> dropout slot
};

// ---------------------------------------------------------------------------
// ESRGAN generator

class EsrganGeneratorNet final : public Net {
 public:
  EsrganGeneratorNet(const GeneratorConfig& cfg, Rng& rng)
      : cfg_(cfg),
        conv_first_(3, cfg.base_channels, 3),
        conv_trunk_(cfg.base_channels, cfg.base_channels, 3),
        conv_hr_(cfg.base_channels, cfg.base_channels, 3),
        conv_last_(cfg.base_channels, 3, 3),
        drop_after_(cfg.n_blocks + 1, -1) {
    conv_first_.init_kaiming(rng);
    for (int i = 0; i < cfg.n_blocks; ++i) rrdbs_.emplace_back(cfg, rng);
    conv_trunk_.init_kaiming(rng);
    for (int s = 0; s < upsample_stages(cfg.scale); ++s) {
      ups_.emplace_back(cfg.base_channels, rng);
      up_acts_.emplace_back(0.2);
    }
    conv_hr_.init_kaiming(rng);
    conv_last_.init_kaiming(rng);
    const std::vector<int> pos = dropout_positions(cfg.n_blocks, cfg.dropout_count);
    for (std::size_t i = 0; i < pos.size(); ++i) {
      drops_.emplace_back(cfg.dropout_p);
      drop_after_[pos[i]] = static_cast<int>(i);
    }
  }

  Tensor forward(const Tensor& x, const ForwardCtx& ctx) override {
    Tensor f0 = conv_first_.forward(x, ctx);
    Tensor f = f0;
    for (int i = 0; i < cfg_.n_blocks; ++i) {
      f = rrdbs_[i].forward(f, ctx);
      if (drop_after_[i + 1] >= 0) f = drops_[drop_after_[i + 1]].forward(f, ctx);
    }
    Tensor t = conv_trunk_.forward(f, ctx);
    t += f0;
    for (std::size_t s = 0; s < ups_.size(); ++s)
      t = up_acts_[s].forward(ups_[s].shuffle.forward(ups_[s].conv.forward(t, ctx), ctx), ctx);
    t = act_hr_.forward(conv_hr_.forward(t, ctx), ctx);
    return conv_last_.forward(t, ctx);
  }

  Tensor backward(const Tensor& dy) override {
    Tensor d = conv_last_.backward(dy);
    d = conv_hr_.backward(act_hr_.backward(d));
    for (std::size_t s = ups_.size(); s-- > 0;)
      d = ups_[s].conv.backward(ups_[s].shuffle.backward(up_acts_[s].backward(d)));
    Tensor df0 = d;
    d = conv_trunk_.backward(d);
    for (int i = cfg_.n_blocks - 1; i >= 0; --i) {
      if (drop_after_[i + 1] >= 0) d = drops_[drop_after_[i + 1]].backward(d);
      d = rrdbs_[i].backward(d);
    }
    df0 += d;
    return conv_first_.backward(df0);
  }

  void collect_params(std::vector<ParamRef>& out) override {
    conv_first_.collect_params("conv_first", out);
    for (std::size_t i = 0; i < rrdbs_.size(); ++i)
      rrdbs_[i].collect_params("rrdb" + std::to_string(i + 1), out);
    conv_trunk_.collect_params("conv_trunk", out);
    for (std::size_t s = 0; s < ups_.size(); ++s)
      ups_[s].conv.collect_params("up" + std::to_string(s + 1) + ".conv", out);
    conv_hr_.collect_params("conv_hr", out);
    conv_last_.collect_params("conv_last", out);
  }

 private:
  GeneratorConfig cfg_;
  Conv2d conv_first_;
  std::vector<Rrdb> rrdbs_;
  Conv2d conv_trunk_;
  std::vector<UpsampleStage> ups_;
  std::vector<LeakyReLU> up_acts_;
  Conv2d conv_hr_;
  LeakyReLU act_hr_{0.2};
  Conv2d conv_last_;
  std::vector<Dropout> drops_;
  std::vector<int> drop_after_;
};

// ---------------------------------------------------------------------------
// Discriminator (shared backbone; sigmoid head for the SRGAN flavor)

class DiscriminatorNet final : public Net {
 public:
  DiscriminatorNet(const DiscriminatorConfig& cfg, Rng& rng) : cfg_(cfg), fc_(1, 1) {
    int ch = cfg.base_channels;
    convs_.emplace_back(3, ch, 3, 1);
    convs_.back().init_kaiming(rng);
    acts_.emplace_back(0.2);
    for (int s = 1; s <= cfg.n_stages; ++s) {
      const int next = cfg.base_channels * std::min(1 << s, 8);
      convs_.emplace_back(ch, next, 3, 2);
      convs_.back().init_kaiming(rng);
      acts_.emplace_back(0.2);
      ch = next;
    }
    fc_ = Linear(ch, 1);
    fc_.init_kaiming(rng);
  }

  Tensor forward(const Tensor& x, const ForwardCtx& ctx) override {
    Tensor t = x;
    for (std::size_t i = 0; i < convs_.size(); ++i)
      t = acts_[i].forward(convs_[i].forward(t, ctx), ctx);
    t = fc_.forward(gap_.forward(t, ctx), ctx);
    if (!cfg_.relativistic) t = sigmoid_.forward(t, ctx);
    return t;
  }

  Tensor backward(const Tensor& dy) override {
    Tensor d = dy;
    if (!cfg_.relativistic) d = sigmoid_.backward(d);
    d = gap_.backward(fc_.backward(d));
    for (std::size_t i = convs_.size(); i-- > 0;) d = convs_[i].backward(acts_[i].backward(d));
    return d;
  }

  void collect_params(std::vector<ParamRef>& out) override {
    for (std::size_t i = 0; i < convs_.size(); ++i)
      convs_[i].collect_params("conv" + std::to_string(i), out);
    fc_.collect_params("fc", out);
  }

 private:
  DiscriminatorConfig cfg_;
  std::vector<Conv2d> convs_;
  std::vector<LeakyReLU> acts_;
  GlobalAvgPool gap_;
  Linear fc_;
  Sigmoid sigmoid_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Builders and surfaces

std::vector<ParamRef> Model::params() const {
  std::vector<ParamRef> out;
  net->collect_params(out);
  return out;
}

std::size_t Model::param_count() const {
  std::size_t total = 0;
  for (const ParamRef& p : params()) total += p.value->size();
  return total;
}

Model build_srgan_generator(const GeneratorConfig& cfg, std::uint64_t seed) {
  validate(cfg, false);
  Rng rng(seed);
  Model m;
  m.kind = ModelKind::srgan_gen;
  m.gcfg = cfg;
  m.init_seed = seed;
  m.dropout_pos = dropout_positions(cfg.n_blocks, cfg.dropout_count);
  m.net = std::make_unique<SrganGeneratorNet>(cfg, rng);
  return m;
}

Model build_esrgan_generator(const GeneratorConfig& cfg, std::uint64_t seed) {
  validate(cfg, true);
  Rng rng(seed);
  Model m;
  m.kind = ModelKind::esrgan_gen;
  m.gcfg = cfg;
  m.init_seed = seed;
  m.dropout_pos = dropout_positions(cfg.n_blocks, cfg.dropout_count);
  m.net = std::make_unique<EsrganGeneratorNet>(cfg, rng);
  return m;
}

Model build_srgan_discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  if (cfg.relativistic)
    throw ConfigError("srgan discriminator is non-relativistic; clear the flag");
  Rng rng(seed);
  Model m;
  m.kind = ModelKind::srgan_disc;
  m.dcfg = cfg;
  m.init_seed = seed;
  m.net = std::make_unique<DiscriminatorNet>(cfg, rng);
  return m;
}

Model build_esrgan_discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  if (!cfg.relativistic)
    throw ConfigError("esrgan discriminator requires the relativistic flag");
  Rng rng(seed);
  Model m;
  m.kind = ModelKind::esrgan_disc;
  m.dcfg = cfg;
  m.init_seed = seed;
  m.net = std::make_unique<DiscriminatorNet>(cfg, rng);
  return m;
}

Model build_model(ModelKind kind, const GeneratorConfig& gcfg, const DiscriminatorConfig& dcfg,
                  std::uint64_t seed) {
  switch (kind) {
    case ModelKind::srgan_gen: return build_srgan_generator(gcfg, seed);
    case ModelKind::srgan_disc: return build_srgan_discriminator(dcfg, seed);
    case ModelKind::esrgan_gen: return build_esrgan_generator(gcfg, seed);
    case ModelKind::esrgan_disc: return build_esrgan_discriminator(dcfg, seed);
  }
  throw DomainError("unknown model kind");
}

std::vector<ImageTensor> forward(Model& m, const std::vector<ImageTensor>& batch,
                                 bool dropout_active, Rng* rng) {
  if (!m.is_generator()) throw ShapeError("forward: image output requires a generator");
  if (batch.empty()) throw ShapeError("forward: empty batch");
  ForwardCtx ctx;
  ctx.stochastic = dropout_active;
  ctx.rng = rng;
  Tensor y = m.forward_raw(to_tensor(batch), ctx);
  return to_images(clamp01(std::move(y)));
}

std::vector<double> forward_scores(Model& m, const std::vector<ImageTensor>& batch) {
  if (m.is_generator()) throw ShapeError("forward_scores: requires a discriminator");
  if (batch.empty()) throw ShapeError("forward_scores: empty batch");
  ForwardCtx ctx;
  Tensor y = m.forward_raw(to_tensor(batch), ctx);
  return std::vector<double>(y.v.begin(), y.v.end());
}

}  // namespace uqsr
