#include "uqsr/losses.hpp"

#include <algorithm>
#include <cmath>

#include "uqsr/binio.hpp"
#include "uqsr/errors.hpp"

namespace uqsr {

namespace {

constexpr char kFxMagic[] = "UQSRFEXT";

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double softplus(double x) { return std::log1p(std::exp(-std::fabs(x))) + std::max(x, 0.0); }

double clamp_prob(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("probability outside [0,1]");
  return std::min(std::max(p, kProbEps), 1.0 - kProbEps);
}

void check_logits(const std::vector<double>& v) {
  if (v.empty()) throw DomainError("empty logit batch");
  for (double x : v)
    if (!std::isfinite(x)) throw DomainError("non-finite logit");
}

}  // namespace

// ---------------------------------------------------------------------------
// FeatureExtractor

FeatureExtractor::FeatureExtractor(int layer_tag, std::uint64_t seed)
    : layer_tag_(layer_tag), seed_(seed) {
  if (layer_tag < 0) throw ConfigError("layer_tag must be non-negative");
  Rng rng(seed);
  build(rng);
}

void FeatureExtractor::build(Rng& rng) {
  int ch = 3;
  for (int s = 1; s <= layer_tag_; ++s) {
    const int next = std::min(16 << (s - 1), 64);
    convs_.emplace_back(ch, next, 3);
    convs_.back().init_kaiming(rng);
    acts_.emplace_back(0.2);
    pools_.emplace_back(2);
    ch = next;
  }
}

Tensor FeatureExtractor::forward(const Tensor& x, bool store) {
  ForwardCtx ctx;
  ctx.store = store;
  Tensor t = x;
  for (std::size_t s = 0; s < convs_.size(); ++s)
    t = pools_[s].forward(acts_[s].forward(convs_[s].forward(t, ctx), ctx), ctx);
  return t;
}

Tensor FeatureExtractor::backward(const Tensor& dfeat) {
  Tensor d = dfeat;
  for (std::size_t s = convs_.size(); s-- > 0;)
    d = convs_[s].backward(acts_[s].backward(pools_[s].backward(d)));
  return d;
}

void FeatureExtractor::save(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write extractor weights: " + path);
  out.write(kFxMagic, 8);
  write_u32(out, 1);
  write_u32(out, static_cast<std::uint32_t>(layer_tag_));
  write_u64(out, seed_);
  std::vector<ParamRef> params;
  for (std::size_t s = 0; s < convs_.size(); ++s)
    convs_[s].collect_params("stage" + std::to_string(s + 1), params);
  write_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const ParamRef& p : params) {
    write_str(out, p.name);
    write_u64(out, p.value->size());
    for (double v : *p.value) write_f64(out, v);
  }
  if (!out) throw IoError("error writing extractor weights: " + path);
}

FeatureExtractor FeatureExtractor::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read extractor weights: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != kFxMagic)
    throw FormatError("not an extractor weights file: " + path);
  const std::uint32_t version = read_u32(in);
  if (version != 1) throw FormatError("unsupported extractor format version");
  const int layer_tag = static_cast<int>(read_u32(in));
  const std::uint64_t seed = read_u64(in);

  FeatureExtractor fx(layer_tag, seed);
  fx.provenance_ = FxProvenance::pretrained;
  std::vector<ParamRef> params;
  for (std::size_t s = 0; s < fx.convs_.size(); ++s)
    fx.convs_[s].collect_params("stage" + std::to_string(s + 1), params);
  const std::uint32_t n = read_u32(in);
  if (n != params.size()) throw FormatError("extractor parameter count mismatch: " + path);
  for (ParamRef& p : params) {
    const std::string name = read_str(in);
    const std::uint64_t count = read_u64(in);
    if (name != p.name || count != p.value->size())
      throw FormatError("extractor parameter layout mismatch: " + path);
    for (double& v : *p.value) v = read_f64(in);
  }
  return fx;
}

// ---------------------------------------------------------------------------
// Losses

void validate(const LossWeights& w) {
  if (!(w.lambda_cont >= 0.0) || !(w.lambda_adv >= 0.0) || !(w.lambda_perc >= 0.0))
    throw ConfigError("loss weights must be non-negative");
  if (w.lambda_cont == 0.0 && w.lambda_adv == 0.0 && w.lambda_perc == 0.0)
    throw ConfigError("at least one loss weight must be positive");
}

double content_l1(const Tensor& sr, const Tensor& hr, Tensor* dsr) {
  if (!sr.same_shape(hr)) throw ShapeError("content_l1: shape mismatch");
  const double inv_n = 1.0 / static_cast<double>(sr.size());
  double acc = 0.0;
  if (dsr) *dsr = Tensor(sr.n, sr.c, sr.h, sr.w);
  for (std::size_t i = 0; i < sr.v.size(); ++i) {
    const double d = sr.v[i] - hr.v[i];
    acc += std::fabs(d);
    if (dsr) dsr->v[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * inv_n;
  }
  return acc * inv_n;
}

double perceptual(const Tensor& sr, const Tensor& hr, FeatureExtractor& fx, PercNorm norm,
                  Tensor* dsr) {
  if (!sr.same_shape(hr)) throw ShapeError("perceptual: shape mismatch");
  Tensor f_sr = fx.forward(sr, dsr != nullptr);
  Tensor f_hr = fx.forward(hr, false);
  const double inv_n = 1.0 / static_cast<double>(f_sr.size());
  double acc = 0.0;
  Tensor dfeat;
  if (dsr) dfeat = Tensor(f_sr.n, f_sr.c, f_sr.h, f_sr.w);
  for (std::size_t i = 0; i < f_sr.v.size(); ++i) {
    const double d = f_sr.v[i] - f_hr.v[i];
    if (norm == PercNorm::l2) {
      acc += d * d;
      if (dsr) dfeat.v[i] = 2.0 * d * inv_n;
    } else {
      acc += std::fabs(d);
      if (dsr) dfeat.v[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * inv_n;
    }
  }
  if (dsr) *dsr = fx.backward(dfeat);
  return acc * inv_n;
}

double srgan_adv(const std::vector<double>& d_prob_sr, std::vector<double>* grad) {
  if (d_prob_sr.empty()) throw DomainError("empty probability batch");
  const double inv_n = 1.0 / static_cast<double>(d_prob_sr.size());
  if (grad) grad->assign(d_prob_sr.size(), 0.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < d_prob_sr.size(); ++i) {
    const double p = clamp_prob(d_prob_sr[i]);
    acc += -std::log(p);
    if (grad && p == d_prob_sr[i]) (*grad)[i] = -inv_n / p;
  }
  return acc * inv_n;
}

double srgan_generator_loss(const Tensor& sr, const Tensor& hr,
                            const std::vector<double>& d_prob_sr, FeatureExtractor& fx,
                            Tensor* dsr, std::vector<double>* d_prob_grad) {
  const double perc = perceptual(sr, hr, fx, PercNorm::l2, dsr);
  const double adv = srgan_adv(d_prob_sr, d_prob_grad);
  if (d_prob_grad)
    for (double& g : *d_prob_grad) g *= 1e-3;
  return perc + 1e-3 * adv;
}

double gan_discriminator_loss(const std::vector<double>& d_prob_real,
                              const std::vector<double>& d_prob_fake,
                              std::vector<double>* d_real_grad,
                              std::vector<double>* d_fake_grad) {
  if (d_prob_real.empty() || d_prob_fake.empty()) throw DomainError("empty probability batch");
  const double inv_n = 1.0 / static_cast<double>(d_prob_real.size());
  const double inv_m = 1.0 / static_cast<double>(d_prob_fake.size());
  if (d_real_grad) d_real_grad->assign(d_prob_real.size(), 0.0);
  if (d_fake_grad) d_fake_grad->assign(d_prob_fake.size(), 0.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < d_prob_real.size(); ++i) {
    const double p = clamp_prob(d_prob_real[i]);
    acc += -std::log(p) * inv_n;
    if (d_real_grad && p == d_prob_real[i]) (*d_real_grad)[i] = -inv_n / p;
  }
  for (std::size_t j = 0; j < d_prob_fake.size(); ++j) {
    const double p = clamp_prob(d_prob_fake[j]);
    acc += -std::log(1.0 - p) * inv_m;
    if (d_fake_grad && p == d_prob_fake[j]) (*d_fake_grad)[j] = inv_m / (1.0 - p);
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Relativistic-average terms
//
// With a_i = real_i - mean(fake) and b_j = fake_j - mean(real):
//   -log D_ra(real, fake)       = softplus(-a_i)
//   -log(1 - D_ra(fake, real))  = softplus(b_j)
//   -log(1 - D_ra(real, fake))  = softplus(a_i)
//   -log D_ra(fake, real)       = softplus(-b_j)
// Each term is clamped to the epsilon-probability bounds; clamped terms
// contribute zero gradient.

namespace {

struct RaganTermSums {
  double total = 0.0;
  std::vector<double> sig;   // sigmoid of the shifted logit
  std::vector<double> mask;  // 1 when inside the clamp bounds
};

RaganTermSums ragan_terms(const std::vector<double>& shifted, bool negate) {
  const double lo = -std::log1p(-kProbEps);
  const double hi = -std::log(kProbEps);
  RaganTermSums s;
  s.sig.resize(shifted.size());
  s.mask.resize(shifted.size());
  for (std::size_t i = 0; i < shifted.size(); ++i) {
    const double t = softplus(negate ? -shifted[i] : shifted[i]);
    const double clamped = std::min(std::max(t, lo), hi);
    s.total += clamped;
    s.sig[i] = sigmoid(shifted[i]);
    s.mask[i] = (t >= lo && t <= hi) ? 1.0 : 0.0;
  }
  s.total /= static_cast<double>(shifted.size());
  return s;
}

std::vector<double> shift_by_mean(const std::vector<double>& v, const std::vector<double>& other) {
  double mean = 0.0;
  for (double x : other) mean += x;
  mean /= static_cast<double>(other.size());
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - mean;
  return out;
}

}  // namespace

double ragan_disc_loss(const std::vector<double>& logits_real,
                       const std::vector<double>& logits_fake, std::vector<double>* d_real_grad,
                       std::vector<double>* d_fake_grad) {
  check_logits(logits_real);
  check_logits(logits_fake);
  const std::vector<double> a = shift_by_mean(logits_real, logits_fake);
  const std::vector<double> b = shift_by_mean(logits_fake, logits_real);
  const RaganTermSums ta = ragan_terms(a, true);   // softplus(-a_i)
  const RaganTermSums tb = ragan_terms(b, false);  // softplus(b_j)

  if (d_real_grad || d_fake_grad) {
    const double n = static_cast<double>(a.size());
    const double m = static_cast<double>(b.size());
    double mean_sig_b = 0.0, mean_one_minus_sig_a = 0.0;
    for (std::size_t j = 0; j < b.size(); ++j) mean_sig_b += tb.mask[j] * tb.sig[j];
    mean_sig_b /= m;
    for (std::size_t i = 0; i < a.size(); ++i)
      mean_one_minus_sig_a += ta.mask[i] * (1.0 - ta.sig[i]);
    mean_one_minus_sig_a /= n;
    if (d_real_grad) {
      d_real_grad->resize(a.size());
      for (std::size_t i = 0; i < a.size(); ++i)
        (*d_real_grad)[i] = ta.mask[i] * (ta.sig[i] - 1.0) / n - mean_sig_b / n;
    }
    if (d_fake_grad) {
      d_fake_grad->resize(b.size());
      for (std::size_t j = 0; j < b.size(); ++j)
        (*d_fake_grad)[j] = tb.mask[j] * tb.sig[j] / m + mean_one_minus_sig_a / m;
    }
  }
  return ta.total + tb.total;
}

double ragan_gen_loss(const std::vector<double>& logits_real,
                      const std::vector<double>& logits_fake, std::vector<double>* d_real_grad,
                      std::vector<double>* d_fake_grad) {
  check_logits(logits_real);
  check_logits(logits_fake);
  const std::vector<double> a = shift_by_mean(logits_real, logits_fake);
  const std::vector<double> b = shift_by_mean(logits_fake, logits_real);
  const RaganTermSums ta = ragan_terms(a, false);  // softplus(a_i)
  const RaganTermSums tb = ragan_terms(b, true);   // softplus(-b_j)

  if (d_real_grad || d_fake_grad) {
    const double n = static_cast<double>(a.size());
    const double m = static_cast<double>(b.size());
    double mean_one_minus_sig_b = 0.0, mean_sig_a = 0.0;
    for (std::size_t j = 0; j < b.size(); ++j)
      mean_one_minus_sig_b += tb.mask[j] * (1.0 - tb.sig[j]);
    mean_one_minus_sig_b /= m;
    for (std::size_t i = 0; i < a.size(); ++i) mean_sig_a += ta.mask[i] * ta.sig[i];
    mean_sig_a /= n;
    if (d_real_grad) {
      d_real_grad->resize(a.size());
      for (std::size_t i = 0; i < a.size(); ++i)
        (*d_real_grad)[i] = ta.mask[i] * ta.sig[i] / n + mean_one_minus_sig_b / n;
    }
    if (d_fake_grad) {
      d_fake_grad->resize(b.size());
      for (std::size_t j = 0; j < b.size(); ++j)
        (*d_fake_grad)[j] = tb.mask[j] * (tb.sig[j] - 1.0) / m - mean_sig_a / m;
    }
  }
  return ta.total + tb.total;
}

RaganPair ragan_losses(const std::vector<double>& logits_real,
                       const std::vector<double>& logits_fake) {
  RaganPair pair;
  pair.disc = ragan_disc_loss(logits_real, logits_fake);
  pair.gen_adv = ragan_gen_loss(logits_real, logits_fake);
  return pair;
}

double esrgan_generator_loss(const Tensor& sr, const Tensor& hr,
                             const std::vector<double>& logits_real,
                             const std::vector<double>& logits_fake, FeatureExtractor& fx,
                             const LossWeights& w, Tensor* dsr,
                             std::vector<double>* d_real_grad, std::vector<double>* d_fake_grad) {
  validate(w);
  Tensor d_perc, d_cont;
  const double perc = perceptual(sr, hr, fx, PercNorm::l1, dsr ? &d_perc : nullptr);
  const double cont = content_l1(sr, hr, dsr ? &d_cont : nullptr);
  const double adv = ragan_gen_loss(logits_real, logits_fake, d_real_grad, d_fake_grad);
  if (dsr) {
    *dsr = Tensor(sr.n, sr.c, sr.h, sr.w);
    for (std::size_t i = 0; i < dsr->v.size(); ++i)
      dsr->v[i] = w.lambda_perc * d_perc.v[i] + w.lambda_cont * d_cont.v[i];
  }
  if (d_real_grad)
    for (double& g : *d_real_grad) g *= w.lambda_adv;
  if (d_fake_grad)
    for (double& g : *d_fake_grad) g *= w.lambda_adv;
  return w.lambda_perc * perc + w.lambda_adv * adv + w.lambda_cont * cont;
}

}  // namespace uqsr
