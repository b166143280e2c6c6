#include "uqsr/uncertainty.hpp"

#include <cmath>

#include "uqsr/errors.hpp"

namespace uqsr {

SampleStack mc_dropout_sample(Model& gen, const ImageTensor& lr, int m, std::uint64_t seed) {
  if (m < 1) throw ConfigError("mc_dropout_sample needs at least one sample");
  if (!gen.is_generator()) throw ConfigError("mc_dropout_sample requires a generator");
  SampleStack stack;
  stack.source = StackSource::mcd;
  for (int k = 0; k < m; ++k) {
    const std::uint64_t sub = mix_seed(seed, static_cast<std::uint64_t>(k));
    Rng rng(sub);
    stack.samples.push_back(forward(gen, {lr}, true, &rng).front());
    stack.seed_record.push_back(sub);
  }
  return stack;
}

SampleStack ensemble_sample(std::vector<Model>& members, const ImageTensor& lr) {
  if (members.empty()) throw ConfigError("ensemble_sample needs at least one member");
  SampleStack stack;
  stack.source = StackSource::ensemble;
  for (Model& m : members) {
    ImageTensor sr = forward(m, {lr}, false).front();
    if (!stack.samples.empty() && !sr.same_shape(stack.samples.front()))
      throw ShapeError("ensemble members produced mismatched output dims");
    stack.samples.push_back(std::move(sr));
    stack.seed_record.push_back(m.init_seed);
  }
  return stack;
}

ImageTensor aggregate_mean(const SampleStack& stack) {
  if (stack.samples.empty()) throw DomainError("empty sample stack");
  const ImageTensor& first = stack.samples.front();
  ImageTensor mean(first.height, first.width, first.channels);
  const double inv_m = 1.0 / static_cast<double>(stack.samples.size());
  for (const ImageTensor& s : stack.samples) {
    if (!s.same_shape(first)) throw ShapeError("sample stack has mismatched dims");
    for (std::size_t i = 0; i < mean.data.size(); ++i) mean.data[i] += s.data[i];
  }
  for (double& v : mean.data) v *= inv_m;
  return mean;
}

UncertaintyMap aggregate_std(const SampleStack& stack, SigmaMode mode) {
  const ImageTensor mean = aggregate_mean(stack);
  const double m = static_cast<double>(stack.samples.size());
  const double factor = mode == SigmaMode::std_of_mean ? 1.0 / (m * m) : 1.0 / m;

  UncertaintyMap umap;
  umap.mode = mode;
  umap.sigma = ImageTensor(mean.height, mean.width, mean.channels);
  const ImageTensor& first = stack.samples.front();
  double acc = 0.0;
  for (std::size_t i = 0; i < mean.data.size(); ++i) {
    // Bitwise-equal samples short-circuit to exact zero; the rounded mean
    // would otherwise leave ~1e-17 residue on constant stacks.
    bool constant = true;
    double ssq = 0.0;
    for (const ImageTensor& s : stack.samples) {
      constant = constant && s.data[i] == first.data[i];
      const double d = s.data[i] - mean.data[i];
      ssq += d * d;
    }
    const double v = constant ? 0.0 : std::sqrt(factor * ssq);
    umap.sigma.data[i] = v;
    acc += v;
  }
  umap.sigma_mean_scalar = acc / static_cast<double>(umap.sigma.data.size());
  return umap;
}

}  // namespace uqsr
