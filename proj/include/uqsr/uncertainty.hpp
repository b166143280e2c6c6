#pragma once

#include <cstdint>
#include <vector>

#include "uqsr/image.hpp"
#include "uqsr/models.hpp"

namespace uqsr {

enum class StackSource { mcd, ensemble };

// M generator outputs for one input, clamped to [0,1] before aggregation.
struct SampleStack {
  std::vector<ImageTensor> samples;
  StackSource source = StackSource::mcd;
  std::vector<std::uint64_t> seed_record;
};

enum class SigmaMode {
  std_of_mean,  // sqrt((1/M^2) * sum (x - mean)^2): std of the mean estimate
  sample_std,   // sqrt((1/M)   * sum (x - mean)^2)
};

struct UncertaintyMap {
  ImageTensor sigma;
  double sigma_mean_scalar = 0.0;  // mean over all sigma entries
  SigmaMode mode = SigmaMode::std_of_mean;
};

// M stochastic forwards with dropout active; sample m runs under sub-seed
// mix_seed(seed, m), m counted from 0.
SampleStack mc_dropout_sample(Model& gen, const ImageTensor& lr, int m, std::uint64_t seed);

// One deterministic forward per member (dropout inactive).
SampleStack ensemble_sample(std::vector<Model>& members, const ImageTensor& lr);

ImageTensor aggregate_mean(const SampleStack& stack);
UncertaintyMap aggregate_std(const SampleStack& stack, SigmaMode mode);

}  // namespace uqsr
