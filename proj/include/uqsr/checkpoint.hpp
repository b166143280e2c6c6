#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "uqsr/models.hpp"

namespace uqsr {

struct Provenance {
  std::string phase;  // "init", "psnr_pretrain", "adversarial"
  int epoch = 0;
  std::uint64_t seed = 0;
  std::uint64_t loss_digest = 0;  // FNV-1a over the f64 loss trace bytes
};

// In-memory image of the canonical checkpoint file. The parameter list keeps
// the network's fixed collection order, so save -> load -> save is
// byte-identical.
struct Checkpoint {
  std::uint32_t version = 1;
  ModelKind kind = ModelKind::srgan_gen;
  GeneratorConfig gcfg;
  DiscriminatorConfig dcfg;
  std::uint64_t init_seed = 0;
  std::vector<int> dropout_pos;
  Provenance prov;
  std::vector<std::pair<std::string, std::vector<double>>> params;
};

Checkpoint snapshot(const Model& m, const Provenance& prov);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Rebuilds the architecture from the stored config and overwrites its
// parameters with the stored blobs. Mismatched layouts fail loudly.
Model restore_model(const Checkpoint& ckpt);

std::uint64_t loss_trace_digest(const std::vector<double>& trace);

}  // namespace uqsr
