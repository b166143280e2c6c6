#pragma once

#include <array>
#include <string>

#include "uqsr/image.hpp"
#include "uqsr/uncertainty.hpp"

namespace uqsr {

// Raw sigma sidecar: eight little-endian u32 header values (magic 'UQSR',
// version, H, W, C, mode, M, reserved 0) followed by H*W*C float32 samples in
// row-major interleaved order. Bit-exact contract for cross-language tooling.
inline constexpr std::uint32_t kSidecarMagic = 0x52535155;  // "UQSR"

struct SigmaSidecar {
  ImageTensor sigma;
  SigmaMode mode = SigmaMode::std_of_mean;
  int m = 1;
};

void save_sigma_sidecar(const ImageTensor& sigma, SigmaMode mode, int m,
                        const std::string& path);
SigmaSidecar load_sigma_sidecar(const std::string& path);

// Fixed 256-entry perceptually-uniform color ramp (dark violet to yellow),
// shipped as a table so renders are byte-reproducible.
extern const std::array<std::array<unsigned char, 3>, 256> kViridisRamp;

// Heat-colormapped sigma alpha-blended (alpha = 0.5) over the SR image.
// Multichannel sigma collapses to its per-pixel channel mean; the ramp is
// indexed by sigma / max(sigma), with an all-zero map using index 0.
ImageTensor render_overlay(const ImageTensor& sr, const ImageTensor& sigma);

}  // namespace uqsr
