#include "uqsr/artifacts.hpp"

#include <cmath>
#include <fstream>

#include "uqsr/binio.hpp"
#include "uqsr/errors.hpp"

namespace uqsr {

namespace {

std::uint32_t mode_code(SigmaMode mode) { return mode == SigmaMode::std_of_mean ? 1 : 2; }

SigmaMode mode_from_code(std::uint32_t code) {
  if (code == 1) return SigmaMode::std_of_mean;
  if (code == 2) return SigmaMode::sample_std;
  throw FormatError("unknown sigma mode code in sidecar");
}

}  // namespace

void save_sigma_sidecar(const ImageTensor& sigma, SigmaMode mode, int m,
                        const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write sigma sidecar: " + path);
  write_u32(out, kSidecarMagic);
  write_u32(out, 1);
  write_u32(out, static_cast<std::uint32_t>(sigma.height));
  write_u32(out, static_cast<std::uint32_t>(sigma.width));
  write_u32(out, static_cast<std::uint32_t>(sigma.channels));
  write_u32(out, mode_code(mode));
  write_u32(out, static_cast<std::uint32_t>(m));
  write_u32(out, 0);
  for (double v : sigma.data) write_f32(out, static_cast<float>(v));
  if (!out) throw IoError("error writing sigma sidecar: " + path);
}

SigmaSidecar load_sigma_sidecar(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read sigma sidecar: " + path);
  if (read_u32(in) != kSidecarMagic) throw FormatError("not a sigma sidecar: " + path);
  if (read_u32(in) != 1) throw FormatError("unsupported sidecar version: " + path);
  const int h = static_cast<int>(read_u32(in));
  const int w = static_cast<int>(read_u32(in));
  const int c = static_cast<int>(read_u32(in));
  SigmaSidecar side;
  side.mode = mode_from_code(read_u32(in));
  side.m = static_cast<int>(read_u32(in));
  read_u32(in);  // reserved
  if (h < 1 || w < 1 || c < 1) throw FormatError("bad sidecar dimensions: " + path);
  side.sigma = ImageTensor(h, w, c);
  for (double& v : side.sigma.data) v = static_cast<double>(read_f32(in));
  return side;
}

ImageTensor render_overlay(const ImageTensor& sr, const ImageTensor& sigma) {
  if (sr.height != sigma.height || sr.width != sigma.width)
    throw ShapeError("render_overlay: dimension mismatch");
  if (sr.channels != 1 && sr.channels != 3)
    throw ShapeError("render_overlay: SR image must be grayscale or RGB");

  double smax = 0.0;
  for (double v : sigma.data) smax = std::max(smax, v);

  ImageTensor out(sr.height, sr.width, 3);
  for (int y = 0; y < sr.height; ++y)
    for (int x = 0; x < sr.width; ++x) {
      double s = 0.0;
      for (int c = 0; c < sigma.channels; ++c) s += sigma.at(y, x, c);
      s /= sigma.channels;
      const int idx =
          smax > 0.0 ? static_cast<int>(std::lround(255.0 * (s / smax))) : 0;
      const auto& rgb = kViridisRamp[static_cast<std::size_t>(std::min(std::max(idx, 0), 255))];
      for (int c = 0; c < 3; ++c) {
        const double base = sr.channels == 3 ? sr.at(y, x, c) : sr.at(y, x, 0);
        out.at(y, x, c) = 0.5 * base + 0.5 * (rgb[c] / 255.0);
      }
    }
  return out;
}

}  // namespace uqsr
