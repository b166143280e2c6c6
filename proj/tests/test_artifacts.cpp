#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "support.hpp"
#include "uqsr/artifacts.hpp"
#include "uqsr/errors.hpp"
#include "uqsr/rng.hpp"

using namespace uqsr;
using test_support::random_image;
using test_support::TempDir;

namespace {

std::vector<unsigned char> slurp_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>());
}

void dump_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::uint32_t u32_at(const std::vector<unsigned char>& bytes, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[off + i]) << (8 * i);
  return v;
}

// Quantize to float32 so the f32 sidecar payload round trips bit-exactly.
ImageTensor f32_image(int h, int w, int c, std::uint64_t seed) {
  Rng rng(seed);
  ImageTensor img = random_image(h, w, c, rng);
  for (double& v : img.data) v = static_cast<double>(static_cast<float>(v));
  return img;
}

}  // namespace

TEST_SUITE_BEGIN("artifacts");

TEST_CASE("sigma sidecar round trips bit exactly") {
  TempDir tmp;
  const ImageTensor sigma = f32_image(6, 5, 3, 800);
  const std::string path = tmp.file("map.sigma");
  save_sigma_sidecar(sigma, SigmaMode::sample_std, 7, path);

  const SigmaSidecar side = load_sigma_sidecar(path);
  CHECK(side.mode == SigmaMode::sample_std);
  CHECK(side.m == 7);
  REQUIRE(side.sigma.height == 6);
  REQUIRE(side.sigma.width == 5);
  REQUIRE(side.sigma.channels == 3);
  CHECK(side.sigma.data == sigma.data);

  const std::vector<unsigned char> bytes = slurp_bytes(path);
  CHECK(bytes.size() == 32 + 4u * 6 * 5 * 3);
}

TEST_CASE("sigma sidecar header layout is frozen") {
  TempDir tmp;
  const std::string path = tmp.file("hdr.sigma");
  save_sigma_sidecar(f32_image(2, 3, 1, 801), SigmaMode::std_of_mean, 10, path);

  const std::vector<unsigned char> bytes = slurp_bytes(path);
  CHECK(bytes[0] == 'U');
  CHECK(bytes[1] == 'Q');
  CHECK(bytes[2] == 'S');
  CHECK(bytes[3] == 'R');
  CHECK(u32_at(bytes, 0) == kSidecarMagic);
  CHECK(u32_at(bytes, 4) == 1);
  CHECK(u32_at(bytes, 8) == 2);
  CHECK(u32_at(bytes, 12) == 3);
  CHECK(u32_at(bytes, 16) == 1);
  CHECK(u32_at(bytes, 20) == 1);
  CHECK(u32_at(bytes, 24) == 10);
  CHECK(u32_at(bytes, 28) == 0);

  save_sigma_sidecar(f32_image(2, 3, 1, 801), SigmaMode::sample_std, 4, tmp.file("s2.sigma"));
  CHECK(u32_at(slurp_bytes(tmp.file("s2.sigma")), 20) == 2);
}

TEST_CASE("sigma sidecar rejects corrupt files") {
  TempDir tmp;
  const std::string path = tmp.file("ok.sigma");
  save_sigma_sidecar(f32_image(4, 4, 1, 802), SigmaMode::std_of_mean, 3, path);
  const std::vector<unsigned char> good = slurp_bytes(path);

  std::vector<unsigned char> bad = good;
  bad[0] ^= 0xff;
  dump_bytes(tmp.file("magic.sigma"), bad);
  CHECK_THROWS_AS(load_sigma_sidecar(tmp.file("magic.sigma")), FormatError);

  bad = good;
  bad[4] = 9;
  dump_bytes(tmp.file("version.sigma"), bad);
  CHECK_THROWS_AS(load_sigma_sidecar(tmp.file("version.sigma")), FormatError);

  bad = good;
  bad[20] = 3;
  dump_bytes(tmp.file("mode.sigma"), bad);
  CHECK_THROWS_AS(load_sigma_sidecar(tmp.file("mode.sigma")), FormatError);

  bad = good;
  bad[8] = 0;
  dump_bytes(tmp.file("dims.sigma"), bad);
  CHECK_THROWS_AS(load_sigma_sidecar(tmp.file("dims.sigma")), FormatError);

  bad = good;
  bad.resize(good.size() - 6);
  dump_bytes(tmp.file("short.sigma"), bad);
  CHECK_THROWS_AS(load_sigma_sidecar(tmp.file("short.sigma")), IoError);

  CHECK_THROWS_AS(load_sigma_sidecar(tmp.file("absent.sigma")), IoError);
}

TEST_CASE("overlay of a zero sigma map blends the lowest ramp entry") {
  Rng rng(803);
  const ImageTensor sr = random_image(6, 7, 3, rng);
  ImageTensor sigma(6, 7, 1);
  const ImageTensor out = render_overlay(sr, sigma);
  REQUIRE(out.channels == 3);
  REQUIRE(out.height == 6);
  REQUIRE(out.width == 7);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 7; ++x)
      for (int c = 0; c < 3; ++c)
        CHECK(out.at(y, x, c) == 0.5 * sr.at(y, x, c) + 0.5 * (kViridisRamp[0][c] / 255.0));
}

TEST_CASE("overlay maps the hottest pixel to the top ramp entry") {
  Rng rng(804);
  const ImageTensor sr = random_image(5, 5, 3, rng);
  ImageTensor sigma(5, 5, 1);
  for (double& v : sigma.data) v = 0.01;
  sigma.at(2, 3, 0) = 1.0;

  const ImageTensor out = render_overlay(sr, sigma);
  const int cold_idx = static_cast<int>(std::lround(255.0 * 0.01));
  for (int c = 0; c < 3; ++c) {
    CHECK(out.at(2, 3, c) == 0.5 * sr.at(2, 3, c) + 0.5 * (kViridisRamp[255][c] / 255.0));
    CHECK(out.at(0, 0, c) == 0.5 * sr.at(0, 0, c) + 0.5 * (kViridisRamp[cold_idx][c] / 255.0));
  }
}

TEST_CASE("overlay averages multichannel sigma and accepts grayscale sr") {
  Rng rng(805);
  const ImageTensor gray = random_image(4, 4, 1, rng);
  ImageTensor sigma(4, 4, 3);
  for (double& v : sigma.data) v = 0.5;
  sigma.at(1, 1, 0) = 0.2;
  sigma.at(1, 1, 1) = 0.4;
  sigma.at(1, 1, 2) = 0.9;

  const ImageTensor out = render_overlay(gray, sigma);
  REQUIRE(out.channels == 3);
  double smax = 0.0;
  for (double v : sigma.data) smax = std::max(smax, v);
  const double s = (0.2 + 0.4 + 0.9) / 3;
  const int idx = static_cast<int>(std::lround(255.0 * (s / smax)));
  for (int c = 0; c < 3; ++c)
    CHECK(out.at(1, 1, c) == 0.5 * gray.at(1, 1, 0) + 0.5 * (kViridisRamp[idx][c] / 255.0));
}

TEST_CASE("overlay rejects mismatched shapes") {
  Rng rng(806);
  const ImageTensor sr = random_image(8, 8, 3, rng);
  CHECK_THROWS_AS(render_overlay(sr, ImageTensor(4, 4, 1)), ShapeError);
  CHECK_THROWS_AS(render_overlay(ImageTensor(8, 8, 2), ImageTensor(8, 8, 1)), ShapeError);
}

TEST_CASE("color ramp endpoints are dark violet and yellow") {
  CHECK(kViridisRamp[0][2] > kViridisRamp[0][0]);
  CHECK(kViridisRamp[0][1] < 40);
  CHECK(kViridisRamp[255][0] > 200);
  CHECK(kViridisRamp[255][1] > 200);
  CHECK(kViridisRamp[255][2] < 100);
}

TEST_SUITE_END();
