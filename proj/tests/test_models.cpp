#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "support.hpp"
#include "uqsr/errors.hpp"
#include "uqsr/models.hpp"
#include "uqsr/rng.hpp"

using namespace uqsr;
using test_support::random_image;

namespace {

std::size_t conv_params(int in_ch, int out_ch, int k) {
  return static_cast<std::size_t>(out_ch) * in_ch * k * k + out_ch;
}

std::size_t rdb_params(const GeneratorConfig& g) {
  std::size_t total = 0;
  for (int k = 1; k <= g.convs_per_rdb; ++k) {
    const int in_ch = g.base_channels + (k - 1) * g.growth_channels;
    const int out_ch = k < g.convs_per_rdb ? g.growth_channels : g.base_channels;
    total += conv_params(in_ch, out_ch, 3);
  }
  return total;
}

std::size_t esrgan_gen_params(const GeneratorConfig& g, int stages) {
  std::size_t total = conv_params(3, g.base_channels, 3);
  total += static_cast<std::size_t>(g.n_blocks) * g.rdb_per_rrdb * rdb_params(g);
  total += conv_params(g.base_channels, g.base_channels, 3);
  total += static_cast<std::size_t>(stages) * conv_params(g.base_channels, 4 * g.base_channels, 3);
  total += conv_params(g.base_channels, g.base_channels, 3);
  total += conv_params(g.base_channels, 3, 3);
  return total;
}

std::size_t srgan_gen_params(const GeneratorConfig& g, int stages) {
  std::size_t total = conv_params(3, g.base_channels, 9) + 1;
  total += static_cast<std::size_t>(g.n_blocks) *
           (2 * conv_params(g.base_channels, g.base_channels, 3) + 1);
  total += conv_params(g.base_channels, g.base_channels, 3);
  total += static_cast<std::size_t>(stages) *
           (conv_params(g.base_channels, 4 * g.base_channels, 3) + 1);
  total += conv_params(g.base_channels, 3, 9);
  return total;
}

std::size_t disc_params(const DiscriminatorConfig& d) {
  std::size_t total = conv_params(3, d.base_channels, 3);
  int ch = d.base_channels;
  for (int s = 1; s <= d.n_stages; ++s) {
    const int next = d.base_channels * std::min(1 << s, 8);
    total += conv_params(ch, next, 3);
    ch = next;
  }
  return total + ch + 1;
}

std::vector<double> flatten_params(const Model& m) {
  std::vector<double> flat;
  for (const ParamRef& p : m.params())
    flat.insert(flat.end(), p.value->begin(), p.value->end());
  return flat;
}

GeneratorConfig tiny_esrgan() {
  GeneratorConfig g;
  g.base_channels = 16;
  g.n_blocks = 2;
  g.rdb_per_rrdb = 2;
  g.convs_per_rdb = 3;
  g.growth_channels = 8;
  return g;
}

}  // namespace

TEST_SUITE_BEGIN("models");

TEST_CASE("config validation rejects malformed settings") {
  GeneratorConfig g;
  g.scale = 3;
  CHECK_THROWS_AS(validate(g, true), ConfigError);
  g = GeneratorConfig{};
  g.dropout_count = g.n_blocks + 1;
  CHECK_THROWS_AS(validate(g, false), ConfigError);
  g = GeneratorConfig{};
  g.dropout_p = 1.0;
  CHECK_THROWS_AS(validate(g, true), ConfigError);
  g = GeneratorConfig{};
  g.convs_per_rdb = 1;
  CHECK_THROWS_AS(validate(g, true), ConfigError);
  CHECK_NOTHROW(validate(g, false));

  DiscriminatorConfig d;
  d.n_stages = 0;
  CHECK_THROWS_AS(validate(d), ConfigError);
}

TEST_CASE("discriminator flavor flags are enforced") {
  DiscriminatorConfig d;
  d.relativistic = true;
  CHECK_THROWS_AS(build_srgan_discriminator(d, 1), ConfigError);
  d.relativistic = false;
  CHECK_THROWS_AS(build_esrgan_discriminator(d, 1), ConfigError);
}

TEST_CASE("dropout positions spread evenly over the blocks") {
  CHECK(dropout_positions(16, 0).empty());
  CHECK(dropout_positions(16, 1) == std::vector<int>{16});
  CHECK(dropout_positions(16, 3) == std::vector<int>({5, 10, 16}));
  CHECK(dropout_positions(5, 5) == std::vector<int>({1, 2, 3, 4, 5}));

  GeneratorConfig g = tiny_esrgan();
  g.dropout_count = 2;
  const Model m = build_esrgan_generator(g, 3);
  CHECK(m.dropout_pos == std::vector<int>({1, 2}));
}

TEST_CASE("generators upscale 16x24 to 64x96") {
  GeneratorConfig g = tiny_esrgan();
  Rng rng(300);
  const std::vector<ImageTensor> batch{random_image(16, 24, 3, rng)};

  Model es = build_esrgan_generator(g, 7);
  const std::vector<ImageTensor> out = forward(es, batch, false);
  REQUIRE(out.size() == 1);
  CHECK(out[0].height == 64);
  CHECK(out[0].width == 96);
  CHECK(out[0].channels == 3);
  for (double v : out[0].data) CHECK((v >= 0.0 && v <= 1.0));

  GeneratorConfig sg;
  sg.base_channels = 16;
  sg.n_blocks = 2;
  Model sr = build_srgan_generator(sg, 7);
  const std::vector<ImageTensor> out2 = forward(sr, batch, false);
  CHECK(out2[0].height == 64);
  CHECK(out2[0].width == 96);
}

TEST_CASE("construction is deterministic in config and seed") {
  const GeneratorConfig g = tiny_esrgan();
  const Model a = build_esrgan_generator(g, 11);
  const Model b = build_esrgan_generator(g, 11);
  const Model c = build_esrgan_generator(g, 12);
  CHECK(flatten_params(a) == flatten_params(b));
  CHECK(flatten_params(a) != flatten_params(c));
}

TEST_CASE("dense block convolutions see the accumulated growth channels") {
  GeneratorConfig g = tiny_esrgan();
  g.convs_per_rdb = 4;
  const Model m = build_esrgan_generator(g, 5);
  std::map<std::string, std::size_t> sizes;
  for (const ParamRef& p : m.params()) sizes[p.name] = p.value->size();

  CHECK(sizes.at("rrdb1.rdb1.conv1.weight") == 8u * 16u * 9u);
  CHECK(sizes.at("rrdb1.rdb1.conv2.weight") == 8u * 24u * 9u);
  CHECK(sizes.at("rrdb1.rdb1.conv3.weight") == 8u * 32u * 9u);
  CHECK(sizes.at("rrdb1.rdb1.conv4.weight") == 16u * 40u * 9u);
  CHECK(sizes.at("rrdb2.rdb2.conv4.bias") == 16u);
}

TEST_CASE("zero residual scale makes the block chain transparent") {
  GeneratorConfig g = tiny_esrgan();
  g.residual_scale = 0.0;
  Model m = build_esrgan_generator(g, 21);
  Rng rng(301);
  const std::vector<ImageTensor> batch{random_image(8, 8, 3, rng)};
  const std::vector<ImageTensor> before = forward(m, batch, false);

  for (const ParamRef& p : m.params())
    if (p.name.rfind("rrdb", 0) == 0)
      for (double& v : *p.value) v += 0.37;
  const std::vector<ImageTensor> after = forward(m, batch, false);
  CHECK(after[0].data == before[0].data);

  GeneratorConfig g2 = tiny_esrgan();
  Model m2 = build_esrgan_generator(g2, 21);
  const std::vector<ImageTensor> ref = forward(m2, batch, false);
  for (const ParamRef& p : m2.params())
    if (p.name.rfind("rrdb", 0) == 0)
      for (double& v : *p.value) v += 0.37;
  const std::vector<ImageTensor> moved = forward(m2, batch, false);
  CHECK(moved[0].data != ref[0].data);
}

TEST_CASE("parameter counts match the closed form") {
  GeneratorConfig g = tiny_esrgan();
  CHECK(build_esrgan_generator(g, 1).param_count() == esrgan_gen_params(g, 2));

  GeneratorConfig g8 = tiny_esrgan();
  g8.scale = 8;
  CHECK(build_esrgan_generator(g8, 1).param_count() == esrgan_gen_params(g8, 3));

  GeneratorConfig sg;
  sg.base_channels = 16;
  sg.n_blocks = 3;
  CHECK(build_srgan_generator(sg, 1).param_count() == srgan_gen_params(sg, 2));

  DiscriminatorConfig d;
  d.base_channels = 16;
  d.n_stages = 2;
  CHECK(build_srgan_discriminator(d, 1).param_count() == disc_params(d));
  DiscriminatorConfig d4 = d;
  d4.n_stages = 4;
  CHECK(build_srgan_discriminator(d4, 1).param_count() == disc_params(d4));
  CHECK(disc_params(d4) > disc_params(d));
}

TEST_CASE("discriminators score batches") {
  Rng rng(302);
  std::vector<ImageTensor> batch;
  for (int i = 0; i < 8; ++i) batch.push_back(random_image(32, 32, 3, rng));

  DiscriminatorConfig d;
  d.base_channels = 8;
  Model disc = build_srgan_discriminator(d, 9);
  const std::vector<double> probs = forward_scores(disc, batch);
  REQUIRE(probs.size() == 8);
  for (double p : probs) CHECK((p > 0.0 && p < 1.0));

  DiscriminatorConfig rd = d;
  rd.relativistic = true;
  Model rdisc = build_esrgan_discriminator(rd, 9);
  const std::vector<double> logits = forward_scores(rdisc, batch);
  REQUIRE(logits.size() == 8);
  for (double v : logits) CHECK(std::isfinite(v));

  CHECK_THROWS_AS(forward_scores(disc, {}), ShapeError);
  GeneratorConfig g = tiny_esrgan();
  Model gen = build_esrgan_generator(g, 1);
  CHECK_THROWS_AS(forward_scores(gen, batch), ShapeError);
  CHECK_THROWS_AS(forward(disc, batch, false), ShapeError);
}

TEST_CASE("inactive dropout leaves the forward pass unchanged") {
  GeneratorConfig g = tiny_esrgan();
  g.dropout_count = 2;
  g.dropout_p = 0.0;
  Model m = build_esrgan_generator(g, 13);
  Rng rng(303), drop_rng(17);
  const std::vector<ImageTensor> batch{random_image(8, 8, 3, rng)};
  const std::vector<ImageTensor> det = forward(m, batch, false);
  const std::vector<ImageTensor> sto = forward(m, batch, true, &drop_rng);
  CHECK(det[0].data == sto[0].data);

  GeneratorConfig live = g;
  live.dropout_p = 0.3;
  Model lm = build_esrgan_generator(live, 13);
  Rng ra(17);
  const std::vector<ImageTensor> base = forward(lm, batch, false);
  const std::vector<ImageTensor> noisy = forward(lm, batch, true, &ra);
  CHECK(noisy[0].data != base[0].data);
}

TEST_CASE("kind names round trip") {
  for (ModelKind k : {ModelKind::srgan_gen, ModelKind::srgan_disc, ModelKind::esrgan_gen,
                      ModelKind::esrgan_disc})
    CHECK(kind_from_name(kind_name(k)) == k);
  CHECK_THROWS_AS(kind_from_name("vae"), FormatError);
}

TEST_SUITE_END();
