#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "support.hpp"
#include "uqsr/checkpoint.hpp"
#include "uqsr/config.hpp"
#include "uqsr/errors.hpp"
#include "uqsr/models.hpp"
#include "uqsr/rng.hpp"

using namespace uqsr;
using test_support::random_image;
using test_support::TempDir;

namespace {

Model perturbed_generator() {
  GeneratorConfig g;
  g.base_channels = 16;
  g.n_blocks = 2;
  g.rdb_per_rrdb = 2;
  g.convs_per_rdb = 3;
  g.growth_channels = 8;
  g.dropout_count = 1;
  Model m = build_esrgan_generator(g, 31);
  Rng rng(32);
  for (const ParamRef& p : m.params())
    for (double& v : *p.value) v += 0.01 * (rng.uniform() - 0.5);
  return m;
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE_BEGIN("checkpoint_config");

TEST_CASE("save then load then save is byte identical") {
  TempDir tmp;
  Model m = perturbed_generator();
  Provenance prov;
  prov.phase = "adversarial";
  prov.epoch = 7;
  prov.seed = 99;
  prov.loss_digest = loss_trace_digest({0.5, 0.25});

  const Checkpoint ckpt = snapshot(m, prov);
  const std::string p1 = tmp.file("a.ckpt");
  const std::string p2 = tmp.file("b.ckpt");
  save_checkpoint(ckpt, p1);
  const Checkpoint back = load_checkpoint(p1);
  save_checkpoint(back, p2);
  CHECK(slurp(p1) == slurp(p2));

  CHECK(back.kind == ModelKind::esrgan_gen);
  CHECK(back.gcfg.base_channels == 16);
  CHECK(back.gcfg.n_blocks == 2);
  CHECK(back.init_seed == 31);
  CHECK(back.dropout_pos == std::vector<int>{2});
  CHECK(back.prov.phase == "adversarial");
  CHECK(back.prov.epoch == 7);
  CHECK(back.prov.seed == 99);
  CHECK(back.prov.loss_digest == ckpt.prov.loss_digest);
}

TEST_CASE("restored models forward identically") {
  TempDir tmp;
  Model m = perturbed_generator();
  const std::string path = tmp.file("m.ckpt");
  save_checkpoint(snapshot(m, Provenance{"init", 0, 0, 0}), path);

  Model r = restore_model(load_checkpoint(path));
  Rng rng(33);
  const std::vector<ImageTensor> batch{random_image(8, 8, 3, rng)};
  CHECK(forward(r, batch, false)[0].data == forward(m, batch, false)[0].data);
}

TEST_CASE("restore rejects tampered parameter lists") {
  Model m = perturbed_generator();
  Checkpoint ckpt = snapshot(m, Provenance{"init", 0, 0, 0});

  Checkpoint renamed = ckpt;
  renamed.params[3].first += "_x";
  CHECK_THROWS_AS(restore_model(renamed), FormatError);

  Checkpoint resized = ckpt;
  resized.params[3].second.push_back(0.0);
  CHECK_THROWS_AS(restore_model(resized), FormatError);

  Checkpoint dropped = ckpt;
  dropped.params.pop_back();
  CHECK_THROWS_AS(restore_model(dropped), FormatError);
}

TEST_CASE("checkpoint file errors") {
  TempDir tmp;
  CHECK_THROWS_AS(load_checkpoint(tmp.file("absent.ckpt")), IoError);

  Model m = perturbed_generator();
  const std::string path = tmp.file("m.ckpt");
  save_checkpoint(snapshot(m, Provenance{"init", 0, 0, 0}), path);
  std::vector<char> bytes = slurp(path);
  bytes[0] = static_cast<char>(bytes[0] ^ 0x5a);
  const std::string bad = tmp.file("bad.ckpt");
  std::ofstream(bad, std::ios::binary).write(bytes.data(), bytes.size());
  CHECK_THROWS_AS(load_checkpoint(bad), FormatError);
}

TEST_CASE("loss trace digests are stable and order sensitive") {
  CHECK(loss_trace_digest({0.5, 0.25, -1.0}) == 0x843e0dde212df628ULL);
  CHECK(loss_trace_digest({}) == 0xcbf29ce484222325ULL);
  CHECK(loss_trace_digest({0.25, 0.5, -1.0}) != loss_trace_digest({0.5, 0.25, -1.0}));
}

TEST_CASE("config parsing accepts comments and trims whitespace") {
  const RunConfig cfg = RunConfig::from_string(
      "# run settings\n"
      "\n"
      "  train.epochs = 30  \n"
      "train.lr0 = 1e-4\n"
      "model.arch = esrgan\n"
      "eval.luminance_only = true\n"
      "train.milestones = 25, 50,100\n");
  CHECK(cfg.geti("train.epochs", 0) == 30);
  CHECK(cfg.getd("train.lr0", 0.0) == doctest::Approx(1e-4));
  CHECK(cfg.gets("model.arch", "") == "esrgan");
  CHECK(cfg.getb("eval.luminance_only", false));
  CHECK(cfg.geti_list("train.milestones") == std::vector<int>({25, 50, 100}));
  CHECK(cfg.geti("absent", 7) == 7);
  CHECK(cfg.getu("absent", 9) == 9);
  CHECK(cfg.geti_list("absent").empty());
}

TEST_CASE("config rejects duplicates and malformed lines") {
  CHECK_THROWS_AS(RunConfig::from_string("a = 1\na = 2\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_string("just a token\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_string(" = 3\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_file("/nonexistent/run.cfg"), IoError);
}

TEST_CASE("typed getters validate their formats") {
  const RunConfig cfg = RunConfig::from_string(
      "a = abc\n"
      "b = maybe\n"
      "c = 1,2,x\n"
      "s = 42\n");
  CHECK_THROWS_AS(cfg.geti("a", 0), ConfigError);
  CHECK_THROWS_AS(cfg.getd("a", 0.0), ConfigError);
  CHECK_THROWS_AS(cfg.getb("b", false), ConfigError);
  CHECK_THROWS_AS(cfg.getu("a", 0), ConfigError);
  CHECK_THROWS_AS(cfg.geti_list("c"), ConfigError);
  CHECK(cfg.getu("s", 0) == 42);
  CHECK(cfg.getu_list("s") == std::vector<std::uint64_t>{42});
}

TEST_CASE("unknown keys are rejected against the registry") {
  RunConfig cfg = RunConfig::from_string("train.epochs = 1\n");
  CHECK_NOTHROW(cfg.require_known(known_run_keys()));
  cfg.set("train.typo_key", "1");
  CHECK_THROWS_AS(cfg.require_known(known_run_keys()), ConfigError);
}

TEST_SUITE_END();
