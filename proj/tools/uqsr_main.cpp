#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "uqsr/artifacts.hpp"
#include "uqsr/checkpoint.hpp"
#include "uqsr/config.hpp"
#include "uqsr/errors.hpp"
#include "uqsr/evaluation.hpp"
#include "uqsr/imaging.hpp"
#include "uqsr/models.hpp"
#include "uqsr/rng.hpp"
#include "uqsr/training.hpp"
#include "uqsr/uncertainty.hpp"

namespace fs = std::filesystem;

namespace {

using namespace uqsr;

struct GlobalOpts {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  // Execution is single-threaded throughout; the flag pins sequential
  // reduction as a contract should parallel paths appear later.
  bool deterministic = false;
};

// Per-subcommand sampling options; empty/zero means "not set on the command
// line", resolved against the run config and method defaults.
struct SampleOpts {
  std::vector<std::string> checkpoints;
  std::string method;
  int samples = 0;
  std::string mode;
};

RunConfig load_run_config(const GlobalOpts& g, bool required) {
  if (g.config_path.empty()) {
    if (required) throw ConfigError("this command requires --config");
    return RunConfig{};
  }
  RunConfig cfg = RunConfig::from_file(g.config_path);
  cfg.require_known(known_run_keys());
  return cfg;
}

std::string fx_cache_path(int layer_tag, std::uint64_t seed) {
  const char* dir = std::getenv("UQSR_CACHE_DIR");
  if (dir == nullptr || *dir == '\0') return {};
  char name[48];
  std::snprintf(name, sizeof name, "fx_l%d_%016llx.fxw", layer_tag,
                static_cast<unsigned long long>(seed));
  return (fs::path(dir) / name).string();
}

TrainSpec spec_from_config(const RunConfig& cfg) {
  TrainSpec spec;
  const std::string arch = cfg.gets("model.arch", "esrgan");
  if (arch == "esrgan")
    spec.esrgan = true;
  else if (arch == "srgan")
    spec.esrgan = false;
  else
    throw ConfigError("model.arch must be esrgan or srgan, got: " + arch);

  GeneratorConfig& gc = spec.gcfg;
  gc.scale = cfg.geti("model.scale", gc.scale);
  gc.base_channels = cfg.geti("model.base_channels", gc.base_channels);
  gc.n_blocks = cfg.geti("model.n_blocks", gc.n_blocks);
  gc.rdb_per_rrdb = cfg.geti("model.rdb_per_rrdb", gc.rdb_per_rrdb);
  gc.convs_per_rdb = cfg.geti("model.convs_per_rdb", gc.convs_per_rdb);
  gc.growth_channels = cfg.geti("model.growth_channels", gc.growth_channels);
  gc.residual_scale = cfg.getd("model.residual_scale", gc.residual_scale);
  gc.dropout_count = cfg.geti("model.dropout_count", gc.dropout_count);
  gc.dropout_p = cfg.getd("model.dropout_p", gc.dropout_p);

  spec.dcfg.base_channels = cfg.geti("disc.base_channels", spec.dcfg.base_channels);
  spec.dcfg.n_stages = cfg.geti("disc.n_stages", spec.dcfg.n_stages);
  spec.dcfg.relativistic = spec.esrgan;

  TrainConfig& adv = spec.adversarial;
  adv.lr0 = cfg.getd("train.lr0", adv.lr0);
  adv.beta1 = cfg.getd("train.beta1", adv.beta1);
  adv.beta2 = cfg.getd("train.beta2", adv.beta2);
  adv.batch_size = cfg.geti("train.batch_size", adv.batch_size);
  adv.epochs = cfg.geti("train.epochs", adv.epochs);
  if (cfg.has("train.milestones")) adv.milestones = cfg.geti_list("train.milestones");
  adv.decay_factor = cfg.getd("train.decay_factor", adv.decay_factor);
  adv.seed = cfg.getu("train.seed", adv.seed);
  adv.phase = Phase::adversarial;
  adv.augment.p_rotate = cfg.getd("train.augment.p_rotate", 0.0);
  adv.augment.p_hflip = cfg.getd("train.augment.p_hflip", 0.0);
  adv.augment.p_vflip = cfg.getd("train.augment.p_vflip", 0.0);
  adv.augment.p_crop = cfg.getd("train.augment.p_crop", 0.0);
  adv.augment.crop_lr_size = cfg.geti("train.augment.crop_lr_size", 0);

  spec.pretrain = adv;
  spec.pretrain.phase = Phase::psnr_pretrain;
  spec.pretrain.epochs = cfg.geti("train.pretrain_epochs", 0);
  spec.pretrain.lr0 = cfg.getd("train.pretrain_lr0", adv.lr0);
  spec.pretrain.milestones.clear();

  spec.weights.lambda_cont = cfg.getd("loss.lambda_cont", spec.weights.lambda_cont);
  spec.weights.lambda_adv = cfg.getd("loss.lambda_adv", spec.weights.lambda_adv);
  spec.weights.lambda_perc = cfg.getd("loss.lambda_perc", spec.weights.lambda_perc);
  spec.fx_layer_tag = cfg.geti("loss.perc_layer", spec.fx_layer_tag);
  spec.fx_seed = cfg.getu("loss.fx_seed", spec.fx_seed);
  spec.fx_weights_path = fx_cache_path(spec.fx_layer_tag, spec.fx_seed);
  return spec;
}

// Builds the shared feature extractor into the cache directory once, so
// later runs (and ensemble members) load identical weights from disk.
void ensure_fx_cache(const TrainSpec& spec) {
  if (spec.fx_weights_path.empty() || fs::exists(spec.fx_weights_path)) return;
  const fs::path dir = fs::path(spec.fx_weights_path).parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  FeatureExtractor fx(spec.fx_layer_tag, spec.fx_seed);
  fx.save(spec.fx_weights_path);
}

PairDataset load_dataset(const RunConfig& cfg, const std::string& manifest_flag) {
  const std::string mpath =
      !manifest_flag.empty() ? manifest_flag : cfg.gets("data.manifest", "");
  if (mpath.empty()) throw ConfigError("a manifest is required (--manifest or data.manifest)");
  const DatasetManifest man = read_manifest(mpath);
  if (man.entries.empty()) throw ConfigError("manifest lists no images: " + mpath);
  const std::string base = cfg.gets("data.dir", fs::path(mpath).parent_path().string());
  return load_pairs(man, base);
}

Model load_generator(const std::string& path) {
  Model m = restore_model(load_checkpoint(path));
  if (!m.is_generator()) throw ConfigError("checkpoint is not a generator: " + path);
  return m;
}

SigmaMode mode_from_flag(const std::string& name) {
  if (name == "std_of_mean") return SigmaMode::std_of_mean;
  if (name == "sample_std") return SigmaMode::sample_std;
  throw ConfigError("mode must be std_of_mean or sample_std, got: " + name);
}

ImageTensor channel_mean(const ImageTensor& img) {
  if (img.channels == 1) return img;
  ImageTensor out(img.height, img.width, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double sum = 0.0;
      for (int c = 0; c < img.channels; ++c) sum += img.at(y, x, c);
      out.at(y, x, 0) = sum / img.channels;
    }
  return out;
}

// Resolved sampling setup shared by infer, evaluate, and calibrate.
struct SamplerSetup {
  std::string method = "single";
  std::vector<Model> models;
  int m = 1;
  std::uint64_t seed = 0;
  SigmaMode mode = SigmaMode::std_of_mean;
};

SamplerSetup make_sampler(const GlobalOpts& g, const RunConfig& cfg, const SampleOpts& opt) {
  SamplerSetup s;
  s.method = !opt.method.empty() ? opt.method : cfg.gets("uncertainty.method", "single");
  if (s.method != "single" && s.method != "mcd" && s.method != "ensemble")
    throw ConfigError("method must be single, mcd, or ensemble, got: " + s.method);
  if (opt.checkpoints.empty()) throw ConfigError("at least one --checkpoint is required");
  if (s.method == "ensemble") {
    if (opt.checkpoints.size() < 2) throw ConfigError("method ensemble needs >= 2 checkpoints");
  } else if (opt.checkpoints.size() != 1) {
    throw ConfigError("method " + s.method + " takes exactly one checkpoint");
  }
  for (const std::string& path : opt.checkpoints) s.models.push_back(load_generator(path));
  if (s.method == "mcd" && s.models[0].dropout_pos.empty())
    throw ConfigError("method mcd needs a dropout-bearing checkpoint");
  if (s.method == "mcd")
    s.m = opt.samples > 0 ? opt.samples : cfg.geti("uncertainty.m", 10);
  else
    s.m = static_cast<int>(s.models.size());
  s.seed = g.seed_set ? g.seed : cfg.getu("uncertainty.seed", 0);
  s.mode = mode_from_flag(!opt.mode.empty() ? opt.mode : cfg.gets("uncertainty.mode", "std_of_mean"));
  return s;
}

SampleStack draw_stack(SamplerSetup& s, const ImageTensor& lr, std::uint64_t run_seed) {
  if (s.method == "mcd") return mc_dropout_sample(s.models[0], lr, s.m, run_seed);
  return ensemble_sample(s.models, lr);
}

int cmd_prepare(const std::string& in_dir, const std::string& out_dir, int scale, int hr_size) {
  if (scale < 1 || hr_size < scale || hr_size % scale != 0)
    throw ConfigError("hr size must be a positive multiple of scale");
  const DatasetManifest scanned = scan_manifest(in_dir, scale, hr_size);
  fs::create_directories(out_dir);
  DatasetManifest out = scanned;
  out.entries.clear();
  for (const ManifestEntry& e : scanned.entries) {
    const ImageTensor src = load_image((fs::path(in_dir) / e.path).string());
    if (src.height < hr_size || src.width < hr_size) {
      out.skipped.push_back({e.path, "smaller than the crop size"});
      continue;
    }
    const TrainingPair pair =
        make_pair(src, (src.height - hr_size) / 2, (src.width - hr_size) / 2, hr_size, scale);
    save_image(pair.hr, (fs::path(out_dir) / (e.source_id + "_hr.png")).string());
    save_image(pair.lr, (fs::path(out_dir) / (e.source_id + "_lr.png")).string());
    out.entries.push_back({e.source_id, e.source_id + "_hr.png", e.split});
  }
  write_manifest(out, (fs::path(out_dir) / "manifest.tsv").string());
  for (const SkippedFile& s : out.skipped)
    std::cerr << "warning: skipped " << s.path << ": " << s.reason << "\n";
  if (out.entries.empty()) std::cerr << "warning: no usable images under " << in_dir << "\n";
  std::cout << "prepared " << out.entries.size() << " pair(s) into " << out_dir << "\n";
  return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& out_dir) {
  const RunConfig cfg = load_run_config(g, true);
  const TrainSpec spec = spec_from_config(cfg);
  ensure_fx_cache(spec);
  const PairDataset data = load_dataset(cfg, "");
  const std::uint64_t seed = g.seed_set ? g.seed : cfg.getu("train.seed", 0);
  fs::create_directories(out_dir);
  TrainReport report;
  const Checkpoint ckpt = train_one(spec, data, seed, &report);
  const std::string ckpt_path = (fs::path(out_dir) / "model.ckpt").string();
  save_checkpoint(ckpt, ckpt_path);
  write_train_csv(report, (fs::path(out_dir) / "train.csv").string());
  write_train_log(report, (fs::path(out_dir) / "train.log").string());
  std::cout << "trained " << report.epochs.size() << " epoch(s) in " << report.wall_seconds
            << " s; wrote " << ckpt_path << "\n";
  return 0;
}

int cmd_train_ensemble(const GlobalOpts& g, const std::string& out_dir) {
  const RunConfig cfg = load_run_config(g, true);
  const TrainSpec spec = spec_from_config(cfg);
  ensure_fx_cache(spec);
  const PairDataset data = load_dataset(cfg, "");
  const int m = cfg.geti("ensemble.m", 5);
  std::vector<std::uint64_t> seeds;
  if (cfg.has("ensemble.seeds")) {
    seeds = cfg.getu_list("ensemble.seeds");
  } else {
    const std::uint64_t base = g.seed_set ? g.seed : cfg.getu("train.seed", 0);
    for (int k = 0; k < m; ++k) seeds.push_back(mix_seed(base, static_cast<std::uint64_t>(k)));
  }
  fs::create_directories(out_dir);
  std::vector<TrainReport> reports;
  const std::vector<Checkpoint> ckpts = train_ensemble(spec, data, m, seeds, &reports);
  for (std::size_t k = 0; k < ckpts.size(); ++k) {
    const std::string stem = "member_" + std::to_string(k);
    save_checkpoint(ckpts[k], (fs::path(out_dir) / (stem + ".ckpt")).string());
    write_train_csv(reports[k], (fs::path(out_dir) / (stem + "_train.csv")).string());
  }
  std::cout << "trained " << ckpts.size() << " member(s) into " << out_dir << "\n";
  return 0;
}

int cmd_infer(const GlobalOpts& g, const SampleOpts& opt, const std::string& image_path,
              const std::string& out_dir) {
  const RunConfig cfg = load_run_config(g, false);
  SamplerSetup s = make_sampler(g, cfg, opt);
  const ImageTensor lr = load_image(image_path);
  fs::create_directories(out_dir);
  const std::string sr_path = (fs::path(out_dir) / "sr.png").string();

  const SampleStack stack = draw_stack(s, lr, s.seed);
  save_image(aggregate_mean(stack), sr_path);
  if (s.method == "single") {
    std::cout << "wrote " << sr_path << "\n";
    return 0;
  }

  const UncertaintyMap umap = aggregate_std(stack, s.mode);
  double sigma_max = 0.0;
  for (double v : umap.sigma.data) sigma_max = std::max(sigma_max, v);
  const std::string gray_path = (fs::path(out_dir) / "sigma16.png").string();
  const std::string sidecar_path = (fs::path(out_dir) / "sigma.bin").string();
  save_image_gray16(channel_mean(umap.sigma), gray_path, sigma_max);
  save_sigma_sidecar(umap.sigma, s.mode, s.m, sidecar_path);
  std::cout << "wrote " << sr_path << ", " << gray_path << ", " << sidecar_path
            << "; sigma mean " << umap.sigma_mean_scalar << "\n";
  return 0;
}

int cmd_evaluate(const GlobalOpts& g, const SampleOpts& opt, const std::string& manifest,
                 const std::string& out_dir) {
  const RunConfig cfg = load_run_config(g, false);
  SamplerSetup s = make_sampler(g, cfg, opt);
  const PairDataset data = load_dataset(cfg, manifest);
  const int n_bins = cfg.geti("eval.n_bins", 10);
  const bool luminance_only = cfg.getb("eval.luminance_only", false);

  std::uint64_t counter = 0;
  const SrSampler sampler = [&](const ImageTensor& lr) -> SrOutput {
    const SampleStack stack = draw_stack(s, lr, mix_seed(s.seed, counter++));
    SrOutput out;
    out.sr = aggregate_mean(stack);
    if (s.method != "single") out.sigma_mean = aggregate_std(stack, s.mode).sigma_mean_scalar;
    return out;
  };
  const SetEvaluation ev = evaluate_set(sampler, data, n_bins, luminance_only);

  fs::create_directories(out_dir);
  std::vector<MetricReport> rows = ev.per_image;
  rows.push_back(ev.aggregate);
  write_metric_csv(rows, (fs::path(out_dir) / "metrics.csv").string());
  write_curve_csv(ev.curve, (fs::path(out_dir) / "calibration.csv").string());
  std::cout << "evaluated " << ev.per_image.size() << " image(s): mean psnr "
            << ev.aggregate.psnr_db << " dB, ssim " << ev.aggregate.ssim << ", mae "
            << ev.aggregate.mae << "\n";
  return 0;
}

int cmd_calibrate(const GlobalOpts& g, const SampleOpts& opt, const std::string& manifest,
                  const std::string& out_dir) {
  const RunConfig cfg = load_run_config(g, false);
  SamplerSetup s = make_sampler(g, cfg, opt);
  if (s.method == "single")
    throw ConfigError("calibrate needs an uncertainty method (mcd or ensemble)");
  const PairDataset data = load_dataset(cfg, manifest);
  const int n_thresholds = cfg.geti("eval.n_thresholds", 50);
  const bool luminance_only = cfg.getb("eval.luminance_only", false);

  std::vector<double> sig, err;
  std::uint64_t counter = 0;
  for (const TrainingPair& pair : data.pairs) {
    const SampleStack stack = draw_stack(s, pair.lr, mix_seed(s.seed, counter++));
    ImageTensor sr = aggregate_mean(stack);
    ImageTensor sigma = aggregate_std(stack, s.mode).sigma;
    ImageTensor hr = pair.hr;
    if (luminance_only) {
      sr = to_luminance(sr);
      hr = to_luminance(hr);
      sigma = channel_mean(sigma);
    }
    const ImageTensor e = mae_map(sr, hr);
    sig.insert(sig.end(), sigma.data.begin(), sigma.data.end());
    err.insert(err.end(), e.data.begin(), e.data.end());
  }

  UncertaintyMap umap;
  umap.sigma = ImageTensor(static_cast<int>(sig.size()), 1, 1);
  umap.sigma.data = sig;
  umap.mode = s.mode;
  ImageTensor err_img(static_cast<int>(err.size()), 1, 1);
  err_img.data = err;
  const CalibrationCurve curve = threshold_sweep(umap, err_img, n_thresholds);

  fs::create_directories(out_dir);
  write_curve_csv(curve, (fs::path(out_dir) / "sweep.csv").string());
  std::cout << "swept " << curve.points.size() << " level(s) over " << sig.size()
            << " pixel(s)\n";
  return 0;
}

int cmd_render(const std::string& sr_path, const std::string& sigma_path,
               const std::string& out_path) {
  const ImageTensor sr = load_image(sr_path);
  const SigmaSidecar sidecar = load_sigma_sidecar(sigma_path);
  if (sidecar.sigma.height != sr.height || sidecar.sigma.width != sr.width)
    throw ConfigError("sigma dimensions do not match the image");
  save_image(render_overlay(sr, sidecar.sigma), out_path);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uqsr: 4x super-resolution with per-pixel predictive uncertainty"};
  app.require_subcommand(1);

  GlobalOpts g;
  std::vector<CLI::Option*> seed_opts;
  const auto add_globals = [&](CLI::App* cmd) {
    cmd->add_option("--config", g.config_path, "Run configuration file");
    seed_opts.push_back(cmd->add_option("--seed", g.seed, "Override the configured seed"));
    cmd->add_flag("--deterministic", g.deterministic, "Force sequential execution");
  };
  add_globals(&app);

  std::string in_dir, out_dir = ".", image_path, manifest, sr_path, sigma_path, out_path;
  int scale = 4, hr_size = 256;
  SampleOpts s;

  CLI::App* prepare = app.add_subcommand("prepare", "Crop and downsample a folder into pairs");
  prepare->add_option("--in", in_dir, "Folder of source images")->required();
  prepare->add_option("--out", out_dir, "Output folder for pairs and manifest")->required();
  prepare->add_option("--scale", scale, "Upscaling factor");
  prepare->add_option("--hr-size", hr_size, "High-resolution crop size");
  add_globals(prepare);

  CLI::App* train = app.add_subcommand("train", "Train one model from a run config");
  train->add_option("--out", out_dir, "Output folder");
  add_globals(train);

  CLI::App* train_ens = app.add_subcommand("train-ensemble", "Train an ensemble of models");
  train_ens->add_option("--out", out_dir, "Output folder");
  add_globals(train_ens);

  CLI::App* infer = app.add_subcommand("infer", "Upscale one image, optionally with uncertainty");
  infer->add_option("--checkpoint", s.checkpoints, "Generator checkpoint (repeatable)")
      ->required();
  infer->add_option("--image", image_path, "Low-resolution input image")->required();
  infer->add_option("--out", out_dir, "Output folder");
  infer->add_option("--method", s.method, "single | mcd | ensemble");
  infer->add_option("--samples", s.samples, "MC-dropout sample count");
  infer->add_option("--mode", s.mode, "std_of_mean | sample_std");
  add_globals(infer);

  CLI::App* evaluate = app.add_subcommand("evaluate", "Metrics over a prepared manifest");
  evaluate->add_option("--checkpoint", s.checkpoints, "Generator checkpoint (repeatable)")
      ->required();
  evaluate->add_option("--manifest", manifest, "Prepared dataset manifest");
  evaluate->add_option("--out", out_dir, "Output folder");
  evaluate->add_option("--method", s.method, "single | mcd | ensemble");
  evaluate->add_option("--samples", s.samples, "MC-dropout sample count");
  evaluate->add_option("--mode", s.mode, "std_of_mean | sample_std");
  add_globals(evaluate);

  CLI::App* calibrate = app.add_subcommand("calibrate", "Pixelwise error-vs-sigma sweep");
  calibrate->add_option("--checkpoint", s.checkpoints, "Generator checkpoint (repeatable)")
      ->required();
  calibrate->add_option("--manifest", manifest, "Prepared dataset manifest");
  calibrate->add_option("--out", out_dir, "Output folder");
  calibrate->add_option("--method", s.method, "mcd | ensemble");
  calibrate->add_option("--samples", s.samples, "MC-dropout sample count");
  calibrate->add_option("--mode", s.mode, "std_of_mean | sample_std");
  add_globals(calibrate);

  CLI::App* render = app.add_subcommand("render", "Blend a sigma heat map over an image");
  render->add_option("--sr", sr_path, "Super-resolved image")->required();
  render->add_option("--sigma", sigma_path, "Sigma sidecar file")->required();
  render->add_option("--out", out_path, "Overlay output path")->required();
  add_globals(render);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  for (const CLI::Option* o : seed_opts) g.seed_set = g.seed_set || o->count() > 0;

  try {
    if (prepare->parsed()) return cmd_prepare(in_dir, out_dir, scale, hr_size);
    if (train->parsed()) return cmd_train(g, out_dir);
    if (train_ens->parsed()) return cmd_train_ensemble(g, out_dir);
    if (infer->parsed()) return cmd_infer(g, s, image_path, out_dir);
    if (evaluate->parsed()) return cmd_evaluate(g, s, manifest, out_dir);
    if (calibrate->parsed()) return cmd_calibrate(g, s, manifest, out_dir);
    if (render->parsed()) return cmd_render(sr_path, sigma_path, out_path);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
