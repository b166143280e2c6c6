#include "uqsr/checkpoint.hpp"

#include <fstream>

#include "uqsr/binio.hpp"
#include "uqsr/errors.hpp"

namespace uqsr {

namespace {

constexpr char kCkptMagic[] = "UQSRCKPT";

std::uint32_t phase_code(const std::string& phase) {
  if (phase == "init") return 0;
  if (phase == "psnr_pretrain") return 1;
  if (phase == "adversarial") return 2;
  throw FormatError("unknown training phase: " + phase);
}

std::string phase_name(std::uint32_t code) {
  switch (code) {
    case 0: return "init";
    case 1: return "psnr_pretrain";
    case 2: return "adversarial";
  }
  throw FormatError("unknown training phase code");
}

}  // namespace

std::uint64_t loss_trace_digest(const std::vector<double>& trace) {
  return fnv1a(trace.data(), trace.size() * sizeof(double));
}

Checkpoint snapshot(const Model& m, const Provenance& prov) {
  Checkpoint ckpt;
  ckpt.kind = m.kind;
  ckpt.gcfg = m.gcfg;
  ckpt.dcfg = m.dcfg;
  ckpt.init_seed = m.init_seed;
  ckpt.dropout_pos = m.dropout_pos;
  ckpt.prov = prov;
  for (const ParamRef& p : m.params()) ckpt.params.emplace_back(p.name, *p.value);
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kCkptMagic, 8);
  write_u32(out, ckpt.version);
  write_str(out, kind_name(ckpt.kind));

  write_u32(out, static_cast<std::uint32_t>(ckpt.gcfg.scale));
  write_u32(out, static_cast<std::uint32_t>(ckpt.gcfg.base_channels));
  write_u32(out, static_cast<std::uint32_t>(ckpt.gcfg.n_blocks));
  write_u32(out, static_cast<std::uint32_t>(ckpt.gcfg.rdb_per_rrdb));
  write_u32(out, static_cast<std::uint32_t>(ckpt.gcfg.convs_per_rdb));
  write_u32(out, static_cast<std::uint32_t>(ckpt.gcfg.growth_channels));
  write_f64(out, ckpt.gcfg.residual_scale);
  write_u32(out, static_cast<std::uint32_t>(ckpt.gcfg.dropout_count));
  write_f64(out, ckpt.gcfg.dropout_p);

  write_u32(out, static_cast<std::uint32_t>(ckpt.dcfg.base_channels));
  write_u32(out, static_cast<std::uint32_t>(ckpt.dcfg.n_stages));
  write_u32(out, ckpt.dcfg.relativistic ? 1 : 0);

  write_u64(out, ckpt.init_seed);
  write_u32(out, static_cast<std::uint32_t>(ckpt.dropout_pos.size()));
  for (int p : ckpt.dropout_pos) write_u32(out, static_cast<std::uint32_t>(p));

  write_u32(out, phase_code(ckpt.prov.phase));
  write_u32(out, static_cast<std::uint32_t>(ckpt.prov.epoch));
  write_u64(out, ckpt.prov.seed);
  write_u64(out, ckpt.prov.loss_digest);

  write_u32(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, blob] : ckpt.params) {
    write_str(out, name);
    write_u64(out, blob.size());
    for (double v : blob) write_f64(out, v);
  }
  if (!out) throw IoError("error writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != kCkptMagic)
    throw FormatError("not a checkpoint file: " + path);

  Checkpoint ckpt;
  ckpt.version = read_u32(in);
  if (ckpt.version != 1) throw FormatError("unsupported checkpoint version");
  ckpt.kind = kind_from_name(read_str(in));

  ckpt.gcfg.scale = static_cast<int>(read_u32(in));
  ckpt.gcfg.base_channels = static_cast<int>(read_u32(in));
  ckpt.gcfg.n_blocks = static_cast<int>(read_u32(in));
  ckpt.gcfg.rdb_per_rrdb = static_cast<int>(read_u32(in));
  ckpt.gcfg.convs_per_rdb = static_cast<int>(read_u32(in));
  ckpt.gcfg.growth_channels = static_cast<int>(read_u32(in));
  ckpt.gcfg.residual_scale = read_f64(in);
  ckpt.gcfg.dropout_count = static_cast<int>(read_u32(in));
  ckpt.gcfg.dropout_p = read_f64(in);

  ckpt.dcfg.base_channels = static_cast<int>(read_u32(in));
  ckpt.dcfg.n_stages = static_cast<int>(read_u32(in));
  ckpt.dcfg.relativistic = read_u32(in) != 0;

  ckpt.init_seed = read_u64(in);
  const std::uint32_t n_drop = read_u32(in);
  for (std::uint32_t i = 0; i < n_drop; ++i)
    ckpt.dropout_pos.push_back(static_cast<int>(read_u32(in)));

  ckpt.prov.phase = phase_name(read_u32(in));
  ckpt.prov.epoch = static_cast<int>(read_u32(in));
  ckpt.prov.seed = read_u64(in);
  ckpt.prov.loss_digest = read_u64(in);

  const std::uint32_t n_params = read_u32(in);
  for (std::uint32_t i = 0; i < n_params; ++i) {
    std::string name = read_str(in);
    const std::uint64_t count = read_u64(in);
    std::vector<double> blob(count);
    for (double& v : blob) v = read_f64(in);
    ckpt.params.emplace_back(std::move(name), std::move(blob));
  }
  return ckpt;
}

Model restore_model(const Checkpoint& ckpt) {
  Model m = build_model(ckpt.kind, ckpt.gcfg, ckpt.dcfg, ckpt.init_seed);
  std::vector<ParamRef> params = m.params();
  if (params.size() != ckpt.params.size())
    throw FormatError("checkpoint parameter count does not match the architecture");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, blob] = ckpt.params[i];
    if (params[i].name != name || params[i].value->size() != blob.size())
      throw FormatError("checkpoint parameter layout mismatch at " + name);
    *params[i].value = blob;
  }
  return m;
}

}  // namespace uqsr
