#include "uqsr/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "uqsr/errors.hpp"

namespace uqsr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig RunConfig::from_string(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + " is not 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (cfg.values_.count(key))
      throw ConfigError("duplicate config key: " + key);
    cfg.values_[key] = value;
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str());
}

std::string RunConfig::gets(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

int RunConfig::geti(const std::string& key, int fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const int v = std::stoi(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " needs an integer, got '" + it->second + "'");
  }
}

double RunConfig::getd(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  char* end = nullptr;
  const double v = std::strtod(it->second.c_str(), &end);
  if (end != it->second.c_str() + it->second.size() || it->second.empty())
    throw ConfigError("config key " + key + " needs a number, got '" + it->second + "'");
  return v;
}

bool RunConfig::getb(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("config key " + key + " needs true/false, got '" + it->second + "'");
}

std::uint64_t RunConfig::getu(const std::string& key, std::uint64_t fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const std::uint64_t v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " needs an unsigned integer, got '" + it->second +
                      "'");
  }
}

namespace {

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(s);
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

std::vector<int> RunConfig::geti_list(const std::string& key) const {
  const auto it = values_.find(key);
  std::vector<int> out;
  if (it == values_.end() || it->second.empty()) return out;
  for (const std::string& f : split_commas(it->second)) {
    try {
      out.push_back(std::stoi(f));
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + " needs integers, got '" + f + "'");
    }
  }
  return out;
}

std::vector<std::uint64_t> RunConfig::getu_list(const std::string& key) const {
  const auto it = values_.find(key);
  std::vector<std::uint64_t> out;
  if (it == values_.end() || it->second.empty()) return out;
  for (const std::string& f : split_commas(it->second)) {
    try {
      out.push_back(std::stoull(f));
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + " needs unsigned integers, got '" + f + "'");
    }
  }
  return out;
}

void RunConfig::require_known(const std::vector<std::string>& known) const {
  for (const auto& [key, value] : values_)
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown config key: " + key);
}

const std::vector<std::string>& known_run_keys() {
  static const std::vector<std::string> keys = {
      "model.arch",
      "model.scale",
      "model.base_channels",
      "model.n_blocks",
      "model.rdb_per_rrdb",
      "model.convs_per_rdb",
      "model.growth_channels",
      "model.residual_scale",
      "model.dropout_count",
      "model.dropout_p",
      "disc.base_channels",
      "disc.n_stages",
      "train.lr0",
      "train.beta1",
      "train.beta2",
      "train.batch_size",
      "train.epochs",
      "train.milestones",
      "train.decay_factor",
      "train.seed",
      "train.pretrain_epochs",
      "train.pretrain_lr0",
      "train.augment.p_rotate",
      "train.augment.p_hflip",
      "train.augment.p_vflip",
      "train.augment.p_crop",
      "train.augment.crop_lr_size",
      "loss.lambda_cont",
      "loss.lambda_adv",
      "loss.lambda_perc",
      "loss.perc_layer",
      "loss.fx_seed",
      "uncertainty.method",
      "uncertainty.m",
      "uncertainty.mode",
      "uncertainty.seed",
      "ensemble.m",
      "ensemble.seeds",
      "eval.n_bins",
      "eval.n_thresholds",
      "eval.luminance_only",
      "eval.centered_crop",
      "data.manifest",
      "data.dir",
  };
  return keys;
}

}  // namespace uqsr
