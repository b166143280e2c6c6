#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace uqsr {

// Flat "key = value" run document with dotted namespaces. Parsing keeps raw
// strings; typed getters convert on access. Unknown keys are rejected up
// front against the registry below.
class RunConfig {
 public:
  static RunConfig from_file(const std::string& path);
  static RunConfig from_string(const std::string& text);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string gets(const std::string& key, const std::string& fallback) const;
  int geti(const std::string& key, int fallback) const;
  double getd(const std::string& key, double fallback) const;
  bool getb(const std::string& key, bool fallback) const;
  std::uint64_t getu(const std::string& key, std::uint64_t fallback) const;
  std::vector<int> geti_list(const std::string& key) const;            // comma separated
  std::vector<std::uint64_t> getu_list(const std::string& key) const;  // comma separated

  // Throws ConfigError naming the first key missing from `known`.
  void require_known(const std::vector<std::string>& known) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Every key the command-line surface understands.
const std::vector<std::string>& known_run_keys();

}  // namespace uqsr
