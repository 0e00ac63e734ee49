#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "perspectra/residual.hpp"
#include "perspectra/synth.hpp"

namespace perspectra {

// Flat key/value configuration read from a small TOML subset:
//   # comment
//   key = 1.5
//   name = "text"
//   list = [0.2, 0.45]
//   [section]        -> later keys become "section.key"
// Values keep their source text; quotes are stripped from strings.
class ConfigFile {
 public:
  static ConfigFile parse(std::string_view text, const std::string& origin = "<config>");
  static ConfigFile load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  long get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<std::string> get_string_list(const std::string& key) const;

  // Keys under `prefix.` with the prefix removed.
  ConfigFile section(const std::string& prefix) const;

 private:
  std::map<std::string, std::string> values_;
  std::string origin_;
};

// `preset` and `ablation` keys select named rows first; remaining keys mirror
// GateConfig field names and override them. Unknown keys throw BadConfig.
GateConfig gate_config_from(const ConfigFile& config, GateConfig base = {});

// Keys mirror SyntheticSpec fields; `schema` is a list of "name:categories".
SyntheticSpec synthetic_spec_from(const ConfigFile& config, SyntheticSpec base = {});

// Top-level keys feed the shared SyntheticSpec; [train], [val], [test]
// sections set partition sizes and ambiguous fractions.
PartitionedSpec partitioned_spec_from(const ConfigFile& config, PartitionedSpec base = {});

SweepGrid sweep_grid_from(const ConfigFile& config, SweepGrid base = {});

std::string gate_config_to_toml(const GateConfig& config);

}  // namespace perspectra
