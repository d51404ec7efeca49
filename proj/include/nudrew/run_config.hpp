#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "nudrew/graph.hpp"
#include "nudrew/model.hpp"
#include "nudrew/sensitivity.hpp"
#include "nudrew/tasks.hpp"

namespace nudrew {

enum class FieldType { kInt, kUInt, kDouble, kBool, kString, kList };

struct FieldSpec {
  std::string section;  // empty for top-level keys
  std::string key;
  FieldType type;
  std::string default_value;
  std::string help;
  std::vector<std::string> aliases;

  std::string path() const { return section.empty() ? key : section + "." + key; }
};

// Every accepted key. Anything else is a ConfigError.
const std::vector<FieldSpec>& run_config_schema();

// Sectioned "key = value" text:
//
//   seed = 3
//   [model]
//   arch = drew_gcn   # comment
//
// Values are type-checked against the schema as they are set.
class RunConfig {
 public:
  RunConfig();

  void load(std::istream& in, const std::string& origin = "<config>");
  void load_file(const std::filesystem::path& path);
  // name is "section.key", a top-level key, or a key or alias unique across sections.
  void set(const std::string& name, const std::string& value);
  // "name=value".
  void apply_override(const std::string& assignment);

  bool was_set(const std::string& path) const;
  const std::string& raw(const std::string& path) const;
  std::string get_string(const std::string& path) const;
  std::int64_t get_int(const std::string& path) const;
  std::uint64_t get_uint(const std::string& path) const;
  double get_double(const std::string& path) const;
  bool get_bool(const std::string& path) const;
  std::vector<std::string> get_list(const std::string& path) const;

  // Every field with its effective value; loading it back reproduces this config.
  void write(std::ostream& out) const;

 private:
  const FieldSpec& resolve(const std::string& name) const;
  const FieldSpec& spec(const std::string& path) const;

  std::map<std::string, std::string> values_;
  std::map<std::string, bool> set_;
};

// [model] as written; zero layers, dims and sp_gcn k_cap are left for the task to fill.
ModelConfig model_config_from(const RunConfig& config);
// RingTransfer defaults: L = floor(k/2), dims = classes, sp_gcn k_cap = floor(k/2),
// nu = half resolved against L, optional budget matching. Validated.
ModelConfig ring_model_config_from(const RunConfig& config);
// Graph-level commands: layers must be set, in_dim defaults to 1 (hidden under
// the linear probe), out_dim to 1. Validated.
ModelConfig graph_model_config_from(const RunConfig& config);
Graph graph_from(const RunConfig& config);
TrainOptions train_options_from(const RunConfig& config);
SweepOptions sweep_options_from(const RunConfig& config);
SensitivityOptions sensitivity_options_from(const RunConfig& config);
DecayOptions decay_options_from(const RunConfig& config);

}  // namespace nudrew
