#include "nudrew/run_config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "nudrew/errors.hpp"
#include "nudrew/random.hpp"

namespace nudrew {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string_view type_name(FieldType t) {
  switch (t) {
    case FieldType::kInt:
      return "integer";
    case FieldType::kUInt:
      return "unsigned integer";
    case FieldType::kDouble:
      return "number";
    case FieldType::kBool:
      return "boolean";
    case FieldType::kString:
      return "string";
    case FieldType::kList:
      return "comma-separated list";
  }
  return "?";
}

template <typename T>
bool parse_number(const std::string& text, T& out) {
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool parse_bool(const std::string& text, bool& out) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") {
    out = true;
    return true;
  }
  if (text == "false" || text == "0" || text == "no" || text == "off") {
    out = false;
    return true;
  }
  return false;
}

bool well_typed(FieldType type, const std::string& value) {
  switch (type) {
    case FieldType::kInt: {
      std::int64_t v;
      return parse_number(value, v);
    }
    case FieldType::kUInt: {
      std::uint64_t v;
      return parse_number(value, v);
    }
    case FieldType::kDouble: {
      double v;
      return parse_number(value, v) && std::isfinite(v);
    }
    case FieldType::kBool: {
      bool v;
      return parse_bool(value, v);
    }
    case FieldType::kString:
    case FieldType::kList:
      return true;
  }
  return false;
}

std::vector<FieldSpec> build_schema() {
  using T = FieldType;
  return {
      {"", "seed", T::kUInt, "0", "seed for data, weights, batching and probe inputs", {}},
      {"", "threads", T::kInt, "1", "worker threads for sweep and sensitivity", {}},
      {"", "out", T::kString, "nudrew_out", "output directory", {}},

      {"graph", "file", T::kString, "", "edge-list file; overrides the generator", {}},
      {"graph", "generator", T::kString, "path", "path, cycle, star, binary_tree or erdos_renyi", {}},
      {"graph", "n", T::kInt, "8", "node count (star: leaf count)", {}},
      {"graph", "p", T::kDouble, "0.3", "erdos_renyi edge probability", {}},
      {"graph", "depth", T::kInt, "3", "binary_tree depth", {}},
      {"graph", "id", T::kString, "", "label copied into reports", {}},

      {"model", "arch", T::kString, "drew_gcn", "gcn, drew_gcn, drew_gin, drew_gatedgcn or sp_gcn", {}},
      {"model", "layers", T::kInt, "0", "depth L; 0 means floor(k/2) on RingTransfer", {"L"}},
      {"model", "hidden", T::kInt, "16", "hidden width", {}},
      {"model", "budget_reference", T::kInt, "0",
       "if > 0, drew_* hidden is solved to match a gcn of this width", {}},
      {"model", "nu", T::kString, "inf", "delay: integer >= 1, inf, or half (L/2)", {}},
      {"model", "k_cap", T::kInt, "0", "hop cap (sp_gcn: k_max, 0 means floor(k/2) on RingTransfer)", {}},
      {"model", "in_dim", T::kInt, "0", "input features; 0 derives it from the task", {}},
      {"model", "out_dim", T::kInt, "0", "output classes; 0 derives it from the task", {}},
      {"model", "weight_sharing", T::kString, "auto", "auto, true or false", {}},
      {"model", "batch_norm", T::kBool, "true", "batch norm after every layer", {}},
      {"model", "gin_eps", T::kDouble, "0", "drew_gin self weight epsilon", {}},
      {"model", "gate_eps", T::kDouble, "1e-06", "drew_gatedgcn gate normalizer epsilon", {}},
      {"model", "linear_probe", T::kBool, "false", "identity weights, no activation, residual or batch norm", {}},
      {"model", "readout", T::kString, "target", "RingTransfer readout node: target or source", {}},

      {"data", "n", T::kInt, "2000", "RingTransfer instance count", {}},
      {"data", "k", T::kInt, "10", "ring length", {}},
      {"data", "classes", T::kInt, "5", "class count", {"C"}},

      {"train", "lr", T::kDouble, "0.01", "Adam learning rate", {}},
      {"train", "epochs", T::kInt, "50", "training epochs", {}},
      {"train", "batch", T::kInt, "32", "rings per minibatch", {}},
      {"train", "divergence_limit", T::kDouble, "1000000", "loss above this fails the run", {}},

      {"sweep", "models", T::kList, "gcn,sp_gcn,drew_gcn:1,drew_gcn:inf,drew_gcn:half,constant", "models to sweep", {}},
      {"sweep", "ks", T::kList, "10,20,30", "ring lengths", {}},
      {"sweep", "repeats", T::kInt, "3", "seeds per cell", {}},
      {"sweep", "reference_hidden", T::kInt, "256", "gcn width that fixes the parameter budget", {}},

      {"sensitivity", "mode", T::kString, "jacobian", "jacobian or decay", {}},
      {"sensitivity", "upto_layer", T::kInt, "-1", "deepest layer to probe; -1 means model.layers", {}},
      {"sensitivity", "zero_threshold", T::kDouble, "1e-12", "norms at or below this count as zero", {}},
      {"sensitivity", "family", T::kString, "binary_tree", "decay graph family: binary_tree or cycle", {}},
      {"sensitivity", "r_min", T::kInt, "1", "smallest decay distance", {}},
      {"sensitivity", "r_max", T::kInt, "6", "largest decay distance", {}},
      {"sensitivity", "decay_nu", T::kString, "1", "delay of the drew_gcn side of the decay table", {}},

      {"precompute", "k_max", T::kInt, "0", "hop cap of the cache; 0 means the node count", {}},

      {"eval", "checkpoint", T::kString, "", "checkpoint to evaluate; empty means <out>/model.ckpt", {}},
  };
}

}  // namespace

const std::vector<FieldSpec>& run_config_schema() {
  static const std::vector<FieldSpec> schema = build_schema();
  return schema;
}

RunConfig::RunConfig() {
  for (const auto& f : run_config_schema()) {
    values_[f.path()] = f.default_value;
    set_[f.path()] = false;
  }
}

const FieldSpec& RunConfig::spec(const std::string& path) const {
  for (const auto& f : run_config_schema()) {
    if (f.path() == path) return f;
  }
  throw ConfigError(path, "unknown config key '" + path + "'");
}

const FieldSpec& RunConfig::resolve(const std::string& name) const {
  std::vector<const FieldSpec*> hits;
  const auto dot = name.find('.');
  for (const auto& f : run_config_schema()) {
    if (dot != std::string::npos) {
      const std::string section = name.substr(0, dot), key = name.substr(dot + 1);
      if (f.section == section && (f.key == key || std::ranges::count(f.aliases, key) > 0)) return f;
    } else if (f.key == name || std::ranges::count(f.aliases, name) > 0) {
      hits.push_back(&f);
    }
  }
  if (hits.size() == 1) return *hits[0];
  if (hits.empty()) throw ConfigError(name, "unknown config key '" + name + "'");
  std::string options;
  for (const auto* f : hits) options += (options.empty() ? "" : " or ") + f->path();
  throw ConfigError(name, "ambiguous config key '" + name + "': use " + options);
}

void RunConfig::set(const std::string& name, const std::string& value) {
  const FieldSpec& f = resolve(name);
  const std::string v = trim(value);
  if (!well_typed(f.type, v)) {
    throw ConfigError(f.path(), f.path() + ": expected " + std::string(type_name(f.type)) + ", got '" + v + "'");
  }
  values_[f.path()] = v;
  set_[f.path()] = true;
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(assignment, "override '" + assignment + "' is not of the form key=value");
  }
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void RunConfig::load(std::istream& in, const std::string& origin) {
  std::string section;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    const std::string text = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (text.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (text.front() == '[') {
      if (text.back() != ']') throw ConfigError(text, where + ": malformed section header '" + text + "'");
      section = trim(text.substr(1, text.size() - 2));
      const bool known = std::ranges::any_of(run_config_schema(), [&](const FieldSpec& f) { return f.section == section; });
      if (!known || section.empty()) throw ConfigError(section, where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError(text, where + ": expected key = value, got '" + text + "'");
    const std::string key = trim(text.substr(0, eq));
    const std::string path = section.empty() ? key : section + "." + key;
    const bool exists = std::ranges::any_of(run_config_schema(), [&](const FieldSpec& f) {
      return f.section == section && (f.key == key || std::ranges::count(f.aliases, key) > 0);
    });
    if (!exists) throw ConfigError(path, where + ": unknown config key '" + path + "'");
    try {
      set(path, text.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(e.field(), where + ": " + e.what());
    }
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  load(in, path.string());
}

bool RunConfig::was_set(const std::string& path) const {
  spec(path);
  return set_.at(path);
}

const std::string& RunConfig::raw(const std::string& path) const {
  spec(path);
  return values_.at(path);
}

std::string RunConfig::get_string(const std::string& path) const { return raw(path); }

std::int64_t RunConfig::get_int(const std::string& path) const {
  std::int64_t v = 0;
  if (!parse_number(raw(path), v)) throw ConfigError(path, path + ": not an integer");
  return v;
}

std::uint64_t RunConfig::get_uint(const std::string& path) const {
  std::uint64_t v = 0;
  if (!parse_number(raw(path), v)) throw ConfigError(path, path + ": not an unsigned integer");
  return v;
}

double RunConfig::get_double(const std::string& path) const {
  double v = 0.0;
  if (!parse_number(raw(path), v)) throw ConfigError(path, path + ": not a number");
  return v;
}

bool RunConfig::get_bool(const std::string& path) const {
  bool v = false;
  if (!parse_bool(raw(path), v)) throw ConfigError(path, path + ": not a boolean");
  return v;
}

std::vector<std::string> RunConfig::get_list(const std::string& path) const {
  std::vector<std::string> out;
  const std::string& text = raw(path);
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string item = trim(text.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

void RunConfig::write(std::ostream& out) const {
  std::string section;
  for (const auto& f : run_config_schema()) {
    if (f.section != section) {
      section = f.section;
      out << "\n[" << section << "]\n";
    }
    out << f.key << " = " << values_.at(f.path()) << '\n';
  }
}

namespace {

int checked_int(const RunConfig& c, const std::string& path, std::int64_t lo) {
  const auto v = c.get_int(path);
  if (v < lo || v > (1 << 30)) throw ConfigError(path, path + " must be >= " + std::to_string(lo));
  return static_cast<int>(v);
}

}  // namespace

ModelConfig model_config_from(const RunConfig& c) {
  ModelConfig m;
  try {
    m.arch = parse_arch(c.get_string("model.arch"));
  } catch (const ValidationError& e) {
    throw ConfigError("model.arch", std::string("model.arch: ") + e.what());
  }
  m.layers = checked_int(c, "model.layers", 0);
  m.hidden = checked_int(c, "model.hidden", 1);
  m.k_cap = checked_int(c, "model.k_cap", 0);
  m.in_dim = checked_int(c, "model.in_dim", 0);
  m.out_dim = checked_int(c, "model.out_dim", 0);
  const std::string nu = c.get_string("model.nu");
  if (nu == "half") {
    m.nu = DelayPolicy::finite(std::max(1, m.layers / 2));
  } else {
    try {
      m.nu = DelayPolicy::parse(nu);
    } catch (const ValidationError& e) {
      throw ConfigError("model.nu", std::string("model.nu: ") + e.what());
    }
  }
  const std::string sharing = c.get_string("model.weight_sharing");
  if (sharing == "true") {
    m.weight_sharing = true;
  } else if (sharing == "false") {
    m.weight_sharing = false;
  } else if (sharing != "auto") {
    throw ConfigError("model.weight_sharing", "model.weight_sharing: expected auto, true or false, got '" + sharing + "'");
  }
  m.use_batch_norm = c.get_bool("model.batch_norm");
  m.gin_eps = c.get_double("model.gin_eps");
  m.gate_eps = c.get_double("model.gate_eps");
  m.linear_probe = c.get_bool("model.linear_probe");
  try {
    m.readout = parse_readout_site(c.get_string("model.readout"));
  } catch (const ValidationError& e) {
    throw ConfigError("model.readout", std::string("model.readout: ") + e.what());
  }
  return m;
}

namespace {

void validated(const ModelConfig& m) {
  try {
    m.validate();
  } catch (const ValidationError& e) {
    throw ConfigError("model", std::string("model: ") + e.what());
  }
}

}  // namespace

ModelConfig ring_model_config_from(const RunConfig& c) {
  ModelConfig m = model_config_from(c);
  const int k = checked_int(c, "data.k", 3);
  const int classes = checked_int(c, "data.classes", 2);
  if (m.layers == 0) m.layers = std::max(1, k / 2);
  if (c.get_string("model.nu") == "half") m.nu = DelayPolicy::finite(std::max(1, m.layers / 2));
  if (m.arch == Arch::kSpGcn && m.k_cap == 0) m.k_cap = std::max(1, k / 2);
  if (m.in_dim == 0) m.in_dim = classes;
  if (m.out_dim == 0) m.out_dim = classes;
  const int reference = checked_int(c, "model.budget_reference", 0);
  if (reference > 0 && is_drew(m.arch)) {
    ModelConfig gcn = m;
    gcn.arch = Arch::kGcn;
    gcn.k_cap = 0;
    gcn.hidden = reference;
    gcn.weight_sharing.reset();
    m.hidden = solve_hidden_for_budget(m, count_params(gcn));
  }
  validated(m);
  return m;
}

ModelConfig graph_model_config_from(const RunConfig& c) {
  ModelConfig m = model_config_from(c);
  if (m.layers == 0) throw ConfigError("model.layers", "model.layers must be set (>= 1) for this command");
  if (m.in_dim == 0) m.in_dim = m.linear_probe ? m.hidden : 1;
  if (m.out_dim == 0) m.out_dim = 1;
  validated(m);
  return m;
}

Graph graph_from(const RunConfig& c) {
  const std::string file = c.get_string("graph.file");
  if (!file.empty()) return read_edge_list(std::filesystem::path(file));
  const std::string gen = c.get_string("graph.generator");
  const int n = checked_int(c, "graph.n", 0);
  if (gen == "path") return path_graph(n);
  if (gen == "cycle") return cycle_graph(n);
  if (gen == "star") return star_graph(n);
  if (gen == "binary_tree") return complete_binary_tree(checked_int(c, "graph.depth", 0));
  if (gen == "erdos_renyi") {
    const double p = c.get_double("graph.p");
    if (p < 0.0 || p > 1.0) throw ConfigError("graph.p", "graph.p must lie in [0, 1]");
    Rng rng(c.get_uint("seed"));
    return erdos_renyi(n, p, rng);
  }
  throw ConfigError("graph.generator", "graph.generator: unknown generator '" + gen + "'");
}

TrainOptions train_options_from(const RunConfig& c) {
  TrainOptions t;
  t.lr = c.get_double("train.lr");
  if (t.lr < 0.0) throw ConfigError("train.lr", "train.lr must be >= 0");
  t.epochs = checked_int(c, "train.epochs", 0);
  t.batch = checked_int(c, "train.batch", 1);
  t.divergence_limit = c.get_double("train.divergence_limit");
  t.seed = c.get_uint("seed");
  return t;
}

SweepOptions sweep_options_from(const RunConfig& c) {
  SweepOptions s;
  s.models = c.get_list("sweep.models");
  if (s.models.empty()) throw ConfigError("sweep.models", "sweep.models is empty");
  for (const auto& m : s.models) {
    try {
      parse_sweep_model(m);
    } catch (const ValidationError& e) {
      throw ConfigError("sweep.models", std::string("sweep.models: ") + e.what());
    }
  }
  s.ring_lengths.clear();
  for (const auto& k : c.get_list("sweep.ks")) {
    int v = 0;
    if (!parse_number(k, v) || v < 3) throw ConfigError("sweep.ks", "sweep.ks: '" + k + "' is not a ring length >= 3");
    s.ring_lengths.push_back(v);
  }
  if (s.ring_lengths.empty()) throw ConfigError("sweep.ks", "sweep.ks is empty");
  s.repeats = checked_int(c, "sweep.repeats", 1);
  s.seed = c.get_uint("seed");
  s.dataset_size = checked_int(c, "data.n", 1);
  s.classes = checked_int(c, "data.classes", 2);
  s.reference_hidden = checked_int(c, "sweep.reference_hidden", 1);
  s.train = train_options_from(c);
  s.threads = checked_int(c, "threads", 1);
  s.readout = parse_readout_site(c.get_string("model.readout"));
  return s;
}

SensitivityOptions sensitivity_options_from(const RunConfig& c) {
  SensitivityOptions s;
  s.zero_threshold = c.get_double("sensitivity.zero_threshold");
  if (s.zero_threshold < 0.0) throw ConfigError("sensitivity.zero_threshold", "sensitivity.zero_threshold must be >= 0");
  s.threads = checked_int(c, "threads", 1);
  return s;
}

DecayOptions decay_options_from(const RunConfig& c) {
  DecayOptions d;
  try {
    d.family = parse_graph_family(c.get_string("sensitivity.family"));
  } catch (const ValidationError& e) {
    throw ConfigError("sensitivity.family", std::string("sensitivity.family: ") + e.what());
  }
  d.r_min = checked_int(c, "sensitivity.r_min", 1);
  d.r_max = checked_int(c, "sensitivity.r_max", d.r_min);
  try {
    d.nu = DelayPolicy::parse(c.get_string("sensitivity.decay_nu"));
  } catch (const ValidationError& e) {
    throw ConfigError("sensitivity.decay_nu", std::string("sensitivity.decay_nu: ") + e.what());
  }
  return d;
}

}  // namespace nudrew
