#include "nudrew/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "nudrew/errors.hpp"
#include "nudrew/optim.hpp"

namespace nudrew {
namespace {

constexpr Arch kAllArchs[] = {Arch::kGcn, Arch::kDrewGcn, Arch::kDrewGin, Arch::kDrewGatedGcn, Arch::kSpGcn};

Tensor trainable(Tensor t) {
  t.set_requires_grad(true);
  return t;
}

Linear make_linear(std::int64_t in, std::int64_t out, Rng& rng) {
  return Linear{trainable(glorot_init({in, out}, rng)), trainable(Tensor({out}))};
}

Linear identity_linear(std::int64_t n) { return Linear{trainable(Tensor::identity(n)), trainable(Tensor({n}))}; }

Mlp make_mlp(std::int64_t d, Rng& rng) {
  Mlp m;
  m.first = make_linear(d, d, rng);
  m.second = make_linear(d, d, rng);
  return m;
}

NormParams make_norm(std::int64_t d) {
  NormParams n;
  n.gamma = trainable(Tensor({d}, 1.0));
  n.beta = trainable(Tensor({d}));
  n.stats.running_mean = Tensor({d});
  n.stats.running_var = Tensor({d}, 1.0);
  return n;
}

Var apply_mlp(Tape& tape, Mlp& mlp, const Var& x) {
  return apply_linear(tape, mlp.second, relu(apply_linear(tape, mlp.first, x)));
}

void check_input(const Model& model, const GraphOperators& ops, const Var& x) {
  const auto& s = x.shape();
  if (s.size() != 2 || s[0] != ops.num_nodes || s[1] != model.config().in_dim) {
    throw ValidationError("node features have shape " + shape_to_string(s) + ", expected [" +
                          std::to_string(ops.num_nodes) + "," + std::to_string(model.config().in_dim) + "]");
  }
}

// Batch norm on the full residual update, when enabled.
Var finish_layer(Model& model, Tape& tape, LayerParams& lp, const Var& h, bool training) {
  if (!model.config().batch_norm_enabled()) return h;
  return batch_norm(h, tape.parameter(lp.norm.gamma), tape.parameter(lp.norm.beta), lp.norm.stats, training);
}

Var zeros_like_rows(Tape& tape, std::int64_t n, std::int64_t d) { return tape.constant(Tensor({n, d})); }

// Shared by drew_gcn and the classical baseline.
ForwardResult gcn_family_forward(Model& model, Tape& tape, const GraphOperators& ops, const LayerSchedule& schedule,
                                 const Var& x, bool training) {
  const auto& cfg = model.config();
  check_input(model, ops, x);
  if (schedule.num_layers() != cfg.layers) throw ValidationError("schedule depth does not match model depth");
  ForwardResult out;
  out.states.push(apply_linear(tape, model.input, x));
  for (int l = 0; l < cfg.layers; ++l) {
    auto& lp = model.layers[static_cast<std::size_t>(l)];
    const Var h = out.states.get(l);
    Var agg;
    for (const auto& hs : schedule.layer(l)) {
      if (hs.k > ops.max_hop()) continue;
      if (hs.k > cfg.hops_at_layer(l)) throw ValidationError("schedule uses a hop without weights");
      Tensor& w = lp.hop_weights[cfg.shares_weights() ? 0 : static_cast<std::size_t>(hs.k - 1)];
      Var term = matmul(spmm(ops.gamma[static_cast<std::size_t>(hs.k - 1)], out.states.get(hs.source)),
                        tape.parameter(w));
      agg = agg.valid() ? add(agg, term) : term;
    }
    if (!agg.valid()) agg = zeros_like_rows(tape, ops.num_nodes, cfg.hidden);
    Var next = cfg.linear_probe ? agg : add(h, relu(agg));
    out.states.push(finish_layer(model, tape, lp, next, training));
  }
  out.embeddings = out.states.get(cfg.layers);
  return out;
}

}  // namespace

std::string_view arch_name(Arch arch) {
  switch (arch) {
    case Arch::kGcn:
      return "gcn";
    case Arch::kDrewGcn:
      return "drew_gcn";
    case Arch::kDrewGin:
      return "drew_gin";
    case Arch::kDrewGatedGcn:
      return "drew_gatedgcn";
    case Arch::kSpGcn:
      return "sp_gcn";
  }
  return "?";
}

Arch parse_arch(std::string_view name) {
  for (auto a : kAllArchs) {
    if (arch_name(a) == name) return a;
  }
  throw ValidationError("unknown arch '" + std::string(name) + "'");
}

bool is_drew(Arch arch) {
  return arch == Arch::kDrewGcn || arch == Arch::kDrewGin || arch == Arch::kDrewGatedGcn;
}

std::string_view readout_site_name(ReadoutSite site) { return site == ReadoutSite::kTarget ? "target" : "source"; }

ReadoutSite parse_readout_site(std::string_view name) {
  if (name == "target") return ReadoutSite::kTarget;
  if (name == "source") return ReadoutSite::kSource;
  throw ValidationError("unknown readout site '" + std::string(name) + "'");
}

bool ModelConfig::shares_weights() const {
  if (weight_sharing.has_value()) return *weight_sharing;
  return arch == Arch::kDrewGatedGcn;
}

int ModelConfig::hops_at_layer(int l) const {
  switch (arch) {
    case Arch::kGcn:
      return 1;
    case Arch::kSpGcn:
      return k_cap;
    default:
      return k_cap > 0 ? std::min(l + 1, k_cap) : l + 1;
  }
}

void ModelConfig::validate() const {
  if (layers < 1) throw ValidationError("layers must be >= 1");
  if (hidden < 1) throw ValidationError("hidden must be >= 1");
  if (in_dim < 1) throw ValidationError("in_dim must be >= 1");
  if (out_dim < 1) throw ValidationError("out_dim must be >= 1");
  if (k_cap < 0) throw ValidationError("k_cap must be >= 0");
  if (arch == Arch::kSpGcn && k_cap < 1) throw ValidationError("sp_gcn needs k_cap (k_max) >= 1");
  if (gate_eps < 0.0) throw ValidationError("gate_eps must be >= 0");
  if (arch == Arch::kDrewGatedGcn && weight_sharing.has_value() && !*weight_sharing) {
    throw ValidationError("drew_gatedgcn always shares weights across hops");
  }
  if (linear_probe) {
    if (arch != Arch::kGcn && arch != Arch::kDrewGcn) {
      throw ValidationError("linear probe is defined for gcn and drew_gcn only");
    }
    if (in_dim != hidden) throw ValidationError("linear probe needs in_dim == hidden");
  }
}

int max_scheduled_hop(const ModelConfig& config) {
  if (config.arch == Arch::kSpGcn) return config.k_cap;
  if (is_drew(config.arch)) return config.k_cap > 0 ? std::min(config.k_cap, config.layers) : config.layers;
  return 1;
}

GraphOperators make_operators(const Graph& g, const HopIndex& hi, int k_limit) {
  if (hi.num_nodes() != g.num_nodes()) throw ValidationError("hop index does not match graph");
  GraphOperators ops;
  ops.num_nodes = g.num_nodes();
  ops.diameter = eccentricity_cap(g, hi);
  const int kmax = std::min(k_limit, hi.k_max());
  for (int k = 1; k <= kmax; ++k) {
    ops.gamma.push_back(hop_matrix(g, hi, k).to_sparse());
    ops.shell.push_back(shell_matrix(hi, k));
    const auto& s = ops.shell.back();
    std::vector<std::int32_t> rows(static_cast<std::size_t>(s.nnz()));
    for (std::int64_t r = 0; r < s.rows; ++r) {
      for (auto p = s.offsets[r]; p < s.offsets[r + 1]; ++p) rows[static_cast<std::size_t>(p)] = static_cast<std::int32_t>(r);
    }
    ops.shell_rows.push_back(std::move(rows));
  }
  return ops;
}

GraphOperators batch_operators(std::span<const GraphOperators* const> parts) {
  GraphOperators out;
  std::size_t kmax = 0;
  for (const auto* p : parts) {
    out.num_nodes += p->num_nodes;
    out.diameter = std::max(out.diameter, p->diameter);
    kmax = std::max(kmax, p->gamma.size());
  }
  auto stack = [&](auto member, std::size_t k) {
    SparseMatrix m = SparseMatrix::empty(out.num_nodes, out.num_nodes);
    m.offsets.assign(1, 0);
    std::int32_t base = 0;
    for (const auto* p : parts) {
      const auto& v = p->*member;
      if (k < v.size()) {
        const SparseMatrix& s = v[k];
        for (std::int64_t r = 0; r < s.rows; ++r) {
          for (auto q = s.offsets[r]; q < s.offsets[r + 1]; ++q) {
            m.indices.push_back(s.indices[static_cast<std::size_t>(q)] + base);
            m.values.push_back(s.values[static_cast<std::size_t>(q)]);
          }
          m.offsets.push_back(m.nnz());
        }
      } else {
        for (NodeId r = 0; r < p->num_nodes; ++r) m.offsets.push_back(m.nnz());
      }
      base += p->num_nodes;
    }
    return m;
  };
  for (std::size_t k = 0; k < kmax; ++k) {
    out.gamma.push_back(stack(&GraphOperators::gamma, k));
    out.shell.push_back(stack(&GraphOperators::shell, k));
    const auto& s = out.shell.back();
    std::vector<std::int32_t> rows(static_cast<std::size_t>(s.nnz()));
    for (std::int64_t r = 0; r < s.rows; ++r) {
      for (auto p = s.offsets[r]; p < s.offsets[r + 1]; ++p) rows[static_cast<std::size_t>(p)] = static_cast<std::int32_t>(r);
    }
    out.shell_rows.push_back(std::move(rows));
  }
  return out;
}

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  if (config_.linear_probe) {
    init_identity();
  } else {
    init_random(seed);
  }
}

void Model::init_random(std::uint64_t seed) {
  Rng rng(seed);
  const std::int64_t d = config_.hidden;
  input = make_linear(config_.in_dim, d, rng);
  layers.resize(static_cast<std::size_t>(config_.layers));
  for (int l = 0; l < config_.layers; ++l) {
    auto& lp = layers[static_cast<std::size_t>(l)];
    const int units = config_.shares_weights() ? 1 : config_.hops_at_layer(l);
    switch (config_.arch) {
      case Arch::kGcn:
      case Arch::kDrewGcn:
        for (int k = 0; k < units; ++k) lp.hop_weights.push_back(trainable(glorot_init({d, d}, rng)));
        break;
      case Arch::kSpGcn:
        lp.hop_weights.push_back(trainable(glorot_init({d, d}, rng)));
        lp.alpha_raw = trainable(Tensor({1, config_.k_cap}));
        break;
      case Arch::kDrewGin:
        lp.self_mlp = make_mlp(d, rng);
        for (int k = 0; k < units; ++k) lp.hop_mlps.push_back(make_mlp(d, rng));
        break;
      case Arch::kDrewGatedGcn:
        lp.w1 = trainable(glorot_init({d, d}, rng));
        lp.w2 = trainable(glorot_init({d, d}, rng));
        lp.w3 = trainable(glorot_init({d, d}, rng));
        lp.w4 = trainable(glorot_init({d, d}, rng));
        break;
    }
    if (config_.batch_norm_enabled()) lp.norm = make_norm(d);
  }
  head = make_linear(d, config_.out_dim, rng);
}

void Model::init_identity() {
  const std::int64_t d = config_.hidden;
  input = identity_linear(d);
  layers.resize(static_cast<std::size_t>(config_.layers));
  for (int l = 0; l < config_.layers; ++l) {
    auto& lp = layers[static_cast<std::size_t>(l)];
    const int units = config_.shares_weights() ? 1 : config_.hops_at_layer(l);
    for (int k = 0; k < units; ++k) lp.hop_weights.push_back(trainable(Tensor::identity(d)));
  }
  if (config_.out_dim == config_.hidden) {
    head = identity_linear(d);
  } else {
    Rng rng(0);
    head = make_linear(d, config_.out_dim, rng);
  }
}

std::vector<std::pair<std::string, Tensor*>> Model::named_parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  auto lin = [&](const std::string& prefix, Linear& m) {
    out.emplace_back(prefix + ".weight", &m.weight);
    out.emplace_back(prefix + ".bias", &m.bias);
  };
  lin("input", input);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& lp = layers[l];
    const std::string p = "layers." + std::to_string(l);
    for (std::size_t k = 0; k < lp.hop_weights.size(); ++k) {
      out.emplace_back(p + ".hop" + std::to_string(k + 1) + ".weight", &lp.hop_weights[k]);
    }
    if (config_.arch == Arch::kDrewGin) {
      lin(p + ".self.fc1", lp.self_mlp.first);
      lin(p + ".self.fc2", lp.self_mlp.second);
      for (std::size_t k = 0; k < lp.hop_mlps.size(); ++k) {
        const std::string hp = p + ".hop" + std::to_string(k + 1);
        lin(hp + ".fc1", lp.hop_mlps[k].first);
        lin(hp + ".fc2", lp.hop_mlps[k].second);
      }
    }
    if (config_.arch == Arch::kDrewGatedGcn) {
      out.emplace_back(p + ".w1", &lp.w1);
      out.emplace_back(p + ".w2", &lp.w2);
      out.emplace_back(p + ".w3", &lp.w3);
      out.emplace_back(p + ".w4", &lp.w4);
    }
    if (config_.arch == Arch::kSpGcn) out.emplace_back(p + ".alpha_raw", &lp.alpha_raw);
    if (config_.batch_norm_enabled()) {
      out.emplace_back(p + ".norm.gamma", &lp.norm.gamma);
      out.emplace_back(p + ".norm.beta", &lp.norm.beta);
    }
  }
  lin("head", head);
  return out;
}

std::vector<Tensor*> Model::parameters() {
  std::vector<Tensor*> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::int64_t Model::num_parameters() {
  std::int64_t n = 0;
  for (auto* t : parameters()) n += t->numel();
  return n;
}

NamedTensors Model::state() {
  NamedTensors out;
  for (auto& [name, t] : named_parameters()) out.emplace_back(name, Tensor(t->shape(), {t->data().begin(), t->data().end()}));
  if (config_.batch_norm_enabled()) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string p = "layers." + std::to_string(l) + ".norm.";
      out.emplace_back(p + "running_mean", layers[l].norm.stats.running_mean);
      out.emplace_back(p + "running_var", layers[l].norm.stats.running_var);
    }
  }
  return out;
}

void Model::load_state(const NamedTensors& state) {
  std::map<std::string, Tensor*> slots;
  for (auto& [name, t] : named_parameters()) slots[name] = t;
  if (config_.batch_norm_enabled()) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string p = "layers." + std::to_string(l) + ".norm.";
      slots[p + "running_mean"] = &layers[l].norm.stats.running_mean;
      slots[p + "running_var"] = &layers[l].norm.stats.running_var;
    }
  }
  if (state.size() != slots.size()) {
    throw ValidationError("checkpoint has " + std::to_string(state.size()) + " tensors, model expects " +
                          std::to_string(slots.size()));
  }
  for (const auto& [name, t] : state) {
    auto it = slots.find(name);
    if (it == slots.end()) throw ValidationError("unexpected tensor '" + name + "' in checkpoint");
    if (it->second->shape() != t.shape()) {
      throw DimensionError("tensor '" + name + "' has shape " + shape_to_string(t.shape()) + ", expected " +
                           shape_to_string(it->second->shape()));
    }
    std::copy(t.data().begin(), t.data().end(), it->second->data().begin());
  }
}

LayerSchedule Model::schedule_for(const GraphOperators& ops) const {
  int cap = 1;
  if (is_drew(config_.arch)) {
    cap = config_.k_cap > 0 ? config_.k_cap : config_.layers;
    cap = std::max(1, std::min({cap, ops.diameter, ops.max_hop()}));
  }
  return build_schedule(config_.layers, config_.nu, cap);
}

ForwardResult Model::forward(Tape& tape, const GraphOperators& ops, const Var& x, bool training) {
  switch (config_.arch) {
    case Arch::kGcn:
      return classical_gcn_forward(*this, tape, ops, x, training);
    case Arch::kSpGcn:
      return sp_gcn_forward(*this, tape, ops, x, training);
    case Arch::kDrewGcn:
      return drew_gcn_forward(*this, tape, ops, schedule_for(ops), x, training);
    case Arch::kDrewGin:
      return drew_gin_forward(*this, tape, ops, schedule_for(ops), x, training);
    case Arch::kDrewGatedGcn:
      return drew_gatedgcn_forward(*this, tape, ops, schedule_for(ops), x, training);
  }
  throw ValidationError("unknown arch");
}

ForwardResult drew_gcn_forward(Model& model, Tape& tape, const GraphOperators& ops, const LayerSchedule& schedule,
                               const Var& x, bool training) {
  return gcn_family_forward(model, tape, ops, schedule, x, training);
}

ForwardResult classical_gcn_forward(Model& model, Tape& tape, const GraphOperators& ops, const Var& x,
                                    bool training) {
  const auto schedule = build_schedule(model.config().layers, DelayPolicy::infinite(), 1);
  return gcn_family_forward(model, tape, ops, schedule, x, training);
}

ForwardResult drew_gin_forward(Model& model, Tape& tape, const GraphOperators& ops, const LayerSchedule& schedule,
                               const Var& x, bool training) {
  const auto& cfg = model.config();
  if (cfg.arch != Arch::kDrewGin) throw ValidationError("drew_gin_forward needs a drew_gin model");
  check_input(model, ops, x);
  if (schedule.num_layers() != cfg.layers) throw ValidationError("schedule depth does not match model depth");
  ForwardResult out;
  out.states.push(apply_linear(tape, model.input, x));
  for (int l = 0; l < cfg.layers; ++l) {
    auto& lp = model.layers[static_cast<std::size_t>(l)];
    Var next = apply_mlp(tape, lp.self_mlp, out.states.get(l));
    if (cfg.gin_eps != 0.0) next = scale(next, 1.0 + cfg.gin_eps);
    for (const auto& hs : schedule.layer(l)) {
      if (hs.k > ops.max_hop()) continue;
      if (hs.k > cfg.hops_at_layer(l)) throw ValidationError("schedule uses a hop without weights");
      Mlp& mlp = lp.hop_mlps[cfg.shares_weights() ? 0 : static_cast<std::size_t>(hs.k - 1)];
      next = add(next, spmm(ops.shell[static_cast<std::size_t>(hs.k - 1)],
                            apply_mlp(tape, mlp, out.states.get(hs.source))));
    }
    out.states.push(finish_layer(model, tape, lp, next, training));
  }
  out.embeddings = out.states.get(cfg.layers);
  return out;
}

ForwardResult drew_gatedgcn_forward(Model& model, Tape& tape, const GraphOperators& ops,
                                    const LayerSchedule& schedule, const Var& x, bool training) {
  const auto& cfg = model.config();
  if (cfg.arch != Arch::kDrewGatedGcn) throw ValidationError("drew_gatedgcn_forward needs a drew_gatedgcn model");
  check_input(model, ops, x);
  if (schedule.num_layers() != cfg.layers) throw ValidationError("schedule depth does not match model depth");
  ForwardResult out;
  out.states.push(apply_linear(tape, model.input, x));
  for (int l = 0; l < cfg.layers; ++l) {
    auto& lp = model.layers[static_cast<std::size_t>(l)];
    const Var h = out.states.get(l);
    const Var w2 = tape.parameter(lp.w2);
    const Var w4 = tape.parameter(lp.w4);
    Var next = matmul(h, tape.parameter(lp.w1));
    const Var hw3 = matmul(h, tape.parameter(lp.w3));
    // Projections of each delayed state are reused across hops that read it.
    std::map<int, std::pair<Var, Var>> projected;
    for (const auto& hs : schedule.layer(l)) {
      if (hs.k > ops.max_hop()) continue;
      const auto& shell = ops.shell[static_cast<std::size_t>(hs.k - 1)];
      if (shell.nnz() == 0) continue;
      auto it = projected.find(hs.source);
      if (it == projected.end()) {
        const Var src = out.states.get(hs.source);
        it = projected.emplace(hs.source, std::make_pair(matmul(src, w2), matmul(src, w4))).first;
      }
      const auto& rows = ops.shell_rows[static_cast<std::size_t>(hs.k - 1)];
      const auto& cols = shell.indices;
      const Var gate_hat = sigmoid(add(gather_rows(hw3, rows), gather_rows(it->second.second, cols)));
      const Var denom = add_scalar(gather_rows(segment_sum(gate_hat, rows, ops.num_nodes), rows), cfg.gate_eps);
      const Var msg = mul(div(gate_hat, denom), gather_rows(it->second.first, cols));
      next = add(next, segment_sum(msg, rows, ops.num_nodes));
    }
    out.states.push(finish_layer(model, tape, lp, next, training));
  }
  out.embeddings = out.states.get(cfg.layers);
  return out;
}

ForwardResult sp_gcn_forward(Model& model, Tape& tape, const GraphOperators& ops, const Var& x, bool training) {
  const auto& cfg = model.config();
  if (cfg.arch != Arch::kSpGcn) throw ValidationError("sp_gcn_forward needs an sp_gcn model");
  check_input(model, ops, x);
  ForwardResult out;
  out.states.push(apply_linear(tape, model.input, x));
  for (int l = 0; l < cfg.layers; ++l) {
    auto& lp = model.layers[static_cast<std::size_t>(l)];
    const Var h = out.states.get(l);
    // W is shared across hops, so mix the hops first and multiply once.
    std::vector<const SparseMatrix*> mats;
    for (int k = 1; k <= cfg.k_cap && k <= ops.max_hop(); ++k) mats.push_back(&ops.gamma[static_cast<std::size_t>(k - 1)]);
    Var mixed;
    if (cfg.k_cap == 1 && !mats.empty()) {
      mixed = spmm(*mats[0], h);
    } else if (!mats.empty()) {
      const Var positive = softplus(tape.parameter(lp.alpha_raw));
      const Var alpha = mul_scalar(positive, div(tape.constant(Tensor({1, 1}, 1.0)), sum(positive, 1)));
      mixed = mixed_spmm(mats, slice_cols(alpha, 0, static_cast<std::int64_t>(mats.size())), h);
    }
    Var agg = mixed.valid() ? matmul(mixed, tape.parameter(lp.hop_weights[0])) : Var();
    if (!agg.valid()) agg = zeros_like_rows(tape, ops.num_nodes, cfg.hidden);
    out.states.push(finish_layer(model, tape, lp, add(h, relu(agg)), training));
  }
  out.embeddings = out.states.get(cfg.layers);
  return out;
}

Var apply_linear(Tape& tape, Linear& layer, const Var& x) {
  if (x.shape().size() != 2 || x.shape()[1] != layer.weight.shape()[0]) {
    throw ValidationError("linear layer expects " + std::to_string(layer.weight.shape()[0]) +
                          " input features, got shape " + shape_to_string(x.shape()));
  }
  return add_bias(matmul(x, tape.parameter(layer.weight)), tape.parameter(layer.bias));
}

Var readout_node(Tape& tape, Linear& head, const Var& embeddings, NodeId node) {
  const std::int32_t idx[] = {node};
  return readout_nodes(tape, head, embeddings, idx);
}

Var readout_nodes(Tape& tape, Linear& head, const Var& embeddings, std::span<const std::int32_t> nodes) {
  const auto n = embeddings.shape()[0];
  for (auto i : nodes) {
    if (i < 0 || i >= n) throw RangeError("readout node " + std::to_string(i) + " outside [0, " + std::to_string(n) + ")");
  }
  return apply_linear(tape, head, gather_rows(embeddings, nodes));
}

Var readout_mean(Tape& tape, Linear& head, const Var& embeddings) {
  return apply_linear(tape, head, mean(embeddings, 0));
}

std::vector<double> sp_alpha(const Tensor& alpha_raw) {
  Tape tape;
  const Var positive = softplus(tape.constant(alpha_raw));
  const Var total = sum(positive, 1);
  std::vector<double> out;
  for (std::int64_t k = 0; k < alpha_raw.numel(); ++k) {
    out.push_back(div(slice_cols(positive, k, k + 1), total).value().item());
  }
  return out;
}

std::int64_t message_weight_count(const ModelConfig& config) {
  std::int64_t n = 0;
  for (int l = 0; l < config.layers; ++l) {
    switch (config.arch) {
      case Arch::kGcn:
      case Arch::kSpGcn:
      case Arch::kDrewGatedGcn:
        n += 1;
        break;
      default:
        n += config.shares_weights() ? 1 : config.hops_at_layer(l);
    }
  }
  return n;
}

std::int64_t count_params(const ModelConfig& config) {
  config.validate();
  const std::int64_t d = config.hidden;
  std::int64_t n = config.in_dim * d + d + d * config.out_dim + config.out_dim;
  for (int l = 0; l < config.layers; ++l) {
    const std::int64_t units = config.shares_weights() ? 1 : config.hops_at_layer(l);
    switch (config.arch) {
      case Arch::kGcn:
        n += d * d;
        break;
      case Arch::kDrewGcn:
        n += units * d * d;
        break;
      case Arch::kSpGcn:
        n += d * d + config.k_cap;
        break;
      case Arch::kDrewGin:
        n += (1 + units) * (2 * d * d + 2 * d);
        break;
      case Arch::kDrewGatedGcn:
        n += 4 * d * d;
        break;
    }
    if (config.batch_norm_enabled()) n += 2 * d;
  }
  return n;
}

int solve_hidden_for_budget(ModelConfig config, std::int64_t target) {
  if (target < 1) throw ValidationError("parameter budget must be positive");
  int best = 1;
  std::int64_t best_gap = std::numeric_limits<std::int64_t>::max();
  // Counts grow monotonically in hidden, so stop once past the target.
  for (int d = 1;; ++d) {
    config.hidden = d;
    if (config.linear_probe) config.in_dim = d;
    const std::int64_t c = count_params(config);
    const std::int64_t gap = c > target ? c - target : target - c;
    if (gap < best_gap) {
      best_gap = gap;
      best = d;
    }
    if (c >= target) break;
  }
  return best;
}

}  // namespace nudrew
