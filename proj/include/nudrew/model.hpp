#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nudrew/autograd.hpp"
#include "nudrew/checkpoint.hpp"
#include "nudrew/graph.hpp"
#include "nudrew/hop_index.hpp"
#include "nudrew/schedule.hpp"

namespace nudrew {

enum class Arch { kGcn, kDrewGcn, kDrewGin, kDrewGatedGcn, kSpGcn };

std::string_view arch_name(Arch arch);
Arch parse_arch(std::string_view name);
bool is_drew(Arch arch);

// Which node's embedding feeds the classification head in node-level tasks.
enum class ReadoutSite { kTarget, kSource };

std::string_view readout_site_name(ReadoutSite site);
ReadoutSite parse_readout_site(std::string_view name);

struct ModelConfig {
  Arch arch = Arch::kDrewGcn;
  int layers = 1;
  int hidden = 16;
  DelayPolicy nu = DelayPolicy::infinite();
  // Highest hop given its own weights (drew_*) or aggregated at every layer
  // (sp_gcn, where it is k_max). 0 means uncapped for drew_*.
  int k_cap = 0;
  int in_dim = 1;
  int out_dim = 1;
  // Unset: on for drew_gatedgcn, off otherwise.
  std::optional<bool> weight_sharing;
  bool use_batch_norm = true;
  double gin_eps = 0.0;
  double gate_eps = 1e-6;
  // Identity activation, identity square weights, no residual, no batch norm.
  bool linear_probe = false;
  ReadoutSite readout = ReadoutSite::kTarget;

  bool shares_weights() const;
  bool residual() const { return !linear_probe; }
  bool batch_norm_enabled() const { return use_batch_norm && !linear_probe; }
  // Number of hops with parameters at layer l.
  int hops_at_layer(int l) const;
  // Throws ValidationError on inconsistent settings.
  void validate() const;
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
};

struct Mlp {
  Linear first;
  Linear second;
};

struct NormParams {
  Tensor gamma;
  Tensor beta;
  BatchNormStats stats;
};

struct LayerParams {
  std::vector<Tensor> hop_weights;  // gcn, drew_gcn, sp_gcn
  std::vector<Mlp> hop_mlps;        // drew_gin
  Mlp self_mlp;                     // drew_gin
  Tensor w1, w2, w3, w4;            // drew_gatedgcn
  Tensor alpha_raw;                 // sp_gcn, [1, k_max]
  NormParams norm;
};

// Sparse propagation operators of one graph, or of a disjoint union batch.
struct GraphOperators {
  NodeId num_nodes = 0;
  // Largest hop with any nonempty shell.
  int diameter = 0;
  std::vector<SparseMatrix> gamma;  // gamma[k - 1] is the normalized hop-k matrix
  std::vector<SparseMatrix> shell;  // shell[k - 1] is the 0/1 hop-k adjacency
  std::vector<std::vector<std::int32_t>> shell_rows;  // row index of every shell[k - 1] entry

  int max_hop() const { return static_cast<int>(gamma.size()); }
};

// Largest hop any layer of the model aggregates over.
int max_scheduled_hop(const ModelConfig& config);

// Operators for hops 1..min(k_limit, hi.k_max()).
GraphOperators make_operators(const Graph& g, const HopIndex& hi, int k_limit);
// Block-diagonal union; node ids of part p are offset by the sizes of earlier parts.
GraphOperators batch_operators(std::span<const GraphOperators* const> parts);

struct ForwardResult {
  Var embeddings;
  // h^(0) (projected input) through h^(L).
  DelayBuffer states;
};

class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  std::vector<std::pair<std::string, Tensor*>> named_parameters();
  std::vector<Tensor*> parameters();
  std::int64_t num_parameters();
  // Trainable parameters plus batch-norm running statistics.
  NamedTensors state();
  void load_state(const NamedTensors& state);

  // Node embeddings after config().layers layers. Builds the layer schedule
  // from the config and the graph diameter.
  ForwardResult forward(Tape& tape, const GraphOperators& ops, const Var& x, bool training);
  LayerSchedule schedule_for(const GraphOperators& ops) const;

  Linear input;
  std::vector<LayerParams> layers;
  Linear head;

 private:
  void init_random(std::uint64_t seed);
  void init_identity();

  ModelConfig config_;
};

ForwardResult drew_gcn_forward(Model& model, Tape& tape, const GraphOperators& ops,
                               const LayerSchedule& schedule, const Var& x, bool training);
ForwardResult drew_gin_forward(Model& model, Tape& tape, const GraphOperators& ops,
                               const LayerSchedule& schedule, const Var& x, bool training);
ForwardResult drew_gatedgcn_forward(Model& model, Tape& tape, const GraphOperators& ops,
                                    const LayerSchedule& schedule, const Var& x, bool training);
ForwardResult classical_gcn_forward(Model& model, Tape& tape, const GraphOperators& ops, const Var& x,
                                    bool training);
ForwardResult sp_gcn_forward(Model& model, Tape& tape, const GraphOperators& ops, const Var& x, bool training);

// x W + b.
Var apply_linear(Tape& tape, Linear& layer, const Var& x);

// Head applied to one node's embedding: [1, out_dim].
Var readout_node(Tape& tape, Linear& head, const Var& embeddings, NodeId node);
// Head applied to the listed rows: [rows, out_dim].
Var readout_nodes(Tape& tape, Linear& head, const Var& embeddings, std::span<const std::int32_t> nodes);
// Head applied to the mean-pooled embedding: [1, out_dim].
Var readout_mean(Tape& tape, Linear& head, const Var& embeddings);

// Simplex weights softplus(raw) / sum(softplus(raw)).
std::vector<double> sp_alpha(const Tensor& alpha_raw);

std::int64_t count_params(const ModelConfig& config);
// Per-hop weight units (W_k or MLP_k) across all message-passing layers.
std::int64_t message_weight_count(const ModelConfig& config);
// Hidden size whose parameter count is nearest to target.
int solve_hidden_for_budget(ModelConfig config, std::int64_t target);

}  // namespace nudrew
