#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "nudrew/graph.hpp"
#include "nudrew/hop_index.hpp"
#include "nudrew/model.hpp"

namespace nudrew {

inline constexpr int kNever = -1;

struct SensitivityOptions {
  // Norms at or below this count as zero when locating the first interaction.
  double zero_threshold = 1e-12;
  int threads = 1;
};

// per_layer[l](i, j) is the entrywise L1 norm of d h_i^(l) / d x_j, where x is
// the raw input and h^(0) its projection. Computed in eval mode.
struct SensitivityReport {
  std::string graph_id;
  ModelConfig config;
  std::uint64_t seed = 0;
  NodeId num_nodes = 0;
  double zero_threshold = 1e-12;
  std::vector<Tensor> per_layer;

  int layers() const { return static_cast<int>(per_layer.size()) - 1; }
  // Norms at the deepest computed layer.
  const Tensor& final() const { return per_layer.back(); }
};

// Exact Jacobian norms from one vector-Jacobian product per output coordinate,
// for layers 0..upto_layer (at most config().layers). The model is not modified.
SensitivityReport jacobian_norms(const Model& model, const Graph& g, const HopIndex& hi, const Tensor& x,
                                 int upto_layer, const SensitivityOptions& options = {});

// Smallest layer with a nonzero norm for (i, j), or kNever.
int first_interaction(const SensitivityReport& report, NodeId i, NodeId j);

// JSON with graph metadata, config, version, seed, the final S matrix and the
// first-interaction table.
void write_sensitivity_json(std::ostream& out, const SensitivityReport& report);

enum class GraphFamily { kBinaryTree, kCycle };

std::string_view graph_family_name(GraphFamily family);
GraphFamily parse_graph_family(std::string_view name);

struct DecayRow {
  int r = 0;
  double classical = 0.0;
  double drew = 0.0;
  // Gamma^r entry between the probed pair, the direct DRew term.
  double direct = 0.0;
  double ratio() const { return drew / classical; }
};

struct DecayOptions {
  GraphFamily family = GraphFamily::kBinaryTree;
  int r_min = 1;
  int r_max = 6;
  DelayPolicy nu = DelayPolicy::finite(1);
};

// Linear-probe sensitivity between a pair at distance r with L = r layers, for a
// classical GCN and a drew_gcn. Binary trees use one tree of depth r_max with the
// root against the leftmost node at depth r; cycles use C_{2r} with an antipodal pair.
std::vector<DecayRow> decay_comparison(const DecayOptions& options);

struct DecayChecks {
  bool drew_dominates_direct = true;
  bool ratio_nondecreasing = true;
};

// Ratio monotonicity is checked on rows with r >= ratio_from.
DecayChecks check_decay(const std::vector<DecayRow>& rows, int ratio_from = 2);

void write_decay_json(std::ostream& out, const DecayOptions& options, const std::vector<DecayRow>& rows);

}  // namespace nudrew
