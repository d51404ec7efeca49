#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "nudrew/graph.hpp"
#include "nudrew/tensor.hpp"

namespace nudrew {

inline constexpr int kHopIndexFormatVersion = 1;
// Graphs up to this size also keep a dense distance table.
inline constexpr NodeId kDenseDistanceLimit = 4096;

// Exact-distance shells N_k(i) = {j : d(i, j) = k} for k in [1, k_max].
class HopIndex {
 public:
  HopIndex() = default;

  int k_max() const { return k_max_; }
  NodeId num_nodes() const { return num_nodes_; }
  // Sorted members of N_k(i). Throws RangeError for k outside [1, k_max].
  std::span<const NodeId> shell(NodeId i, int k) const;
  // Nodes at a finite distance greater than k_max.
  std::int64_t beyond_cap(NodeId i) const { return beyond_cap_[static_cast<std::size_t>(i)]; }
  // Nodes in a different connected component.
  std::int64_t unreachable(NodeId i) const { return unreachable_[static_cast<std::size_t>(i)]; }
  bool has_dense_distances() const { return !dist_.empty(); }
  // Shortest-path distance if it is at most k_max (or known from the dense table).
  std::optional<int> distance(NodeId i, NodeId j) const;

  friend bool operator==(const HopIndex&, const HopIndex&) = default;

 private:
  friend HopIndex compute_hop_index(const Graph& g, int k_max);
  friend HopIndex read_hop_index(std::istream& in);

  std::size_t slot(NodeId i, int k) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(k_max_) + static_cast<std::size_t>(k - 1);
  }

  int k_max_ = 0;
  NodeId num_nodes_ = 0;
  std::vector<std::int64_t> offsets_{0};
  std::vector<NodeId> members_;
  std::vector<std::int64_t> beyond_cap_;
  std::vector<std::int64_t> unreachable_;
  // Row-major n x n, -1 for unreachable. Empty above kDenseDistanceLimit.
  std::vector<std::int32_t> dist_;
};

// One breadth-first search per source node.
HopIndex compute_hop_index(const Graph& g, int k_max);

// Largest k with a nonempty shell anywhere in the index (0 for edgeless graphs).
int eccentricity_cap(const Graph& g, const HopIndex& hi);

struct HopEntry {
  NodeId i = 0;
  NodeId j = 0;
  double gamma = 0.0;
};

// Degree-normalized hop matrix: gamma_ij = 1 / sqrt(d_i d_j) for d(i, j) = k,
// entries sorted by (i, j).
struct HopMatrix {
  int k = 0;
  NodeId num_nodes = 0;
  std::vector<HopEntry> entries;

  SparseMatrix to_sparse() const;
};

HopMatrix hop_matrix(const Graph& g, const HopIndex& hi, int k);
// Unweighted 0/1 adjacency of the k-th shells.
SparseMatrix shell_matrix(const HopIndex& hi, int k);

// Text cache: "nudrew-hop-index <version>" header, then the shell table.
void write_hop_index(std::ostream& out, const HopIndex& hi);
HopIndex read_hop_index(std::istream& in);
void save_hop_index(const std::filesystem::path& path, const HopIndex& hi);
HopIndex load_hop_index(const std::filesystem::path& path);

}  // namespace nudrew
