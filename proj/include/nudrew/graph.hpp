#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "nudrew/random.hpp"

namespace nudrew {

using NodeId = std::int32_t;

struct Edge {
  std::int64_t u = 0;
  std::int64_t v = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

// Undirected simple graph stored as symmetric CSR adjacency. Neighbor lists are
// sorted. Isolated nodes and disconnected graphs are allowed.
class Graph {
 public:
  Graph() = default;

  NodeId num_nodes() const { return num_nodes_; }
  std::int64_t num_edges() const { return static_cast<std::int64_t>(edges_.size()); }
  // Canonical edge list: u < v, sorted lexicographically.
  const std::vector<Edge>& edges() const { return edges_; }
  std::span<const NodeId> neighbors(NodeId i) const;
  std::int32_t degree(NodeId i) const { return degree_[static_cast<std::size_t>(i)]; }
  const std::vector<std::int32_t>& degrees() const { return degree_; }
  const std::vector<std::int64_t>& csr_offsets() const { return offsets_; }
  const std::vector<NodeId>& csr_targets() const { return targets_; }

 private:
  friend Graph build_graph(std::span<const Edge> edges, std::int64_t n);

  NodeId num_nodes_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::int64_t> offsets_{0};
  std::vector<NodeId> targets_;
  std::vector<std::int32_t> degree_;
};

// Deduplicates and symmetrizes. Throws ValidationError on an endpoint outside
// [0, n) or a self-loop.
Graph build_graph(std::span<const Edge> edges, std::int64_t n);

// Edge-list text: first line "n m", then m lines "u v" (0-indexed).
Graph read_edge_list(std::istream& in);
Graph read_edge_list(const std::filesystem::path& path);
void write_edge_list(std::ostream& out, const Graph& g);
void write_edge_list(const std::filesystem::path& path, const Graph& g);

Graph path_graph(std::int64_t n);
Graph cycle_graph(std::int64_t n);
Graph star_graph(std::int64_t leaves);
// Complete binary tree with levels 0..depth, node 0 the root, children of i at 2i+1, 2i+2.
Graph complete_binary_tree(int depth);
Graph erdos_renyi(std::int64_t n, double p, Rng& rng);
// Node ids of part p are offset by the sizes of parts 0..p-1.
Graph disjoint_union(std::span<const Graph> parts);
// Relabels node i as perm[i].
Graph permute(const Graph& g, std::span<const NodeId> perm);

}  // namespace nudrew
