#include "nudrew/graph.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "nudrew/errors.hpp"

namespace nudrew {

std::span<const NodeId> Graph::neighbors(NodeId i) const {
  if (i < 0 || i >= num_nodes_) throw RangeError("node " + std::to_string(i) + " outside graph");
  const auto begin = offsets_[static_cast<std::size_t>(i)];
  const auto end = offsets_[static_cast<std::size_t>(i) + 1];
  return {targets_.data() + begin, static_cast<std::size_t>(end - begin)};
}

Graph build_graph(std::span<const Edge> edges, std::int64_t n) {
  if (n < 0 || n > INT32_MAX) throw ValidationError("node count " + std::to_string(n) + " out of range");
  std::vector<Edge> canon;
  canon.reserve(edges.size());
  for (const auto& e : edges) {
    if (e.u < 0 || e.u >= n || e.v < 0 || e.v >= n) {
      throw ValidationError("edge (" + std::to_string(e.u) + ", " + std::to_string(e.v) +
                            ") has an endpoint outside [0, " + std::to_string(n) + ")");
    }
    if (e.u == e.v) throw ValidationError("self-loop at node " + std::to_string(e.u));
    canon.push_back(e.u < e.v ? e : Edge{e.v, e.u});
  }
  std::sort(canon.begin(), canon.end(), [](const Edge& a, const Edge& b) {
    return a.u != b.u ? a.u < b.u : a.v < b.v;
  });
  canon.erase(std::unique(canon.begin(), canon.end()), canon.end());

  Graph g;
  g.num_nodes_ = static_cast<NodeId>(n);
  g.degree_.assign(static_cast<std::size_t>(n), 0);
  for (const auto& e : canon) {
    ++g.degree_[static_cast<std::size_t>(e.u)];
    ++g.degree_[static_cast<std::size_t>(e.v)];
  }
  g.offsets_.assign(static_cast<std::size_t>(n) + 1, 0);
  for (std::int64_t i = 0; i < n; ++i) g.offsets_[i + 1] = g.offsets_[i] + g.degree_[i];
  g.targets_.resize(static_cast<std::size_t>(g.offsets_.back()));
  std::vector<std::int64_t> cursor(g.offsets_.begin(), g.offsets_.end() - 1);
  for (const auto& e : canon) {
    g.targets_[cursor[e.u]++] = static_cast<NodeId>(e.v);
    g.targets_[cursor[e.v]++] = static_cast<NodeId>(e.u);
  }
  for (std::int64_t i = 0; i < n; ++i) {
    std::sort(g.targets_.begin() + g.offsets_[i], g.targets_.begin() + g.offsets_[i + 1]);
  }
  g.edges_ = std::move(canon);
  return g;
}

Graph read_edge_list(std::istream& in) {
  std::int64_t n = 0;
  std::int64_t m = 0;
  if (!(in >> n >> m)) throw ValidationError("edge list: missing 'n m' header");
  if (m < 0) throw ValidationError("edge list: negative edge count");
  std::vector<Edge> edges(static_cast<std::size_t>(m));
  for (std::int64_t e = 0; e < m; ++e) {
    if (!(in >> edges[e].u >> edges[e].v)) {
      throw ValidationError("edge list: expected " + std::to_string(m) + " edges, read " + std::to_string(e));
    }
  }
  return build_graph(edges, n);
}

Graph read_edge_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open edge list " + path.string());
  return read_edge_list(in);
}

void write_edge_list(std::ostream& out, const Graph& g) {
  out << g.num_nodes() << ' ' << g.num_edges() << '\n';
  for (const auto& e : g.edges()) out << e.u << ' ' << e.v << '\n';
}

void write_edge_list(const std::filesystem::path& path, const Graph& g) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
  write_edge_list(out, g);
}

Graph path_graph(std::int64_t n) {
  std::vector<Edge> edges;
  for (std::int64_t i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1});
  return build_graph(edges, n);
}

Graph cycle_graph(std::int64_t n) {
  if (n < 3) throw ValidationError("cycle needs at least 3 nodes");
  std::vector<Edge> edges;
  for (std::int64_t i = 0; i < n; ++i) edges.push_back({i, (i + 1) % n});
  return build_graph(edges, n);
}

Graph star_graph(std::int64_t leaves) {
  std::vector<Edge> edges;
  for (std::int64_t i = 1; i <= leaves; ++i) edges.push_back({0, i});
  return build_graph(edges, leaves + 1);
}

Graph complete_binary_tree(int depth) {
  if (depth < 0) throw ValidationError("tree depth must be non-negative");
  const std::int64_t n = (std::int64_t{1} << (depth + 1)) - 1;
  std::vector<Edge> edges;
  for (std::int64_t i = 1; i < n; ++i) edges.push_back({(i - 1) / 2, i});
  return build_graph(edges, n);
}

Graph erdos_renyi(std::int64_t n, double p, Rng& rng) {
  std::vector<Edge> edges;
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = i + 1; j < n; ++j) {
      if (rng.uniform() < p) edges.push_back({i, j});
    }
  }
  return build_graph(edges, n);
}

Graph disjoint_union(std::span<const Graph> parts) {
  std::vector<Edge> edges;
  std::int64_t offset = 0;
  for (const auto& g : parts) {
    for (const auto& e : g.edges()) edges.push_back({e.u + offset, e.v + offset});
    offset += g.num_nodes();
  }
  return build_graph(edges, offset);
}

Graph permute(const Graph& g, std::span<const NodeId> perm) {
  if (static_cast<std::int64_t>(perm.size()) != g.num_nodes()) {
    throw ValidationError("permutation size does not match node count");
  }
  std::vector<char> seen(perm.size(), 0);
  for (auto p : perm) {
    if (p < 0 || p >= g.num_nodes() || seen[static_cast<std::size_t>(p)]) {
      throw ValidationError("not a permutation of the node set");
    }
    seen[static_cast<std::size_t>(p)] = 1;
  }
  std::vector<Edge> edges;
  for (const auto& e : g.edges()) edges.push_back({perm[e.u], perm[e.v]});
  return build_graph(edges, g.num_nodes());
}

}  // namespace nudrew
