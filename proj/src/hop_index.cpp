#include "nudrew/hop_index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "nudrew/errors.hpp"

namespace nudrew {

std::span<const NodeId> HopIndex::shell(NodeId i, int k) const {
  if (k < 1 || k > k_max_) {
    throw RangeError("hop " + std::to_string(k) + " outside [1, " + std::to_string(k_max_) + "]");
  }
  if (i < 0 || i >= num_nodes_) throw RangeError("node " + std::to_string(i) + " outside hop index");
  const auto s = slot(i, k);
  return {members_.data() + offsets_[s], static_cast<std::size_t>(offsets_[s + 1] - offsets_[s])};
}

std::optional<int> HopIndex::distance(NodeId i, NodeId j) const {
  if (i < 0 || i >= num_nodes_ || j < 0 || j >= num_nodes_) throw RangeError("node outside hop index");
  if (i == j) return 0;
  if (!dist_.empty()) {
    const auto d = dist_[static_cast<std::size_t>(i) * static_cast<std::size_t>(num_nodes_) +
                         static_cast<std::size_t>(j)];
    if (d < 0) return std::nullopt;
    return d;
  }
  for (int k = 1; k <= k_max_; ++k) {
    auto s = shell(i, k);
    if (std::binary_search(s.begin(), s.end(), j)) return k;
  }
  return std::nullopt;
}

HopIndex compute_hop_index(const Graph& g, int k_max) {
  if (k_max < 1) throw ValidationError("k_max must be at least 1");
  const NodeId n = g.num_nodes();
  HopIndex hi;
  hi.k_max_ = k_max;
  hi.num_nodes_ = n;
  hi.offsets_.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(k_max) + 1, 0);
  hi.beyond_cap_.assign(static_cast<std::size_t>(n), 0);
  hi.unreachable_.assign(static_cast<std::size_t>(n), 0);
  const bool dense = n <= kDenseDistanceLimit;
  if (dense) hi.dist_.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), -1);

  std::vector<std::int32_t> dist(static_cast<std::size_t>(n), -1);
  std::vector<NodeId> queue;
  queue.reserve(static_cast<std::size_t>(n));
  std::vector<std::vector<NodeId>> shells(static_cast<std::size_t>(k_max));
  for (NodeId src = 0; src < n; ++src) {
    for (auto& s : shells) s.clear();
    queue.clear();
    queue.push_back(src);
    dist[static_cast<std::size_t>(src)] = 0;
    std::int64_t reached = 1;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const NodeId u = queue[head];
      const auto du = dist[static_cast<std::size_t>(u)];
      for (NodeId v : g.neighbors(u)) {
        if (dist[static_cast<std::size_t>(v)] >= 0) continue;
        dist[static_cast<std::size_t>(v)] = du + 1;
        queue.push_back(v);
        ++reached;
        if (du + 1 <= k_max) {
          shells[static_cast<std::size_t>(du)].push_back(v);
        } else {
          ++hi.beyond_cap_[static_cast<std::size_t>(src)];
        }
      }
    }
    hi.unreachable_[static_cast<std::size_t>(src)] = n - reached;
    for (int k = 1; k <= k_max; ++k) {
      auto& s = shells[static_cast<std::size_t>(k - 1)];
      std::sort(s.begin(), s.end());
      hi.members_.insert(hi.members_.end(), s.begin(), s.end());
      hi.offsets_[hi.slot(src, k) + 1] = static_cast<std::int64_t>(hi.members_.size());
    }
    for (NodeId v : queue) {
      if (dense) {
        hi.dist_[static_cast<std::size_t>(src) * static_cast<std::size_t>(n) + static_cast<std::size_t>(v)] =
            dist[static_cast<std::size_t>(v)];
      }
      dist[static_cast<std::size_t>(v)] = -1;
    }
  }
  return hi;
}

int eccentricity_cap(const Graph& g, const HopIndex& hi) {
  if (g.num_nodes() != hi.num_nodes()) throw ValidationError("hop index built for a different graph");
  int cap = 0;
  for (NodeId i = 0; i < hi.num_nodes(); ++i) {
    for (int k = hi.k_max(); k > cap; --k) {
      if (!hi.shell(i, k).empty()) {
        cap = k;
        break;
      }
    }
  }
  return cap;
}

SparseMatrix HopMatrix::to_sparse() const {
  SparseMatrix m = SparseMatrix::empty(num_nodes, num_nodes);
  for (const auto& e : entries) ++m.offsets[static_cast<std::size_t>(e.i) + 1];
  for (NodeId i = 0; i < num_nodes; ++i) m.offsets[i + 1] += m.offsets[i];
  m.indices.reserve(entries.size());
  m.values.reserve(entries.size());
  for (const auto& e : entries) {
    m.indices.push_back(e.j);
    m.values.push_back(e.gamma);
  }
  return m;
}

HopMatrix hop_matrix(const Graph& g, const HopIndex& hi, int k) {
  if (g.num_nodes() != hi.num_nodes()) throw ValidationError("hop index built for a different graph");
  if (k < 1 || k > hi.k_max()) {
    throw RangeError("hop " + std::to_string(k) + " exceeds k_max " + std::to_string(hi.k_max()));
  }
  HopMatrix m;
  m.k = k;
  m.num_nodes = g.num_nodes();
  for (NodeId i = 0; i < g.num_nodes(); ++i) {
    for (NodeId j : hi.shell(i, k)) {
      const double dd = static_cast<double>(g.degree(i)) * static_cast<double>(g.degree(j));
      m.entries.push_back({i, j, 1.0 / std::sqrt(dd)});
    }
  }
  return m;
}

SparseMatrix shell_matrix(const HopIndex& hi, int k) {
  SparseMatrix m = SparseMatrix::empty(hi.num_nodes(), hi.num_nodes());
  for (NodeId i = 0; i < hi.num_nodes(); ++i) {
    auto s = hi.shell(i, k);
    m.indices.insert(m.indices.end(), s.begin(), s.end());
    m.values.insert(m.values.end(), s.size(), 1.0);
    m.offsets[static_cast<std::size_t>(i) + 1] = static_cast<std::int64_t>(m.indices.size());
  }
  return m;
}

void write_hop_index(std::ostream& out, const HopIndex& hi) {
  out << "nudrew-hop-index " << kHopIndexFormatVersion << '\n';
  out << hi.num_nodes() << ' ' << hi.k_max() << ' ' << (hi.has_dense_distances() ? 1 : 0) << '\n';
  for (NodeId i = 0; i < hi.num_nodes(); ++i) {
    out << hi.unreachable(i) << ' ' << hi.beyond_cap(i);
    for (int k = 1; k <= hi.k_max(); ++k) {
      auto s = hi.shell(i, k);
      out << " | " << s.size();
      for (NodeId j : s) out << ' ' << j;
    }
    out << '\n';
  }
  if (hi.has_dense_distances()) {
    for (NodeId i = 0; i < hi.num_nodes(); ++i) {
      for (NodeId j = 0; j < hi.num_nodes(); ++j) {
        auto d = hi.distance(i, j);
        out << (j ? " " : "") << (d ? *d : -1);
      }
      out << '\n';
    }
  }
}

HopIndex read_hop_index(std::istream& in) {
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != "nudrew-hop-index") throw ValidationError("hop index: bad header");
  if (version != kHopIndexFormatVersion) {
    throw ValidationError("hop index: unsupported format version " + std::to_string(version));
  }
  HopIndex hi;
  int dense = 0;
  if (!(in >> hi.num_nodes_ >> hi.k_max_ >> dense) || hi.k_max_ < 1 || hi.num_nodes_ < 0) {
    throw ValidationError("hop index: bad dimensions");
  }
  const auto n = static_cast<std::size_t>(hi.num_nodes_);
  hi.offsets_.assign(n * static_cast<std::size_t>(hi.k_max_) + 1, 0);
  hi.beyond_cap_.assign(n, 0);
  hi.unreachable_.assign(n, 0);
  for (NodeId i = 0; i < hi.num_nodes_; ++i) {
    in >> hi.unreachable_[i] >> hi.beyond_cap_[i];
    for (int k = 1; k <= hi.k_max_; ++k) {
      std::string bar;
      std::size_t count = 0;
      if (!(in >> bar >> count) || bar != "|") throw ValidationError("hop index: malformed shell row");
      for (std::size_t c = 0; c < count; ++c) {
        NodeId j = 0;
        if (!(in >> j) || j < 0 || j >= hi.num_nodes_) throw ValidationError("hop index: bad shell member");
        hi.members_.push_back(j);
      }
      hi.offsets_[hi.slot(i, k) + 1] = static_cast<std::int64_t>(hi.members_.size());
    }
  }
  if (dense) {
    hi.dist_.resize(n * n);
    for (auto& d : hi.dist_) {
      if (!(in >> d)) throw ValidationError("hop index: truncated distance table");
    }
  }
  if (!in) throw ValidationError("hop index: truncated file");
  return hi;
}

void save_hop_index(const std::filesystem::path& path, const HopIndex& hi) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
  write_hop_index(out, hi);
}

HopIndex load_hop_index(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open hop index " + path.string());
  return read_hop_index(in);
}

}  // namespace nudrew
