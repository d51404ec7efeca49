#include "nudrew/sensitivity.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <nlohmann/json.hpp>
#include <ostream>
#include <thread>

#include "nudrew/errors.hpp"
#include "nudrew/version.hpp"

namespace nudrew {
namespace {

using nlohmann::json;

json config_json(const ModelConfig& c) {
  json out = {{"arch", arch_name(c.arch)},
              {"layers", c.layers},
              {"hidden", c.hidden},
              {"nu", c.nu.to_string()},
              {"k_cap", c.k_cap},
              {"in_dim", c.in_dim},
              {"out_dim", c.out_dim},
              {"weight_sharing", c.shares_weights()},
              {"batch_norm", c.use_batch_norm},
              {"gin_eps", c.gin_eps},
              {"gate_eps", c.gate_eps},
              {"linear_probe", c.linear_probe},
              {"readout", readout_site_name(c.readout)}};
  return out;
}

json matrix_json(const Tensor& m) {
  json rows = json::array();
  for (std::int64_t i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (std::int64_t j = 0; j < m.cols(); ++j) row.push_back(m.at(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

// Output nodes [begin, end) of every layer; writes rows of report.per_layer.
void fill_rows(Model model, const GraphOperators& ops, const Tensor& x, NodeId begin, NodeId end,
               std::vector<Tensor>& per_layer) {
  for (auto* p : model.parameters()) p->set_requires_grad(false);
  Tensor input = x;
  input.set_requires_grad(true);
  Tape tape;
  const auto fw = model.forward(tape, ops, tape.parameter(input), false);
  const std::int64_t in_dim = x.cols();
  for (std::size_t l = 0; l < per_layer.size(); ++l) {
    const Var& state = fw.states.get(static_cast<int>(l));
    const std::int64_t d = state.value().cols();
    Tensor seed(state.shape());
    for (NodeId i = begin; i < end; ++i) {
      for (std::int64_t c = 0; c < d; ++c) {
        input.zero_grad();
        seed.at(i, c) = 1.0;
        tape.backward(state, seed);
        seed.at(i, c) = 0.0;
        const auto g = input.grad();
        for (NodeId j = 0; j < ops.num_nodes; ++j) {
          double acc = 0.0;
          for (std::int64_t f = 0; f < in_dim; ++f) acc += std::abs(g[static_cast<std::size_t>(j * in_dim + f)]);
          per_layer[l].at(i, j) += acc;
        }
      }
    }
  }
}

}  // namespace

SensitivityReport jacobian_norms(const Model& model, const Graph& g, const HopIndex& hi, const Tensor& x,
                                 int upto_layer, const SensitivityOptions& options) {
  const auto& cfg = model.config();
  if (upto_layer < 0 || upto_layer > cfg.layers) {
    throw RangeError("upto_layer " + std::to_string(upto_layer) + " outside [0, " + std::to_string(cfg.layers) + "]");
  }
  const NodeId n = g.num_nodes();
  if (x.rank() != 2 || x.rows() != n || x.cols() != cfg.in_dim) {
    throw DimensionError("sensitivity input must be [" + std::to_string(n) + ", " + std::to_string(cfg.in_dim) +
                         "], got " + shape_to_string(x.shape()));
  }
  SensitivityReport report;
  report.config = cfg;
  report.num_nodes = n;
  report.zero_threshold = options.zero_threshold;
  report.per_layer.assign(static_cast<std::size_t>(upto_layer) + 1, Tensor({n, n}));
  if (n == 0) return report;

  const GraphOperators ops = make_operators(g, hi, max_scheduled_hop(cfg));
  const int threads = std::clamp(options.threads, 1, static_cast<int>(n));
  if (threads == 1) {
    fill_rows(model, ops, x, 0, n, report.per_layer);
    return report;
  }
  // Each worker owns a model copy, a tape and a disjoint block of output rows.
  std::vector<std::thread> pool;
  const NodeId chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const NodeId begin = std::min<NodeId>(n, t * chunk), end = std::min<NodeId>(n, begin + chunk);
    if (begin == end) break;
    pool.emplace_back([&, begin, end] { fill_rows(model, ops, x, begin, end, report.per_layer); });
  }
  for (auto& t : pool) t.join();
  return report;
}

int first_interaction(const SensitivityReport& report, NodeId i, NodeId j) {
  if (i < 0 || j < 0 || i >= report.num_nodes || j >= report.num_nodes) {
    throw RangeError("node pair (" + std::to_string(i) + ", " + std::to_string(j) + ") outside the report");
  }
  for (std::size_t l = 0; l < report.per_layer.size(); ++l) {
    if (report.per_layer[l].at(i, j) > report.zero_threshold) return static_cast<int>(l);
  }
  return kNever;
}

void write_sensitivity_json(std::ostream& out, const SensitivityReport& report) {
  json fi = json::array();
  for (NodeId i = 0; i < report.num_nodes; ++i) {
    json row = json::array();
    for (NodeId j = 0; j < report.num_nodes; ++j) {
      const int l = first_interaction(report, i, j);
      row.push_back(l == kNever ? json("never") : json(l));
    }
    fi.push_back(std::move(row));
  }
  json doc = {{"version", kVersion},
              {"seed", report.seed},
              {"graph", {{"id", report.graph_id}, {"num_nodes", report.num_nodes}}},
              {"config", config_json(report.config)},
              {"layers", report.layers()},
              {"norm", "entrywise_l1"},
              {"zero_threshold", report.zero_threshold},
              {"S", matrix_json(report.final())},
              {"first_interaction", fi}};
  out << doc.dump(2) << '\n';
}

std::string_view graph_family_name(GraphFamily family) {
  return family == GraphFamily::kBinaryTree ? "binary_tree" : "cycle";
}

GraphFamily parse_graph_family(std::string_view name) {
  if (name == "binary_tree" || name == "tree") return GraphFamily::kBinaryTree;
  if (name == "cycle") return GraphFamily::kCycle;
  throw ValidationError("unknown graph family '" + std::string(name) + "' (expected binary_tree or cycle)");
}

std::vector<DecayRow> decay_comparison(const DecayOptions& options) {
  if (options.r_min < 1 || options.r_max < options.r_min) {
    throw ValidationError("decay range needs 1 <= r_min <= r_max");
  }
  std::vector<DecayRow> rows;
  for (int r = options.r_min; r <= options.r_max; ++r) {
    Graph g;
    NodeId target = 0, source = 0;
    if (options.family == GraphFamily::kBinaryTree) {
      g = complete_binary_tree(options.r_max);
      target = (NodeId{1} << r) - 1;  // leftmost node at depth r
    } else {
      g = cycle_graph(2 * r);
      target = r;
    }
    const HopIndex hi = compute_hop_index(g, r);
    const Tensor x({g.num_nodes(), 1});

    auto probe = [&](Arch arch) {
      ModelConfig cfg;
      cfg.arch = arch;
      cfg.layers = r;
      cfg.hidden = cfg.in_dim = cfg.out_dim = 1;
      cfg.nu = options.nu;
      cfg.linear_probe = true;
      const Model model(cfg, 0);
      return jacobian_norms(model, g, hi, x, r).final().at(target, source);
    };
    DecayRow row;
    row.r = r;
    row.classical = probe(Arch::kGcn);
    row.drew = probe(Arch::kDrewGcn);
    for (const auto& e : hop_matrix(g, hi, r).entries) {
      if (e.i == target && e.j == source) row.direct = e.gamma;
    }
    rows.push_back(row);
  }
  return rows;
}

DecayChecks check_decay(const std::vector<DecayRow>& rows, int ratio_from) {
  DecayChecks checks;
  const DecayRow* prev = nullptr;
  for (const auto& row : rows) {
    if (row.drew < row.direct) checks.drew_dominates_direct = false;
    if (row.r < ratio_from) continue;
    if (prev && row.ratio() < prev->ratio()) checks.ratio_nondecreasing = false;
    prev = &row;
  }
  return checks;
}

void write_decay_json(std::ostream& out, const DecayOptions& options, const std::vector<DecayRow>& rows) {
  json table = json::array();
  for (const auto& row : rows) {
    table.push_back({{"r", row.r},
                     {"classical", row.classical},
                     {"drew", row.drew},
                     {"direct", row.direct},
                     {"ratio", row.ratio()}});
  }
  const auto checks = check_decay(rows);
  json doc = {{"version", kVersion},
              {"family", graph_family_name(options.family)},
              {"nu", options.nu.to_string()},
              {"rows", table},
              {"drew_dominates_direct", checks.drew_dominates_direct},
              {"ratio_nondecreasing", checks.ratio_nondecreasing}};
  out << doc.dump(2) << '\n';
}

}  // namespace nudrew
