#include "nudrew/sensitivity.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <nlohmann/json.hpp>
#include <sstream>

#include "nudrew/errors.hpp"
#include "test_support.hpp"

namespace nudrew {
namespace {

using testing::floyd_warshall;
using testing::random_tensor;

ModelConfig config_for(Arch arch, int layers, DelayPolicy nu = DelayPolicy::finite(1)) {
  ModelConfig c;
  c.arch = arch;
  c.layers = layers;
  c.hidden = 16;  // wide enough that no ReLU chain along a geodesic dies
  c.in_dim = 2;
  c.out_dim = 2;
  c.nu = nu;
  if (arch == Arch::kSpGcn) c.k_cap = 2;
  return c;
}

SensitivityReport run(Arch arch, const Graph& g, int layers, std::uint64_t seed,
                      DelayPolicy nu = DelayPolicy::finite(1)) {
  const Model model(config_for(arch, layers, nu), seed);
  Rng rng(seed + 100);
  const Tensor x = random_tensor({g.num_nodes(), 2}, rng);
  return jacobian_norms(model, g, compute_hop_index(g, g.num_nodes()), x, layers);
}

Graph connected_random(int n, double p, Rng& rng) {
  for (;;) {
    Graph g = erdos_renyi(n, p, rng);
    if (compute_hop_index(g, n).unreachable(0) == 0) return g;
  }
}

TEST(SensitivityTest, PathZeroBeyondDepth) {
  const auto r = run(Arch::kGcn, path_graph(4), 2, 1);
  EXPECT_EQ(r.final().at(0, 3), 0.0);
  EXPECT_EQ(r.final().at(3, 0), 0.0);
  EXPECT_GT(r.final().at(0, 2), 0.0);
}

TEST(SensitivityTest, PathFirstInteractionIsDistance) {
  for (Arch arch : {Arch::kGcn, Arch::kDrewGcn}) {
    const auto r = run(arch, path_graph(4), 3, 2);
    EXPECT_EQ(first_interaction(r, 0, 3), 3) << arch_name(arch);
    EXPECT_EQ(first_interaction(r, 3, 0), 3) << arch_name(arch);
    EXPECT_EQ(first_interaction(r, 1, 1), 0) << arch_name(arch);
  }
}

TEST(SensitivityTest, DisconnectedPairNeverInteracts) {
  const Graph parts[] = {path_graph(3), path_graph(2)};
  const Graph g = disjoint_union(parts);
  for (Arch arch : {Arch::kGcn, Arch::kDrewGcn, Arch::kDrewGin, Arch::kDrewGatedGcn, Arch::kSpGcn}) {
    const auto r = run(arch, g, 3, 3);
    EXPECT_EQ(first_interaction(r, 0, 4), kNever) << arch_name(arch);
    EXPECT_EQ(first_interaction(r, 3, 1), kNever) << arch_name(arch);
  }
}

TEST(SensitivityTest, ResidualModelsKeepSelfSensitivity) {
  Rng rng(4);
  const Graph g = connected_random(8, 0.35, rng);
  for (Arch arch : {Arch::kGcn, Arch::kDrewGcn, Arch::kDrewGatedGcn, Arch::kSpGcn}) {
    const auto r = run(arch, g, 2, 5);
    for (NodeId i = 0; i < 8; ++i) {
      for (int l = 0; l <= 2; ++l) EXPECT_GT(r.per_layer[static_cast<std::size_t>(l)].at(i, i), 0.0) << arch_name(arch);
    }
  }
}

TEST(SensitivityTest, NormsAreNonnegative) {
  Rng rng(6);
  const Graph g = connected_random(7, 0.4, rng);
  const auto r = run(Arch::kDrewGin, g, 3, 7);
  for (const auto& m : r.per_layer) {
    for (std::int64_t e = 0; e < m.numel(); ++e) EXPECT_GE(m[e], 0.0);
  }
}

// Central differences of the full input-to-state map, reduced with the same norm.
TEST(SensitivityTest, MatchesFiniteDifferences) {
  Rng rng(8);
  const Graph g = connected_random(8, 0.3, rng);
  const HopIndex hi = compute_hop_index(g, 8);
  for (Arch arch : {Arch::kGcn, Arch::kDrewGcn, Arch::kDrewGin, Arch::kDrewGatedGcn, Arch::kSpGcn}) {
    const int layers = 3;
    Model model(config_for(arch, layers), 9);
    Tensor x = random_tensor({8, 2}, rng);
    const auto report = jacobian_norms(model, g, hi, x, layers);
    const GraphOperators ops = make_operators(g, hi, max_scheduled_hop(model.config()));
    auto state = [&](const Tensor& in) {
      Tape tape;
      return model.forward(tape, ops, tape.constant(in), false).embeddings.value();
    };
    const double h = 1e-6;
    Tensor fd({8, 8});
    for (std::int64_t j = 0; j < 8; ++j) {
      for (std::int64_t f = 0; f < 2; ++f) {
        Tensor xp = x, xm = x;
        xp.at(j, f) += h;
        xm.at(j, f) -= h;
        const Tensor plus = state(xp), minus = state(xm);
        for (std::int64_t i = 0; i < 8; ++i) {
          for (std::int64_t c = 0; c < plus.cols(); ++c) {
            fd.at(i, j) += std::abs((plus.at(i, c) - minus.at(i, c)) / (2 * h));
          }
        }
      }
    }
    double diff = 0.0, norm = 0.0;
    for (std::int64_t e = 0; e < fd.numel(); ++e) {
      diff += (fd[e] - report.final()[e]) * (fd[e] - report.final()[e]);
      norm += fd[e] * fd[e];
    }
    EXPECT_LE(std::sqrt(diff / norm), 1e-4) << arch_name(arch);
  }
}

// Zero exactly when the pair is farther than the depth, for 1-hop reach per layer.
TEST(SensitivityTest, ZeroRegionAndFirstInteractionOnRandomGraphs) {
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 5 + static_cast<int>(rng.below(8));
    const Graph g = erdos_renyi(n, 0.3, rng);
    const auto dist = floyd_warshall(g);
    for (Arch arch : {Arch::kGcn, Arch::kDrewGcn, Arch::kDrewGin, Arch::kDrewGatedGcn}) {
      const int layers = 4;
      const auto r = run(arch, g, layers, static_cast<std::uint64_t>(trial));
      for (NodeId i = 0; i < n; ++i) {
        for (NodeId j = 0; j < n; ++j) {
          const int d = dist[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
          for (int l = 0; l <= layers; ++l) {
            const double s = r.per_layer[static_cast<std::size_t>(l)].at(i, j);
            if (d < 0 || l < d) EXPECT_EQ(s, 0.0) << arch_name(arch) << " " << i << "," << j << " l=" << l;
          }
          const int expected = d < 0 || d > layers ? kNever : d;
          EXPECT_EQ(first_interaction(r, i, j), expected) << arch_name(arch) << " " << i << "," << j;
        }
      }
    }
  }
}

// Without delay, layer l reaches l more hops on top of the previous layer's reach.
TEST(SensitivityTest, UndelayedReachIsTriangular) {
  const Graph g = path_graph(12);
  const auto r = run(Arch::kDrewGcn, g, 4, 11, DelayPolicy::infinite());
  for (NodeId j = 0; j < 12; ++j) {
    int expected = 0;
    while (expected * (expected + 1) / 2 < j) ++expected;
    EXPECT_EQ(first_interaction(r, 0, j), expected > 4 ? kNever : expected) << "j=" << j;
  }
}

TEST(SensitivityTest, LinearProbeMatchesGammaPower) {
  const Graph g = complete_binary_tree(6);
  const auto gamma = testing::dense_gamma1(g);
  const HopIndex hi = compute_hop_index(g, 1);
  ModelConfig cfg;
  cfg.arch = Arch::kGcn;
  cfg.hidden = cfg.in_dim = cfg.out_dim = 1;
  cfg.linear_probe = true;
  for (int r = 1; r <= 6; ++r) {
    cfg.layers = r;
    const auto report = jacobian_norms(Model(cfg, 0), g, hi, Tensor({g.num_nodes(), 1}), r);
    const auto power = testing::dense_power(gamma, r);
    double worst = 0.0;
    for (NodeId i = 0; i < g.num_nodes(); ++i) {
      for (NodeId j = 0; j < g.num_nodes(); ++j) {
        const double want = power[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        const double got = report.final().at(i, j);
        if (want == 0.0) {
          EXPECT_EQ(got, 0.0);
        } else {
          worst = std::max(worst, std::abs(got - want) / want);
        }
      }
    }
    EXPECT_LE(worst, 1e-10) << "r=" << r;
  }
}

TEST(SensitivityTest, CycleDirectTermIsHalf) {
  DecayOptions opt;
  opt.family = GraphFamily::kCycle;
  opt.r_min = 2;
  opt.r_max = 6;
  for (const auto& row : decay_comparison(opt)) {
    EXPECT_DOUBLE_EQ(row.direct, 0.5) << "r=" << row.r;
    EXPECT_GE(row.drew, row.direct);
  }
}

TEST(SensitivityTest, DecayComparisonOnTrees) {
  DecayOptions opt;
  const auto rows = decay_comparison(opt);
  ASSERT_EQ(rows.size(), 6u);
  const auto gamma = testing::dense_gamma1(complete_binary_tree(6));
  for (const auto& row : rows) {
    const auto power = testing::dense_power(gamma, row.r);
    const double want = power[static_cast<std::size_t>((1 << row.r) - 1)][0];
    EXPECT_LE(std::abs(row.classical - want) / want, 1e-10) << "r=" << row.r;
  }
  const auto checks = check_decay(rows);
  EXPECT_TRUE(checks.drew_dominates_direct);
  EXPECT_TRUE(checks.ratio_nondecreasing);
}

TEST(SensitivityTest, CheckDecayFlagsViolations) {
  std::vector<DecayRow> rows = {{2, 1.0, 2.0, 0.5}, {3, 1.0, 1.5, 0.5}};
  EXPECT_FALSE(check_decay(rows).ratio_nondecreasing);
  rows[1].drew = 0.4;
  EXPECT_FALSE(check_decay(rows).drew_dominates_direct);
}

TEST(SensitivityTest, ThreadedMatchesSerial) {
  Rng rng(12);
  const Graph g = connected_random(9, 0.3, rng);
  const Model model(config_for(Arch::kDrewGatedGcn, 3), 13);
  const Tensor x = random_tensor({9, 2}, rng);
  const HopIndex hi = compute_hop_index(g, 9);
  const auto a = jacobian_norms(model, g, hi, x, 3);
  SensitivityOptions opt;
  opt.threads = 4;
  const auto b = jacobian_norms(model, g, hi, x, 3, opt);
  for (std::size_t l = 0; l < a.per_layer.size(); ++l) EXPECT_TRUE(a.per_layer[l].same_values(b.per_layer[l]));
}

TEST(SensitivityTest, RejectsBadArguments) {
  const Graph g = path_graph(4);
  const Model model(config_for(Arch::kGcn, 2), 0);
  const HopIndex hi = compute_hop_index(g, 4);
  EXPECT_THROW(jacobian_norms(model, g, hi, Tensor({4, 2}), 3), RangeError);
  EXPECT_THROW(jacobian_norms(model, g, hi, Tensor({3, 2}), 2), DimensionError);
  const auto r = jacobian_norms(model, g, hi, Tensor({4, 2}), 1);
  EXPECT_THROW(first_interaction(r, 0, 4), RangeError);
}

TEST(SensitivityTest, JsonReport) {
  auto r = run(Arch::kDrewGcn, path_graph(4), 2, 14);
  r.graph_id = "p4";
  r.seed = 14;
  std::ostringstream out;
  write_sensitivity_json(out, r);
  const auto doc = nlohmann::json::parse(out.str());
  EXPECT_EQ(doc["graph"]["id"], "p4");
  EXPECT_EQ(doc["seed"], 14);
  EXPECT_EQ(doc["config"]["arch"], "drew_gcn");
  EXPECT_EQ(doc["S"].size(), 4u);
  EXPECT_EQ(doc["first_interaction"][0][3], "never");
  EXPECT_EQ(doc["first_interaction"][0][2], 2);
  EXPECT_TRUE(doc.contains("version"));
}

}  // namespace
}  // namespace nudrew
