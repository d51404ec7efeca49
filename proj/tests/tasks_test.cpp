#include "nudrew/tasks.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "nudrew/errors.hpp"
#include "nudrew/hop_index.hpp"
#include "test_support.hpp"

namespace nudrew {
namespace {

TEST(RingTransferTest, DefaultSizeSplitsAndDistance) {
  const auto data = gen_ring_transfer(2000, 10, 5, 0);
  EXPECT_EQ(data.size(), 2000);
  EXPECT_EQ(data.split_ids(Split::kTrain).size(), 1600u);
  EXPECT_EQ(data.split_ids(Split::kVal).size(), 200u);
  EXPECT_EQ(data.split_ids(Split::kTest).size(), 200u);
  const auto dist = testing::floyd_warshall(data.ring);
  EXPECT_EQ(dist[static_cast<std::size_t>(data.source)][static_cast<std::size_t>(data.target)], 5);
}

TEST(RingTransferTest, SmallRingFeatures) {
  const auto data = gen_ring_transfer(10, 4, 2, 3);
  EXPECT_EQ(data.source, 0);
  EXPECT_EQ(data.target, 2);
  for (const auto& inst : data.instances) {
    const Tensor x = data.features(inst);
    ASSERT_EQ(x.shape(), (Shape{4, 2}));
    for (std::int64_t c = 0; c < 2; ++c) {
      EXPECT_EQ(x.at(0, c), c == inst.label ? 1.0 : 0.0);
      for (std::int64_t r = 1; r < 4; ++r) EXPECT_EQ(x.at(r, c), 0.5);
    }
  }
}

TEST(RingTransferTest, SplitRoundingAndLabelBalance) {
  for (int n : {5, 7, 13, 101, 999}) {
    for (int c : {2, 3, 5}) {
      if (n < c) continue;
      const auto data = gen_ring_transfer(n, 6, c, static_cast<std::uint64_t>(n * c));
      const auto train = static_cast<std::int64_t>(data.split_ids(Split::kTrain).size());
      const auto val = static_cast<std::int64_t>(data.split_ids(Split::kVal).size());
      EXPECT_EQ(train, static_cast<std::int64_t>(std::ceil(0.8 * n - 1e-9)));
      EXPECT_EQ(val, (n - train + 1) / 2);
      for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
        std::map<int, int> hist;
        for (int lbl = 0; lbl < c; ++lbl) hist[lbl] = 0;
        for (const auto& inst : data.instances) {
          if (inst.split == s) ++hist[inst.label];
        }
        int lo = n, hi = 0;
        for (auto [lbl, count] : hist) {
          lo = std::min(lo, count);
          hi = std::max(hi, count);
        }
        EXPECT_LE(hi - lo, 1) << "n=" << n << " c=" << c << " split=" << split_name(s);
      }
    }
  }
}

TEST(RingTransferTest, RejectsBadArguments) {
  EXPECT_THROW(gen_ring_transfer(10, 2, 2, 0), ValidationError);
  EXPECT_THROW(gen_ring_transfer(10, 5, 1, 0), ValidationError);
  EXPECT_THROW(gen_ring_transfer(3, 5, 4, 0), ValidationError);
}

TEST(RingTransferTest, DeterministicGivenSeed) {
  const auto a = gen_ring_transfer(50, 7, 3, 11);
  const auto b = gen_ring_transfer(50, 7, 3, 11);
  const auto c = gen_ring_transfer(50, 7, 3, 12);
  bool differs = false;
  for (std::size_t i = 0; i < a.instances.size(); ++i) {
    EXPECT_EQ(a.instances[i].label, b.instances[i].label);
    EXPECT_EQ(a.instances[i].split, b.instances[i].split);
    differs |= a.instances[i].label != c.instances[i].label;
  }
  EXPECT_TRUE(differs);
}

TEST(RingTransferTest, RingShellSizes) {
  for (int k = 3; k <= 12; ++k) {
    const auto data = gen_ring_transfer(5, k, 5, 0);
    const auto hi = compute_hop_index(data.ring, k);
    for (NodeId i = 0; i < k; ++i) {
      for (int h = 1; h < k / 2; ++h) EXPECT_EQ(hi.shell(i, h).size(), 2u);
      EXPECT_EQ(hi.shell(i, k / 2).size(), k % 2 == 0 ? 1u : 2u);
    }
  }
}

TEST(RingTransferTest, DumpWritesManifestAndEdgeLists) {
  const auto dir = std::filesystem::temp_directory_path() / "nudrew_ring_dump_test";
  std::filesystem::remove_all(dir);
  const auto data = gen_ring_transfer(12, 5, 3, 1);
  dump_ring_transfer(data, dir);
  std::ifstream manifest(dir / "manifest.jsonl");
  int lines = 0;
  for (std::string line; std::getline(manifest, line);) {
    EXPECT_NE(line.find("\"target\":2"), std::string::npos) << line;
    ++lines;
  }
  EXPECT_EQ(lines, 12);
  const Graph g = read_edge_list(dir / "graphs" / "ring_7.edges");
  EXPECT_EQ(g.num_nodes(), 5);
  EXPECT_EQ(g.num_edges(), 5);
  std::filesystem::remove_all(dir);
}

ModelConfig small_config(Arch arch, int layers, int classes) {
  ModelConfig cfg;
  cfg.arch = arch;
  cfg.layers = layers;
  cfg.hidden = 8;
  cfg.in_dim = cfg.out_dim = classes;
  return cfg;
}

TEST(TrainTest, ZeroLearningRateKeepsUntrainedAccuracy) {
  const auto data = gen_ring_transfer(60, 6, 3, 2);
  ModelConfig cfg = small_config(Arch::kDrewGcn, 3, 3);
  cfg.nu = DelayPolicy::finite(1);
  cfg.use_batch_norm = false;
  Model untrained(cfg, 5);
  const double val0 = evaluate(untrained, data, Split::kVal);
  const double test0 = evaluate(untrained, data, Split::kTest);

  Model model(cfg, 5);
  TrainOptions opt;
  opt.lr = 0.0;
  opt.epochs = 3;
  const auto r = train_model(model, data, opt);
  ASSERT_FALSE(r.failed);
  EXPECT_EQ(r.test_acc, test0);
  for (double v : r.val_acc) EXPECT_EQ(v, val0);
}

TEST(TrainTest, ZeroLearningRateLeavesParametersWithBatchNorm) {
  const auto data = gen_ring_transfer(40, 6, 3, 2);
  ModelConfig cfg = small_config(Arch::kGcn, 2, 3);
  Model model(cfg, 9);
  const auto before = model.state();
  TrainOptions opt;
  opt.lr = 0.0;
  opt.epochs = 2;
  train_model(model, data, opt);
  const auto after = model.state();
  ASSERT_EQ(before.size(), after.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (before[i].first.find("running") != std::string::npos) continue;
    const auto x = before[i].second.data(), y = after[i].second.data();
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin(), y.end())) << before[i].first;
  }
}

TEST(TrainTest, DeterministicLosses) {
  const auto data = gen_ring_transfer(80, 6, 3, 4);
  for (Arch arch : {Arch::kGcn, Arch::kDrewGcn, Arch::kDrewGin, Arch::kDrewGatedGcn, Arch::kSpGcn}) {
    ModelConfig cfg = small_config(arch, 3, 3);
    if (arch == Arch::kSpGcn) cfg.k_cap = 3;
    TrainOptions opt;
    opt.epochs = 3;
    opt.seed = 21;
    const auto a = train(cfg, data, opt);
    const auto b = train(cfg, data, opt);
    ASSERT_FALSE(a.failed) << arch_name(arch);
    EXPECT_EQ(a.train_loss, b.train_loss) << arch_name(arch);
    EXPECT_EQ(a.val_acc, b.val_acc) << arch_name(arch);
    EXPECT_EQ(a.test_acc, b.test_acc) << arch_name(arch);
    EXPECT_EQ(a.train_loss.size(), 3u);
    for (double v : a.val_acc) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_EQ(a.config.arch, arch);
  }
}

TEST(TrainTest, DivergenceMarksRunFailed) {
  const auto data = gen_ring_transfer(40, 6, 3, 4);
  TrainOptions opt;
  opt.epochs = 2;
  opt.divergence_limit = 0.0;  // any positive loss counts as divergent
  const auto r = train(small_config(Arch::kGcn, 2, 3), data, opt);
  EXPECT_TRUE(r.failed);
  EXPECT_NE(r.failure.find("divergent"), std::string::npos);
}

TEST(TrainTest, RejectsMismatchedClassCount) {
  const auto data = gen_ring_transfer(40, 6, 3, 4);
  EXPECT_THROW(train(small_config(Arch::kGcn, 2, 4), data, TrainOptions{}), ValidationError);
}

// One layer cannot carry the source label two hops to the target.
TEST(TrainTest, ShallowModelCannotBeatChanceOnShortRing) {
  const auto data = gen_ring_transfer(500, 4, 5, 8);
  ModelConfig cfg = small_config(Arch::kDrewGcn, 1, 5);
  cfg.nu = DelayPolicy::finite(1);
  TrainOptions opt;
  opt.epochs = 5;
  const auto r = train(cfg, data, opt);
  ASSERT_FALSE(r.failed);
  const double n_test = static_cast<double>(data.split_ids(Split::kTest).size());
  EXPECT_LE(r.test_acc, 0.2 + 3.0 * std::sqrt(0.2 * 0.8 / n_test));
}

TEST(TrainTest, DelayedDrewSolvesShortRing) {
  const auto data = gen_ring_transfer(200, 10, 5, 1);
  SweepOptions so;
  so.reference_hidden = 32;
  const auto cfg = sweep_cell_config(parse_sweep_model("drew_gcn:1"), 10, so);
  EXPECT_EQ(cfg.layers, 5);
  TrainOptions opt;
  opt.epochs = 15;
  const auto r = train(cfg, data, opt);
  ASSERT_FALSE(r.failed);
  EXPECT_GE(r.test_acc, 0.95);
}

TEST(SweepTest, ParsesModelTokens) {
  EXPECT_TRUE(parse_sweep_model("constant").constant);
  EXPECT_EQ(parse_sweep_model("gcn").config.arch, Arch::kGcn);
  EXPECT_EQ(parse_sweep_model("sp_gcn").config.arch, Arch::kSpGcn);
  const auto d = parse_sweep_model("drew_gcn:3");
  EXPECT_EQ(d.config.arch, Arch::kDrewGcn);
  EXPECT_EQ(d.config.nu, DelayPolicy::finite(3));
  EXPECT_EQ(parse_sweep_model("drew_gin:inf").config.nu, DelayPolicy::infinite());
  EXPECT_THROW(parse_sweep_model("drew_gcn"), ValidationError);
  EXPECT_THROW(parse_sweep_model("gcn:1"), ValidationError);
  EXPECT_THROW(parse_sweep_model("mlp"), ValidationError);
}

TEST(SweepTest, CellConfigMatchesBudget) {
  SweepOptions so;
  const auto gcn = sweep_cell_config(parse_sweep_model("gcn"), 20, so);
  EXPECT_EQ(gcn.layers, 10);
  EXPECT_EQ(gcn.hidden, 256);
  const auto sp = sweep_cell_config(parse_sweep_model("sp_gcn"), 20, so);
  EXPECT_EQ(sp.k_cap, 10);
  const auto half = sweep_cell_config(parse_sweep_model("drew_gcn:half"), 20, so);
  EXPECT_EQ(half.nu, DelayPolicy::finite(5));
  const auto drew = sweep_cell_config(parse_sweep_model("drew_gcn:1"), 20, so);
  const double ref = static_cast<double>(count_params(gcn));
  EXPECT_LT(std::abs(static_cast<double>(count_params(drew)) - ref) / ref, 0.01);
  EXPECT_LT(drew.hidden, 256);
}

TEST(SweepTest, ConstantBaselineIsChance) {
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const auto data = gen_ring_transfer(2000, 10, 5, seed);
    EXPECT_NEAR(constant_baseline_accuracy(data, Split::kTest), 0.2, 0.03);
  }
}

TEST(SweepTest, RowCountsAndCsv) {
  SweepOptions so;
  so.models = {"constant", "gcn", "drew_gcn:1"};
  so.ring_lengths = {4, 6};
  so.repeats = 2;
  so.dataset_size = 30;
  so.classes = 3;
  so.reference_hidden = 8;
  so.train.epochs = 1;
  int reported = 0;
  const auto result = sweep(so, [&](const SweepRun&) { ++reported; });
  EXPECT_EQ(result.runs.size(), 12u);
  EXPECT_EQ(result.cells.size(), 6u);
  EXPECT_EQ(reported, 12);
  for (const auto& cell : result.cells) EXPECT_EQ(cell.layers, cell.ring_length / 2);

  std::ostringstream runs, cells;
  for (const auto& r : result.runs) write_run_csv_row(runs, r);
  write_cell_csv(cells, result, so.repeats);
  int run_lines = 0, cell_lines = 0;
  std::string line;
  for (std::istringstream in(runs.str()); std::getline(in, line);) ++run_lines;
  for (std::istringstream in(cells.str()); std::getline(in, line);) ++cell_lines;
  EXPECT_EQ(run_lines, 12);
  EXPECT_EQ(cell_lines, 7);
}

TEST(SweepTest, ParallelMatchesSerial) {
  SweepOptions so;
  so.models = {"gcn", "drew_gcn:inf"};
  so.ring_lengths = {5};
  so.repeats = 2;
  so.dataset_size = 30;
  so.classes = 3;
  so.reference_hidden = 8;
  so.train.epochs = 2;
  const auto serial = sweep(so);
  so.threads = 3;
  const auto parallel = sweep(so);
  ASSERT_EQ(serial.runs.size(), parallel.runs.size());
  for (std::size_t i = 0; i < serial.runs.size(); ++i) {
    EXPECT_EQ(serial.runs[i].test_acc, parallel.runs[i].test_acc);
    EXPECT_EQ(serial.runs[i].val_acc, parallel.runs[i].val_acc);
  }
}

TEST(SweepTest, FailedRunsAreMarked) {
  SweepOptions so;
  so.models = {"gcn"};
  so.ring_lengths = {4};
  so.repeats = 2;
  so.dataset_size = 20;
  so.classes = 2;
  so.reference_hidden = 4;
  so.train.epochs = 1;
  so.train.divergence_limit = 0.0;
  const auto result = sweep(so);
  ASSERT_EQ(result.cells.size(), 1u);
  EXPECT_EQ(result.cells[0].failed_runs, 2);
  std::ostringstream out;
  write_run_csv_row(out, result.runs[0]);
  EXPECT_NE(out.str().find("FAILED"), std::string::npos);
  std::ostringstream cells;
  write_cell_csv(cells, result, 2);
  EXPECT_NE(cells.str().find("FAILED"), std::string::npos);
}

}  // namespace
}  // namespace nudrew
