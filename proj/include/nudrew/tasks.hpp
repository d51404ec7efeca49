#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nudrew/checkpoint.hpp"
#include "nudrew/graph.hpp"
#include "nudrew/model.hpp"

namespace nudrew {

enum class Split { kTrain, kVal, kTest };

std::string_view split_name(Split split);

struct RingInstance {
  std::int32_t id = 0;
  std::int32_t label = 0;
  Split split = Split::kTrain;
};

// N copies of the ring C_k with a class one-hot planted at the source node and
// the constant 1/C on every other node.
struct RingTransferDataset {
  std::int32_t ring_length = 0;
  std::int32_t classes = 0;
  std::uint64_t seed = 0;
  Graph ring;
  NodeId source = 0;
  NodeId target = 0;
  std::vector<RingInstance> instances;

  std::int32_t size() const { return static_cast<std::int32_t>(instances.size()); }
  // [ring_length, classes] feature matrix of one instance.
  Tensor features(const RingInstance& inst) const;
  std::vector<std::int32_t> split_ids(Split split) const;
};

// Split sizes are ceil(0.8 N), ceil((N - train) / 2), rest. Within each split the
// labels cycle through the classes, then the split is shuffled.
RingTransferDataset gen_ring_transfer(std::int32_t n, std::int32_t ring_length, std::int32_t classes,
                                      std::uint64_t seed);

// One edge-list file per instance plus manifest.jsonl.
void dump_ring_transfer(const RingTransferDataset& data, const std::filesystem::path& dir);

struct TrainOptions {
  double lr = 0.01;
  int epochs = 50;
  int batch = 32;
  std::uint64_t seed = 0;
  double divergence_limit = 1e6;
  // Called after every epoch with (epoch, train loss, val accuracy).
  std::function<void(int, double, double)> on_epoch;
};

struct TrainRunResult {
  std::vector<double> train_loss;
  std::vector<double> val_acc;
  double best_val_acc = 0.0;
  int best_epoch = -1;
  double test_acc = 0.0;
  double seconds = 0.0;
  std::uint64_t seed = 0;
  std::int64_t params = 0;
  ModelConfig config;
  bool failed = false;
  std::string failure;
  // Model state at the best validation epoch (initial state if none improved).
  NamedTensors best_state;
};

// Operators cover every hop the model can schedule on the ring.
GraphOperators ring_operators(const RingTransferDataset& data, const ModelConfig& config);

// Fraction of the split classified correctly, read out at config().readout.
double evaluate(Model& model, const RingTransferDataset& data, Split split, int batch = 64);

// Adam on the mean cross-entropy of minibatches of disjoint rings. Restores the
// best-validation state into model before the test evaluation.
TrainRunResult train_model(Model& model, const RingTransferDataset& data, const TrainOptions& options);
// Builds the model from config with a seed derived from options.seed.
TrainRunResult train(const ModelConfig& config, const RingTransferDataset& data, const TrainOptions& options);

// Majority training label predicted everywhere.
double constant_baseline_accuracy(const RingTransferDataset& data, Split split);

// Sweep entry: "gcn", "sp_gcn", "constant", or "<drew arch>:<nu>" with nu an
// integer, "inf", or "half" (L / 2).
struct SweepModel {
  std::string token;
  bool constant = false;
  ModelConfig config;
};

SweepModel parse_sweep_model(const std::string& token);

struct SweepOptions {
  std::vector<std::string> models{"gcn", "sp_gcn", "drew_gcn:1", "drew_gcn:inf", "drew_gcn:half", "constant"};
  std::vector<int> ring_lengths{10, 20, 30};
  int repeats = 3;
  std::uint64_t seed = 0;
  std::int32_t dataset_size = 2000;
  std::int32_t classes = 5;
  int reference_hidden = 256;
  TrainOptions train;
  int threads = 1;
  std::optional<ReadoutSite> readout;
};

struct SweepRun {
  std::string model;
  int ring_length = 0;
  int layers = 0;
  std::uint64_t seed = 0;
  int hidden = 0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  std::int64_t params = 0;
  double seconds = 0.0;
  bool failed = false;
};

struct SweepCell {
  std::string model;
  int ring_length = 0;
  int layers = 0;
  int hidden = 0;
  std::int64_t params = 0;
  double mean_test_acc = 0.0;
  double std_test_acc = 0.0;
  double mean_val_acc = 0.0;
  int failed_runs = 0;
};

struct SweepResult {
  std::vector<SweepRun> runs;
  std::vector<SweepCell> cells;
};

// Model config of one cell: L = floor(k / 2), in/out dim C, hidden budget-matched
// to a classical GCN of reference_hidden for drew_* archs.
ModelConfig sweep_cell_config(const SweepModel& model, int ring_length, const SweepOptions& options);

SweepResult sweep(const SweepOptions& options, const std::function<void(const SweepRun&)>& on_run = {});

inline constexpr const char* kRunCsvHeader = "model,k,L,seed,val_acc,test_acc,params,seconds";
inline constexpr const char* kCellCsvHeader = "model,k,L,hidden,params,runs,failed,mean_val_acc,mean_test_acc,std_test_acc";

void write_run_csv_row(std::ostream& out, const SweepRun& run);
void write_cell_csv(std::ostream& out, const SweepResult& result, int repeats);

}  // namespace nudrew
