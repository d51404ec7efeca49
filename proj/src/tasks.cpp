#include "nudrew/tasks.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <mutex>
#include <nlohmann/json.hpp>
#include <ostream>
#include <thread>

#include "nudrew/errors.hpp"
#include "nudrew/hop_index.hpp"
#include "nudrew/optim.hpp"

namespace nudrew {
namespace {

std::uint64_t mix_seed(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Operators for 1..max batch copies, built on demand.
class BatchCache {
 public:
  explicit BatchCache(const GraphOperators& single) : single_(single) {}

  const GraphOperators& get(int copies) {
    auto it = cache_.find(copies);
    if (it != cache_.end()) return it->second;
    std::vector<const GraphOperators*> parts(static_cast<std::size_t>(copies), &single_);
    return cache_.emplace(copies, batch_operators(parts)).first->second;
  }

 private:
  const GraphOperators& single_;
  std::map<int, GraphOperators> cache_;
};

Tensor batch_features(const RingTransferDataset& data, std::span<const std::int32_t> ids) {
  const std::int64_t k = data.ring_length, c = data.classes;
  Tensor x({static_cast<std::int64_t>(ids.size()) * k, c}, 1.0 / static_cast<double>(c));
  for (std::size_t b = 0; b < ids.size(); ++b) {
    const auto& inst = data.instances[static_cast<std::size_t>(ids[b])];
    const std::int64_t row = static_cast<std::int64_t>(b) * k + data.source;
    for (std::int64_t j = 0; j < c; ++j) x.at(row, j) = j == inst.label ? 1.0 : 0.0;
  }
  return x;
}

NodeId readout_index(const RingTransferDataset& data, ReadoutSite site) {
  return site == ReadoutSite::kTarget ? data.target : data.source;
}

std::vector<std::int32_t> readout_rows(const RingTransferDataset& data, ReadoutSite site, std::size_t count) {
  std::vector<std::int32_t> rows(count);
  for (std::size_t b = 0; b < count; ++b) {
    rows[b] = static_cast<std::int32_t>(b) * data.ring_length + readout_index(data, site);
  }
  return rows;
}

double evaluate_with(Model& model, const RingTransferDataset& data, Split split, int batch, BatchCache& cache) {
  const auto ids = data.split_ids(split);
  if (ids.empty()) return 0.0;
  std::int64_t correct = 0;
  for (std::size_t start = 0; start < ids.size(); start += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(ids.size(), start + static_cast<std::size_t>(batch));
    std::span<const std::int32_t> chunk(ids.data() + start, end - start);
    Tape tape;
    auto fw = model.forward(tape, cache.get(static_cast<int>(chunk.size())), tape.constant(batch_features(data, chunk)),
                            false);
    const auto rows = readout_rows(data, model.config().readout, chunk.size());
    const Tensor& logits = readout_nodes(tape, model.head, fw.embeddings, rows).value();
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      std::int64_t best = 0;
      for (std::int64_t j = 1; j < logits.cols(); ++j) {
        if (logits.at(static_cast<std::int64_t>(b), j) > logits.at(static_cast<std::int64_t>(b), best)) best = j;
      }
      if (best == data.instances[static_cast<std::size_t>(chunk[b])].label) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(ids.size());
}

void check_dims(const Model& model, const RingTransferDataset& data) {
  const auto& cfg = model.config();
  if (cfg.in_dim != data.classes || cfg.out_dim != data.classes) {
    throw ValidationError("model in_dim/out_dim must equal the class count " + std::to_string(data.classes));
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "?";
}

Tensor RingTransferDataset::features(const RingInstance& inst) const {
  const std::int32_t id[] = {inst.id};
  return batch_features(*this, id);
}

std::vector<std::int32_t> RingTransferDataset::split_ids(Split split) const {
  std::vector<std::int32_t> out;
  for (const auto& inst : instances) {
    if (inst.split == split) out.push_back(inst.id);
  }
  return out;
}

RingTransferDataset gen_ring_transfer(std::int32_t n, std::int32_t ring_length, std::int32_t classes,
                                      std::uint64_t seed) {
  if (ring_length < 3) throw ValidationError("ring length must be >= 3");
  if (classes < 2) throw ValidationError("class count must be >= 2");
  if (n < classes) throw ValidationError("dataset size must be at least the class count");
  RingTransferDataset data;
  data.ring_length = ring_length;
  data.classes = classes;
  data.seed = seed;
  data.ring = cycle_graph(ring_length);
  data.source = 0;
  data.target = ring_length / 2;

  const std::int32_t n_train = static_cast<std::int32_t>((4 * static_cast<std::int64_t>(n) + 4) / 5);
  const std::int32_t n_val = (n - n_train + 1) / 2;
  const std::int32_t sizes[] = {n_train, n_val, n - n_train - n_val};
  const Split splits[] = {Split::kTrain, Split::kVal, Split::kTest};
  Rng rng(seed);
  for (int s = 0; s < 3; ++s) {
    std::vector<std::int32_t> labels(static_cast<std::size_t>(sizes[s]));
    for (std::int32_t i = 0; i < sizes[s]; ++i) labels[static_cast<std::size_t>(i)] = i % classes;
    rng.shuffle(std::span<std::int32_t>(labels));
    for (auto y : labels) {
      data.instances.push_back({static_cast<std::int32_t>(data.instances.size()), y, splits[s]});
    }
  }
  return data;
}

void dump_ring_transfer(const RingTransferDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "graphs");
  std::ofstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw ValidationError("cannot write " + (dir / "manifest.jsonl").string());
  for (const auto& inst : data.instances) {
    const std::string file = "graphs/ring_" + std::to_string(inst.id) + ".edges";
    write_edge_list(dir / file, data.ring);
    nlohmann::json row = {{"id", inst.id},         {"label", inst.label},   {"source", data.source},
                          {"target", data.target}, {"split", split_name(inst.split)}, {"graph", file},
                          {"classes", data.classes}};
    manifest << row.dump() << '\n';
  }
}

GraphOperators ring_operators(const RingTransferDataset& data, const ModelConfig& config) {
  const int hops = std::max(1, std::min(max_scheduled_hop(config), data.ring_length / 2));
  return make_operators(data.ring, compute_hop_index(data.ring, hops), hops);
}

double evaluate(Model& model, const RingTransferDataset& data, Split split, int batch) {
  check_dims(model, data);
  const GraphOperators single = ring_operators(data, model.config());
  BatchCache cache(single);
  return evaluate_with(model, data, split, batch, cache);
}

namespace {

// Training allocates and frees multi-megabyte tensors every step. glibc hands
// those back to the kernel by default and then page-faults them in again,
// which costs more than the arithmetic.
void keep_freed_memory() {
#if defined(__GLIBC__)
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
  });
#endif
}

}  // namespace

TrainRunResult train_model(Model& model, const RingTransferDataset& data, const TrainOptions& options) {
  check_dims(model, data);
  keep_freed_memory();
  if (options.batch < 1) throw ValidationError("batch size must be >= 1");
  if (options.epochs < 0) throw ValidationError("epochs must be >= 0");
  const auto t0 = std::chrono::steady_clock::now();
  TrainRunResult result;
  result.seed = options.seed;
  result.params = model.num_parameters();
  result.config = model.config();

  const GraphOperators single = ring_operators(data, model.config());
  BatchCache cache(single);
  auto params = model.parameters();
  AdamState adam(AdamOptions{.lr = options.lr});
  Rng order_rng(mix_seed(options.seed ^ 0x5eedULL));
  auto train_ids = data.split_ids(Split::kTrain);

  result.best_state = model.state();
  result.best_val_acc = evaluate_with(model, data, Split::kVal, 64, cache);

  for (int epoch = 0; epoch < options.epochs && !result.failed; ++epoch) {
    order_rng.shuffle(std::span<std::int32_t>(train_ids));
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < train_ids.size(); start += static_cast<std::size_t>(options.batch)) {
      const std::size_t end = std::min(train_ids.size(), start + static_cast<std::size_t>(options.batch));
      std::span<const std::int32_t> chunk(train_ids.data() + start, end - start);
      std::vector<std::int32_t> labels;
      for (auto id : chunk) labels.push_back(data.instances[static_cast<std::size_t>(id)].label);
      zero_grads(params);
      Tape tape;
      auto fw = model.forward(tape, cache.get(static_cast<int>(chunk.size())),
                              tape.constant(batch_features(data, chunk)), true);
      const auto rows = readout_rows(data, model.config().readout, chunk.size());
      Var loss = cross_entropy_logits(readout_nodes(tape, model.head, fw.embeddings, rows), labels);
      const double value = loss.value().item();
      if (!std::isfinite(value) || value > options.divergence_limit) {
        result.failed = true;
        result.failure = "divergent loss " + std::to_string(value) + " at epoch " + std::to_string(epoch);
        break;
      }
      tape.backward(loss);
      adam_step(params, adam);
      loss_sum += value * static_cast<double>(chunk.size());
      seen += chunk.size();
    }
    if (result.failed) break;
    const double epoch_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    const double val = evaluate_with(model, data, Split::kVal, 64, cache);
    result.train_loss.push_back(epoch_loss);
    result.val_acc.push_back(val);
    if (val > result.best_val_acc) {
      result.best_val_acc = val;
      result.best_epoch = epoch;
      result.best_state = model.state();
    }
    if (options.on_epoch) options.on_epoch(epoch, epoch_loss, val);
  }
  if (!result.failed) {
    model.load_state(result.best_state);
    result.test_acc = evaluate_with(model, data, Split::kTest, 64, cache);
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

TrainRunResult train(const ModelConfig& config, const RingTransferDataset& data, const TrainOptions& options) {
  Model model(config, mix_seed(options.seed));
  return train_model(model, data, options);
}

double constant_baseline_accuracy(const RingTransferDataset& data, Split split) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(data.classes), 0);
  for (const auto& inst : data.instances) {
    if (inst.split == Split::kTrain) ++counts[static_cast<std::size_t>(inst.label)];
  }
  const auto majority = static_cast<std::int32_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  std::int64_t hit = 0, total = 0;
  for (const auto& inst : data.instances) {
    if (inst.split != split) continue;
    ++total;
    if (inst.label == majority) ++hit;
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

SweepModel parse_sweep_model(const std::string& token) {
  SweepModel m;
  m.token = token;
  if (token == "constant") {
    m.constant = true;
    return m;
  }
  const auto colon = token.find(':');
  m.config.arch = parse_arch(token.substr(0, colon));
  if (is_drew(m.config.arch)) {
    if (colon == std::string::npos) throw ValidationError("model '" + token + "' needs a delay, e.g. " + token + ":1");
    const std::string nu = token.substr(colon + 1);
    // "half" is resolved per cell once L is known.
    if (nu != "half") m.config.nu = DelayPolicy::parse(nu);
  } else if (colon != std::string::npos) {
    throw ValidationError("model '" + token + "' takes no delay");
  }
  return m;
}

ModelConfig sweep_cell_config(const SweepModel& model, int ring_length, const SweepOptions& options) {
  ModelConfig cfg = model.config;
  cfg.layers = std::max(1, ring_length / 2);
  cfg.in_dim = cfg.out_dim = options.classes;
  if (options.readout) cfg.readout = *options.readout;
  if (model.token.ends_with(":half")) cfg.nu = DelayPolicy::finite(std::max(1, cfg.layers / 2));
  if (cfg.arch == Arch::kSpGcn) cfg.k_cap = std::max(1, ring_length / 2);
  ModelConfig reference = cfg;
  reference.arch = Arch::kGcn;
  reference.k_cap = 0;
  reference.hidden = options.reference_hidden;
  if (is_drew(cfg.arch)) {
    cfg.hidden = solve_hidden_for_budget(cfg, count_params(reference));
  } else {
    cfg.hidden = options.reference_hidden;
  }
  return cfg;
}

SweepResult sweep(const SweepOptions& options, const std::function<void(const SweepRun&)>& on_run) {
  if (options.repeats < 1) throw ValidationError("repeats must be >= 1");
  std::vector<SweepModel> models;
  for (const auto& t : options.models) models.push_back(parse_sweep_model(t));

  struct Job {
    std::size_t model;
    int ring_length;
    int repeat;
  };
  std::vector<Job> jobs;
  for (int k : options.ring_lengths) {
    if (k < 3) throw ValidationError("ring length must be >= 3");
    for (std::size_t m = 0; m < models.size(); ++m) {
      for (int r = 0; r < options.repeats; ++r) jobs.push_back({m, k, r});
    }
  }

  SweepResult result;
  result.runs.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex report_mutex;
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      const Job& job = jobs[j];
      const auto& model = models[job.model];
      const std::uint64_t seed = options.seed + static_cast<std::uint64_t>(job.repeat);
      const auto data = gen_ring_transfer(options.dataset_size, job.ring_length, options.classes, seed);
      SweepRun run;
      run.model = model.token;
      run.ring_length = job.ring_length;
      run.layers = std::max(1, job.ring_length / 2);
      run.seed = seed;
      if (model.constant) {
        run.val_acc = constant_baseline_accuracy(data, Split::kVal);
        run.test_acc = constant_baseline_accuracy(data, Split::kTest);
      } else {
        const ModelConfig cfg = sweep_cell_config(model, job.ring_length, options);
        TrainOptions topt = options.train;
        topt.seed = seed;
        topt.on_epoch = nullptr;
        const auto r = train(cfg, data, topt);
        run.hidden = cfg.hidden;
        run.val_acc = r.best_val_acc;
        run.test_acc = r.test_acc;
        run.params = r.params;
        run.seconds = r.seconds;
        run.failed = r.failed;
      }
      result.runs[j] = run;
      if (on_run) {
        std::lock_guard<std::mutex> lock(report_mutex);
        on_run(run);
      }
    }
  };
  const int threads = std::max(1, options.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (int k : options.ring_lengths) {
    for (const auto& model : models) {
      SweepCell cell;
      cell.model = model.token;
      cell.ring_length = k;
      cell.layers = std::max(1, k / 2);
      std::vector<double> acc;
      double val = 0.0;
      for (const auto& run : result.runs) {
        if (run.model != model.token || run.ring_length != k) continue;
        cell.hidden = run.hidden;
        cell.params = run.params;
        if (run.failed) {
          ++cell.failed_runs;
          continue;
        }
        acc.push_back(run.test_acc);
        val += run.val_acc;
      }
      if (!acc.empty()) {
        double mean = 0.0;
        for (double a : acc) mean += a;
        mean /= static_cast<double>(acc.size());
        double var = 0.0;
        for (double a : acc) var += (a - mean) * (a - mean);
        cell.mean_test_acc = mean;
        cell.std_test_acc = acc.size() > 1 ? std::sqrt(var / static_cast<double>(acc.size() - 1)) : 0.0;
        cell.mean_val_acc = val / static_cast<double>(acc.size());
      }
      result.cells.push_back(cell);
    }
  }
  return result;
}

void write_run_csv_row(std::ostream& out, const SweepRun& run) {
  out << run.model << ',' << run.ring_length << ',' << run.layers << ',' << run.seed << ',';
  if (run.failed) {
    out << "FAILED,FAILED,";
  } else {
    out << format_double(run.val_acc) << ',' << format_double(run.test_acc) << ',';
  }
  out << run.params << ',' << format_double(run.seconds) << '\n';
}

void write_cell_csv(std::ostream& out, const SweepResult& result, int repeats) {
  out << kCellCsvHeader << '\n';
  for (const auto& c : result.cells) {
    out << c.model << ',' << c.ring_length << ',' << c.layers << ',' << c.hidden << ',' << c.params << ','
        << repeats << ',' << c.failed_runs << ',';
    if (c.failed_runs == repeats) {
      out << "FAILED,FAILED,FAILED\n";
    } else {
      out << format_double(c.mean_val_acc) << ',' << format_double(c.mean_test_acc) << ','
          << format_double(c.std_test_acc) << '\n';
    }
  }
}

}  // namespace nudrew
