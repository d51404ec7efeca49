#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "nudrew/checkpoint.hpp"
#include "nudrew/errors.hpp"
#include "nudrew/hop_index.hpp"
#include "nudrew/model.hpp"
#include "nudrew/random.hpp"
#include "nudrew/run_config.hpp"
#include "nudrew/schedule.hpp"
#include "nudrew/sensitivity.hpp"
#include "nudrew/tasks.hpp"
#include "nudrew/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace nudrew {
namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitDiverged = 3;

// Shared by every subcommand; flags win over key=value overrides, which win over
// the config file.
struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "sectioned key = value run config");
  cmd->add_option("--seed", args.seed, "seed (overrides the config)");
  cmd->add_option("--out", args.out, "output directory (overrides the config)");
  cmd->add_option("--threads", args.threads, "worker threads (overrides the config)");
  cmd->add_option("overrides", args.overrides, "key=value settings, e.g. model.hidden=32 or L=3");
}

RunConfig resolve(const CommonArgs& args) {
  RunConfig c;
  if (!args.config.empty()) c.load_file(args.config);
  for (const auto& o : args.overrides) c.apply_override(o);
  if (args.seed) c.set("seed", std::to_string(*args.seed));
  if (args.out) c.set("out", *args.out);
  if (args.threads) c.set("threads", std::to_string(*args.threads));
  return c;
}

fs::path prepare_out(const RunConfig& c) {
  const fs::path out = c.get_string("out");
  fs::create_directories(out);
  std::ofstream echo(out / "resolved_config.ini");
  echo << "# nudrew " << kVersion << " resolved config\n";
  c.write(echo);
  return out;
}

std::string model_token(const ModelConfig& m) {
  std::string t(arch_name(m.arch));
  if (is_drew(m.arch)) t += ":" + m.nu.to_string();
  return t;
}

json config_json(const ModelConfig& m) {
  return {{"arch", arch_name(m.arch)},   {"layers", m.layers},   {"hidden", m.hidden},
          {"nu", m.nu.to_string()},      {"k_cap", m.k_cap},     {"in_dim", m.in_dim},
          {"out_dim", m.out_dim},        {"readout", readout_site_name(m.readout)}};
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

// Appends, writing the header only to a fresh file.
std::ofstream open_runs_csv(const fs::path& path, const RunConfig& c) {
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw ValidationError("cannot write " + path.string());
  if (fresh) out << kRunCsvHeader << '\n';
  out << "# nudrew " << kVersion << " seed " << c.get_uint("seed") << '\n';
  return out;
}

RingTransferDataset ring_data(const RunConfig& c) {
  return gen_ring_transfer(static_cast<std::int32_t>(c.get_int("data.n")), static_cast<std::int32_t>(c.get_int("data.k")),
                           static_cast<std::int32_t>(c.get_int("data.classes")), c.get_uint("seed"));
}

int cmd_precompute(const RunConfig& c) {
  const Graph g = graph_from(c);
  const auto k_max = c.get_int("precompute.k_max");
  const int cap = k_max > 0 ? static_cast<int>(k_max) : std::max<int>(1, g.num_nodes());
  const HopIndex hi = compute_hop_index(g, cap);
  const fs::path out = prepare_out(c);
  std::ofstream cache(out / "hop_index.txt");
  write_hop_index(cache, hi);
  std::cout << "wrote " << (out / "hop_index.txt").string() << " (" << g.num_nodes() << " nodes, k_max " << cap
            << ", eccentricity cap " << eccentricity_cap(g, hi) << ")\n";
  return 0;
}

int cmd_train(const RunConfig& c) {
  const ModelConfig cfg = ring_model_config_from(c);
  TrainOptions opts = train_options_from(c);
  const auto data = ring_data(c);
  const fs::path out = prepare_out(c);
  opts.on_epoch = [](int epoch, double loss, double val) {
    std::fprintf(stderr, "epoch %d loss %.6f val_acc %.4f\n", epoch, loss, val);
  };
  const auto r = train(cfg, data, opts);

  json doc = {{"version", kVersion},
              {"seed", r.seed},
              {"config", config_json(r.config)},
              {"params", r.params},
              {"train_loss", r.train_loss},
              {"val_acc", r.val_acc},
              {"best_val_acc", r.best_val_acc},
              {"best_epoch", r.best_epoch},
              {"test_acc", r.test_acc},
              {"seconds", r.seconds},
              {"failed", r.failed},
              {"failure", r.failure}};
  write_json(out / "run.json", doc);
  SweepRun row;
  row.model = model_token(cfg);
  row.ring_length = data.ring_length;
  row.layers = cfg.layers;
  row.seed = r.seed;
  row.val_acc = r.best_val_acc;
  row.test_acc = r.test_acc;
  row.params = r.params;
  row.seconds = r.seconds;
  row.failed = r.failed;
  auto csv = open_runs_csv(out / "runs.csv", c);
  write_run_csv_row(csv, row);
  if (r.failed) {
    std::cerr << "FAILED: " << r.failure << '\n';
    return kExitDiverged;
  }
  save_checkpoint(out / "model.ckpt", r.best_state);
  std::printf("model %s L=%d hidden=%d params=%lld best_val_acc=%.4f test_acc=%.4f seconds=%.1f\n",
              row.model.c_str(), cfg.layers, cfg.hidden, static_cast<long long>(r.params), r.best_val_acc, r.test_acc,
              r.seconds);
  return 0;
}

int cmd_eval(const RunConfig& c) {
  const ModelConfig cfg = ring_model_config_from(c);
  std::string ckpt = c.get_string("eval.checkpoint");
  if (ckpt.empty()) ckpt = (fs::path(c.get_string("out")) / "model.ckpt").string();
  Model model(cfg, 0);
  model.load_state(load_checkpoint(ckpt));
  const auto data = ring_data(c);
  const fs::path out = prepare_out(c);
  json doc = {{"version", kVersion}, {"seed", c.get_uint("seed")}, {"checkpoint", ckpt}, {"config", config_json(cfg)}};
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    const double acc = evaluate(model, data, s);
    doc[std::string(split_name(s)) + "_acc"] = acc;
    std::printf("%s_acc %.4f\n", std::string(split_name(s)).c_str(), acc);
  }
  write_json(out / "eval.json", doc);
  return 0;
}

int cmd_sweep(const RunConfig& c) {
  const SweepOptions so = sweep_options_from(c);
  const fs::path out = prepare_out(c);
  auto runs = open_runs_csv(out / "runs.csv", c);
  const auto result = sweep(so, [&](const SweepRun& run) {
    write_run_csv_row(runs, run);
    runs.flush();
    std::fprintf(stderr, "%s k=%d seed=%llu test_acc=%s (%.1fs)\n", run.model.c_str(), run.ring_length,
                 static_cast<unsigned long long>(run.seed), run.failed ? "FAILED" : std::to_string(run.test_acc).c_str(),
                 run.seconds);
  });
  std::ofstream cells(out / "cells.csv");
  cells << "# nudrew " << kVersion << " seed " << so.seed << '\n';
  write_cell_csv(cells, result, so.repeats);
  write_cell_csv(std::cout, result, so.repeats);
  for (const auto& cell : result.cells) {
    if (cell.failed_runs > 0) {
      std::cerr << "FAILED runs in cell " << cell.model << " k=" << cell.ring_length << '\n';
      return kExitDiverged;
    }
  }
  return 0;
}

int cmd_sensitivity(const RunConfig& c) {
  const std::string mode = c.get_string("sensitivity.mode");
  if (mode == "decay") {
    const DecayOptions d = decay_options_from(c);
    const auto rows = decay_comparison(d);
    const fs::path out = prepare_out(c);
    std::ofstream f(out / "decay.json");
    write_decay_json(f, d, rows);
    std::printf("r classical drew direct ratio\n");
    for (const auto& r : rows) std::printf("%d %.6e %.6e %.6e %.4f\n", r.r, r.classical, r.drew, r.direct, r.ratio());
    const auto checks = check_decay(rows);
    std::printf("drew_dominates_direct %s\nratio_nondecreasing %s\n", checks.drew_dominates_direct ? "yes" : "no",
                checks.ratio_nondecreasing ? "yes" : "no");
    return 0;
  }
  if (mode != "jacobian") throw ConfigError("sensitivity.mode", "sensitivity.mode: expected jacobian or decay, got '" + mode + "'");
  const Graph g = graph_from(c);
  const ModelConfig cfg = graph_model_config_from(c);
  const std::uint64_t seed = c.get_uint("seed");
  const Model model(cfg, seed);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  Tensor x({g.num_nodes(), cfg.in_dim});
  for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = rng.normal();
  const HopIndex hi = compute_hop_index(g, std::max(1, max_scheduled_hop(cfg)));
  const auto upto = c.get_int("sensitivity.upto_layer");
  if (upto > cfg.layers) throw ConfigError("sensitivity.upto_layer", "sensitivity.upto_layer exceeds model.layers");
  auto report = jacobian_norms(model, g, hi, x, upto < 0 ? cfg.layers : static_cast<int>(upto),
                               sensitivity_options_from(c));
  report.seed = seed;
  report.graph_id = c.get_string("graph.id");
  if (report.graph_id.empty()) {
    report.graph_id = c.get_string("graph.file").empty() ? c.get_string("graph.generator") : c.get_string("graph.file");
  }
  const fs::path out = prepare_out(c);
  std::ofstream f(out / "sensitivity.json");
  write_sensitivity_json(f, report);
  std::cout << "wrote " << (out / "sensitivity.json").string() << '\n';
  return 0;
}

int cmd_schedule_dump(const RunConfig& c) {
  ModelConfig m = model_config_from(c);
  if (m.layers < 1) throw ConfigError("model.layers", "model.layers must be set (>= 1) for this command");
  if (c.get_string("model.nu") == "half") m.nu = DelayPolicy::finite(std::max(1, m.layers / 2));
  std::cout << build_schedule(m.layers, m.nu, m.k_cap > 0 ? m.k_cap : m.layers).dump();
  return 0;
}

int cmd_params(const RunConfig& c) {
  const ModelConfig m = graph_model_config_from(c);
  std::printf("arch %s\nlayers %d\nhidden %d\nmessage_weight_units %lld\nparams %lld\n",
              std::string(arch_name(m.arch)).c_str(), m.layers, m.hidden,
              static_cast<long long>(message_weight_count(m)), static_cast<long long>(count_params(m)));
  return 0;
}

}  // namespace
}  // namespace nudrew

int main(int argc, char** argv) {
  using namespace nudrew;
  CLI::App app{"Dynamically rewired message passing with delay: training, sensitivity and schedule tools"};
  app.set_version_flag("--version", std::string("nudrew ") + kVersion);
  app.require_subcommand(1);

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&);
  };
  const Command commands[] = {
      {"precompute", "edge list or generator -> hop-index cache", cmd_precompute},
      {"train", "train one model on RingTransfer; writes run.json, runs.csv and model.ckpt", cmd_train},
      {"eval", "evaluate a checkpoint on every RingTransfer split", cmd_eval},
      {"ringtransfer-sweep", "models x ring lengths x seeds; writes runs.csv and cells.csv", cmd_sweep},
      {"sensitivity", "Jacobian norms between node states, or the linear-probe decay table", cmd_sensitivity},
      {"schedule-dump", "print the (layer, hop, source state) schedule", cmd_schedule_dump},
      {"params", "parameter count of a model config", cmd_params},
  };
  CommonArgs args;
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& cmd : commands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    add_common(sub, args);
    subs.emplace_back(sub, &cmd);
  }
  CLI11_PARSE(app, argc, argv);

  for (auto& [sub, cmd] : subs) {
    if (!sub->parsed()) continue;
    try {
      return cmd->run(resolve(args));
    } catch (const ConfigError& e) {
      std::cerr << "config error [" << e.field() << "]: " << e.what() << '\n';
      return kExitConfig;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitRuntime;
    }
  }
  return kExitConfig;
}
