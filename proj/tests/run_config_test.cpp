#include "nudrew/run_config.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "nudrew/errors.hpp"

namespace nudrew {
namespace {

RunConfig parse(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  c.load(in, "test.ini");
  return c;
}

std::string field_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<no error>";
}

TEST(RunConfigTest, DefaultsCoverSchema) {
  RunConfig c;
  for (const auto& f : run_config_schema()) {
    EXPECT_EQ(c.raw(f.path()), f.default_value) << f.path();
    EXPECT_FALSE(c.was_set(f.path()));
  }
  EXPECT_EQ(c.get_uint("seed"), 0u);
  EXPECT_EQ(c.get_list("sweep.models").size(), 6u);
}

TEST(RunConfigTest, ParsesSectionsCommentsAndAliases) {
  const auto c = parse(
      "seed = 7  # top level\n"
      "\n"
      "[model]\n"
      "arch = gcn\n"
      "L = 4\n"
      "[data]\n"
      "C = 3\n"
      "[sweep]\n"
      "ks = 4, 6 ,8\n");
  EXPECT_EQ(c.get_uint("seed"), 7u);
  EXPECT_EQ(c.get_string("model.arch"), "gcn");
  EXPECT_EQ(c.get_int("model.layers"), 4);
  EXPECT_EQ(c.get_int("data.classes"), 3);
  EXPECT_EQ(c.get_list("sweep.ks"), (std::vector<std::string>{"4", "6", "8"}));
  EXPECT_TRUE(c.was_set("model.layers"));
}

TEST(RunConfigTest, UnknownKeysNameTheField) {
  EXPECT_EQ(field_of([] { parse("[model]\nhiden = 3\n"); }), "model.hiden");
  EXPECT_EQ(field_of([] { parse("[modle]\n"); }), "modle");
  EXPECT_EQ(field_of([] { parse("colour = red\n"); }), "colour");
  EXPECT_EQ(field_of([] { parse("[model]\nhidden = wide\n"); }), "model.hidden");
  EXPECT_EQ(field_of([] { parse("[model]\nbatch_norm = maybe\n"); }), "model.batch_norm");
  EXPECT_EQ(field_of([] { parse("[model]\nhidden\n"); }), "hidden");
  try {
    parse("[train]\n\nlr = fast\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("test.ini:3"), std::string::npos) << e.what();
  }
}

TEST(RunConfigTest, OverridesResolveBareKeys) {
  RunConfig c;
  c.apply_override("hidden=32");
  c.apply_override("model.nu=2");
  c.apply_override("k=12");
  EXPECT_EQ(c.get_int("model.hidden"), 32);
  EXPECT_EQ(c.get_string("model.nu"), "2");
  EXPECT_EQ(c.get_int("data.k"), 12);
  EXPECT_EQ(field_of([&] { c.apply_override("n=3"); }), "n");
  EXPECT_EQ(field_of([&] { c.apply_override("nonsense"); }), "nonsense");
  EXPECT_EQ(field_of([&] { c.apply_override("model.L=x"); }), "model.layers");
}

TEST(RunConfigTest, WriteRoundTrips) {
  RunConfig c;
  c.apply_override("arch=drew_gin");
  c.apply_override("seed=99");
  c.apply_override("sweep.models=gcn,constant");
  std::ostringstream out;
  c.write(out);
  const auto back = parse(out.str());
  for (const auto& f : run_config_schema()) EXPECT_EQ(back.raw(f.path()), c.raw(f.path())) << f.path();
}

TEST(RunConfigTest, RingModelDefaults) {
  RunConfig c;
  c.apply_override("k=20");
  c.apply_override("nu=half");
  auto m = ring_model_config_from(c);
  EXPECT_EQ(m.layers, 10);
  EXPECT_EQ(m.nu, DelayPolicy::finite(5));
  EXPECT_EQ(m.in_dim, 5);
  EXPECT_EQ(m.out_dim, 5);
  c.apply_override("arch=sp_gcn");
  EXPECT_EQ(ring_model_config_from(c).k_cap, 10);

  c.apply_override("arch=drew_gcn");
  c.apply_override("nu=1");
  c.apply_override("budget_reference=64");
  m = ring_model_config_from(c);
  ModelConfig gcn = m;
  gcn.arch = Arch::kGcn;
  gcn.hidden = 64;
  // Nearest width: neither neighbour lands closer to the budget.
  const auto gap = [&](int hidden) {
    ModelConfig probe = m;
    probe.hidden = hidden;
    return std::llabs(count_params(probe) - count_params(gcn));
  };
  EXPECT_LE(gap(m.hidden), gap(m.hidden - 1));
  EXPECT_LE(gap(m.hidden), gap(m.hidden + 1));
}

TEST(RunConfigTest, GraphModelNeedsLayers) {
  RunConfig c;
  EXPECT_EQ(field_of([&] { graph_model_config_from(c); }), "model.layers");
  c.apply_override("L=2");
  c.apply_override("linear_probe=true");
  c.apply_override("hidden=3");
  const auto m = graph_model_config_from(c);
  EXPECT_EQ(m.in_dim, 3);
  c.apply_override("arch=drew_gin");
  EXPECT_EQ(field_of([&] { graph_model_config_from(c); }), "model");
}

TEST(RunConfigTest, BuildsGraphsAndOptions) {
  RunConfig c;
  c.apply_override("generator=binary_tree");
  c.apply_override("depth=2");
  EXPECT_EQ(graph_from(c).num_nodes(), 7);
  c.apply_override("generator=moebius");
  EXPECT_EQ(field_of([&] { graph_from(c); }), "graph.generator");

  c.apply_override("sweep.ks=4,x");
  EXPECT_EQ(field_of([&] { sweep_options_from(c); }), "sweep.ks");
  c.apply_override("sweep.ks=4,6");
  c.apply_override("sweep.models=gcn,drew_gcn");
  EXPECT_EQ(field_of([&] { sweep_options_from(c); }), "sweep.models");
  c.apply_override("sweep.models=gcn");
  c.apply_override("threads=3");
  const auto so = sweep_options_from(c);
  EXPECT_EQ(so.ring_lengths, (std::vector<int>{4, 6}));
  EXPECT_EQ(so.threads, 3);
  EXPECT_EQ(so.train.epochs, 50);

  c.apply_override("family=cycle");
  c.apply_override("r_max=4");
  const auto d = decay_options_from(c);
  EXPECT_EQ(d.family, GraphFamily::kCycle);
  EXPECT_EQ(d.r_max, 4);
}

}  // namespace
}  // namespace nudrew
