#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "nudrew/autograd.hpp"
#include "nudrew/checkpoint.hpp"
#include "nudrew/errors.hpp"
#include "nudrew/optim.hpp"

namespace nudrew {
namespace {

TEST(AdamTest, FirstStepMovesByLearningRate) {
  Tensor p({1});
  p.set_requires_grad(true);
  p.grad()[0] = 1.0;
  AdamState state;
  Tensor* params[] = {&p};
  adam_step(params, state);
  EXPECT_NEAR(p[0], -0.01, 1e-9);
  EXPECT_EQ(state.step, 1);
  EXPECT_EQ(p.grad()[0], 1.0);
}

TEST(AdamTest, ZeroGradientLeavesParamsUnchanged) {
  Tensor p = Tensor::vector({0.5, -2.0});
  p.set_requires_grad(true);
  AdamState state;
  Tensor* params[] = {&p};
  for (int i = 0; i < 10; ++i) adam_step(params, state);
  EXPECT_EQ(p[0], 0.5);
  EXPECT_EQ(p[1], -2.0);
}

TEST(AdamTest, MissingGradientRejected) {
  Tensor p({2});
  AdamState state;
  Tensor* params[] = {&p};
  EXPECT_THROW(adam_step(params, state), ValidationError);
}

TEST(AdamTest, MinimizesQuadraticBowl) {
  // f(p) = sum_i c_i (p_i - t_i)^2, argmin t.
  const Tensor target = Tensor::vector({0.3, -0.2, 0.15});
  const Tensor curv = Tensor::vector({1.0, 2.0, 0.5});
  Tensor p({3});
  p.set_requires_grad(true);
  AdamState state(AdamOptions{.lr = 0.01});
  Tensor* params[] = {&p};
  for (int step = 0; step < 200; ++step) {
    zero_grads(params);
    Tape tape;
    Var d = sub(tape.parameter(p), tape.constant(target));
    tape.backward(sum_all(mul(tape.constant(curv), mul(d, d))));
    adam_step(params, state);
  }
  for (int i = 0; i < 3; ++i) EXPECT_LT(std::abs(p[i] - target[i]), 1e-3) << i;
}

TEST(GlorotTest, DeterministicAndBounded) {
  Rng a(3), b(3);
  Tensor x = glorot_init({4, 4}, a), y = glorot_init({4, 4}, b);
  EXPECT_TRUE(x.same_values(y));
  const double bound = std::sqrt(6.0 / 8.0);
  for (double v : x.data()) EXPECT_LE(std::abs(v), bound);
}

TEST(GlorotTest, EmpiricalVarianceMatches) {
  Rng rng(17);
  Tensor w = glorot_init({250, 400}, rng);
  double mean = 0.0, sq = 0.0;
  for (double v : w.data()) mean += v;
  mean /= static_cast<double>(w.numel());
  for (double v : w.data()) sq += (v - mean) * (v - mean);
  const double var = sq / static_cast<double>(w.numel() - 1);
  const double expected = 2.0 / (250 + 400);
  EXPECT_LT(std::abs(var - expected) / expected, 0.05);
}

TEST(CheckpointTest, RoundTripPreservesBits) {
  NamedTensors in;
  in.emplace_back("w", Tensor::matrix({{1.0 / 3.0, -0.0}, {1e-300, 2.5}}));
  in.emplace_back("s", Tensor::scalar(-7.25));
  in.emplace_back("empty", Tensor({0, 4}));
  std::stringstream buf;
  write_checkpoint(buf, in);
  auto out = read_checkpoint(buf);
  ASSERT_EQ(out.size(), in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    EXPECT_EQ(out[i].first, in[i].first);
    EXPECT_TRUE(out[i].second.same_values(in[i].second));
  }
  EXPECT_TRUE(std::signbit(out[0].second[1]));
}

TEST(CheckpointTest, RejectsBadMagicAndTruncation) {
  std::stringstream bad("NOTACKPT........");
  EXPECT_THROW(read_checkpoint(bad), ValidationError);
  NamedTensors in;
  in.emplace_back("w", Tensor({3}, 1.0));
  std::stringstream buf;
  write_checkpoint(buf, in);
  std::string s = buf.str();
  std::stringstream cut(s.substr(0, s.size() - 4));
  EXPECT_THROW(read_checkpoint(cut), ValidationError);
}

}  // namespace
}  // namespace nudrew
