#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nudrew/random.hpp"
#include "nudrew/tensor.hpp"

namespace nudrew {

struct AdamOptions {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moments are created lazily on the first step, one pair per parameter in the
// order the parameters are passed; later steps must pass the same list.
struct AdamState {
  AdamOptions options;
  std::int64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  AdamState() = default;
  explicit AdamState(AdamOptions opts) : options(opts) {}
};

// One bias-corrected Adam update. Gradients are read, never cleared.
void adam_step(std::span<Tensor* const> params, AdamState& state);

void zero_grads(std::span<Tensor* const> params);

// Uniform in +-sqrt(6 / (fan_in + fan_out)) for a [fan_in, fan_out] weight.
Tensor glorot_init(const Shape& shape, Rng& rng);

}  // namespace nudrew
