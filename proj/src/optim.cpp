#include "nudrew/optim.hpp"

#include <cmath>
#include <string>

#include "nudrew/errors.hpp"

namespace nudrew {

void adam_step(std::span<Tensor* const> params, AdamState& state) {
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params[p]->requires_grad()) {
      throw ValidationError("adam_step: parameter " + std::to_string(p) + " has no gradient");
    }
  }
  if (state.first_moment.empty() && state.step == 0) {
    for (const Tensor* p : params) {
      state.first_moment.emplace_back(p->shape());
      state.second_moment.emplace_back(p->shape());
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ValidationError("adam_step: parameter count changed between steps");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (state.first_moment[p].shape() != params[p]->shape()) {
      throw DimensionError("adam_step: moment shape " + shape_to_string(state.first_moment[p].shape()) +
                           " does not match parameter " + shape_to_string(params[p]->shape()));
    }
  }

  ++state.step;
  const auto& o = state.options;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(o.beta1, t);
  const double correction2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& param = *params[p];
    auto grad = param.grad();
    Tensor& m = state.first_moment[p];
    Tensor& v = state.second_moment[p];
    for (std::int64_t i = 0; i < param.numel(); ++i) {
      const double g = grad[static_cast<std::size_t>(i)];
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g;
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      param[i] -= o.lr * m_hat / (std::sqrt(v_hat) + o.eps);
    }
  }
}

void zero_grads(std::span<Tensor* const> params) {
  for (Tensor* p : params) p->zero_grad();
}

Tensor glorot_init(const Shape& shape, Rng& rng) {
  if (shape.size() != 2) throw DimensionError("glorot_init expects a 2-D shape, got " + shape_to_string(shape));
  const double fan_sum = static_cast<double>(shape[0] + shape[1]);
  const double bound = fan_sum > 0 ? std::sqrt(6.0 / fan_sum) : 0.0;
  Tensor t(shape);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

}  // namespace nudrew
