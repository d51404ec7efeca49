#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nudrew::testing {

JacobianCheck check_jacobian(const std::function<Var(Tape&)>& build, const std::vector<Tensor*>& wrt, double step) {
  std::int64_t num_in = 0;
  for (auto* t : wrt) num_in += t->numel();

  std::vector<double> analytic;
  std::int64_t num_out = 0;
  {
    Tape tape;
    Var out = build(tape);
    num_out = out.value().numel();
    analytic.assign(static_cast<std::size_t>(num_out * num_in), 0.0);
    for (std::int64_t o = 0; o < num_out; ++o) {
      for (auto* t : wrt) t->zero_grad();
      Tensor seed(out.shape());
      seed[o] = 1.0;
      tape.backward(out, seed);
      std::int64_t col = 0;
      for (auto* t : wrt) {
        for (std::int64_t e = 0; e < t->numel(); ++e) analytic[static_cast<std::size_t>(o * num_in + col + e)] = t->grad()[static_cast<std::size_t>(e)];
        col += t->numel();
      }
    }
  }

  std::vector<double> numeric(analytic.size(), 0.0);
  std::int64_t col = 0;
  for (auto* t : wrt) {
    for (std::int64_t e = 0; e < t->numel(); ++e) {
      const double orig = (*t)[e];
      (*t)[e] = orig + step;
      Tape tp;
      const Tensor plus = build(tp).value();
      (*t)[e] = orig - step;
      Tape tm;
      const Tensor minus = build(tm).value();
      (*t)[e] = orig;
      for (std::int64_t o = 0; o < num_out; ++o) {
        numeric[static_cast<std::size_t>(o * num_in + col + e)] = (plus[o] - minus[o]) / (2.0 * step);
      }
    }
    col += t->numel();
  }

  double diff = 0.0, norm_a = 0.0, norm_n = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    norm_a += analytic[i] * analytic[i];
    norm_n += numeric[i] * numeric[i];
  }
  JacobianCheck r;
  r.analytic_norm = std::sqrt(norm_a);
  r.entries = static_cast<std::int64_t>(analytic.size());
  const double denom = std::max(std::sqrt(norm_n), 1e-12);
  r.rel_error = std::sqrt(diff) / denom;
  return r;
}

Tensor random_tensor(const Shape& shape, Rng& rng, double scale) {
  Tensor t(shape);
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

std::vector<std::vector<int>> floyd_warshall(const Graph& g) {
  const int n = g.num_nodes();
  const int inf = std::numeric_limits<int>::max() / 4;
  std::vector<std::vector<int>> d(n, std::vector<int>(n, inf));
  for (int i = 0; i < n; ++i) d[i][i] = 0;
  for (const auto& e : g.edges()) {
    d[e.u][e.v] = 1;
    d[e.v][e.u] = 1;
  }
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (d[i][k] + d[k][j] < d[i][j]) d[i][j] = d[i][k] + d[k][j];
  for (auto& row : d)
    for (auto& v : row)
      if (v >= inf) v = -1;
  return d;
}

Dense dense_gamma1(const Graph& g) {
  const int n = g.num_nodes();
  Dense a(n, std::vector<double>(n, 0.0));
  for (const auto& e : g.edges()) {
    const double v = 1.0 / std::sqrt(static_cast<double>(g.degree(e.u)) * g.degree(e.v));
    a[e.u][e.v] = v;
    a[e.v][e.u] = v;
  }
  return a;
}

Dense dense_matmul(const Dense& a, const Dense& b) {
  const std::size_t n = a.size(), m = b[0].size(), k = b.size();
  Dense c(n, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p)
      if (a[i][p] != 0.0)
        for (std::size_t j = 0; j < m; ++j) c[i][j] += a[i][p] * b[p][j];
  return c;
}

Dense dense_power(const Dense& a, int r) {
  Dense out(a.size(), std::vector<double>(a.size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) out[i][i] = 1.0;
  for (int i = 0; i < r; ++i) out = dense_matmul(out, a);
  return out;
}

}  // namespace nudrew::testing
