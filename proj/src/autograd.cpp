#include "nudrew/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "nudrew/errors.hpp"

namespace nudrew {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

ConstMatrixMap as_matrix(const Tensor& t) { return ConstMatrixMap(t.raw(), t.rows(), t.cols()); }
MatrixMap as_matrix(Tensor& t) { return MatrixMap(t.raw(), t.rows(), t.cols()); }

Tape& common_tape(const Var& a, const Var& b) {
  if (!a.valid() || !b.valid()) throw ValidationError("operation on an unbound Var");
  if (&a.tape() != &b.tape()) throw ValidationError("operands are recorded on different tapes");
  return a.tape();
}

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw ValidationError("operation on an unbound Var");
  return a.tape();
}

void require_rank2(const Tensor& t, std::string_view op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a 2-D operand, got " + shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

void check_index(std::span<const std::int32_t> index, std::int64_t bound, std::string_view op) {
  for (auto i : index) {
    if (i < 0 || i >= bound) {
      throw RangeError(std::string(op) + ": row index " + std::to_string(i) + " outside [0, " +
                       std::to_string(bound) + ")");
    }
  }
}

void accumulate(double* dst, const double* src, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) dst[i] += src[i];
}

void accumulate_product(double* dst, const double* a, const double* b, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) dst[i] += a[i] * b[i];
}

template <typename F>
Var elementwise_unary(OpKind kind, const Var& a, F forward_and_derivative) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  Tensor deriv(x.shape());
  const double* px = x.raw();
  double* py = out.raw();
  double* pd = deriv.raw();
  for (std::int64_t i = 0, n = x.numel(); i < n; ++i) {
    auto [y, dy] = forward_and_derivative(px[i]);
    py[i] = y;
    pd[i] = dy;
  }
  return tape_of(a).record(kind, std::move(out), {a},
                           [deriv = std::move(deriv)](const Tensor& g, std::span<Tensor* const> in) {
                             if (!in[0]) return;
                             accumulate_product(in[0]->raw(), g.raw(), deriv.raw(), g.numel());
                           });
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kParameter: return "parameter";
    case OpKind::kConstant: return "constant";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kSpmm: return "spmm";
    case OpKind::kMixedSpmm: return "mixed_spmm";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kMulScalar: return "mul_scalar";
    case OpKind::kAddBias: return "add_bias";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSoftplus: return "softplus";
    case OpKind::kConcat: return "concat";
    case OpKind::kSliceCols: return "slice_cols";
    case OpKind::kGatherRows: return "gather_rows";
    case OpKind::kScatterAddRows: return "scatter_add_rows";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kSumAll: return "sum_all";
    case OpKind::kBatchNorm: return "batch_norm";
    case OpKind::kCrossEntropy: return "cross_entropy";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (!tape_) throw ValidationError("value() on an unbound Var");
  return tape_->value(*this);
}

Var Tape::parameter(Tensor& tensor) {
  Node node{OpKind::kParameter, Tensor{}, {}, nullptr, &tensor, tensor.requires_grad()};
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::int32_t>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{OpKind::kConstant, std::move(value), {}, nullptr, nullptr, false});
  return Var(this, static_cast<std::int32_t>(nodes_.size() - 1));
}

Var Tape::record(OpKind kind, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node{kind, std::move(value), {}, std::move(backward), nullptr, false};
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    check_owned(in);
    node.inputs.push_back(in.id());
    node.needs_grad = node.needs_grad || nodes_[static_cast<std::size_t>(in.id())].needs_grad;
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::int32_t>(nodes_.size() - 1));
}

const Tensor& Tape::value(const Var& v) const {
  const Node& node = nodes_[static_cast<std::size_t>(v.id())];
  return node.parameter ? *node.parameter : node.value;
}

void Tape::check_owned(const Var& v) const {
  if (v.tape_ != this || v.id_ < 0 || static_cast<std::size_t>(v.id_) >= nodes_.size()) {
    throw ValidationError("Var does not belong to this tape");
  }
}

void Tape::backward(const Var& loss) {
  check_owned(loss);
  if (loss.value().numel() != 1) {
    throw ValidationError("backward() needs a scalar loss, got shape " + shape_to_string(loss.shape()));
  }
  backward(loss, Tensor(loss.shape(), 1.0));
}

void Tape::backward(const Var& output, const Tensor& seed) {
  check_owned(output);
  require_same_shape(value(output), seed, "backward seed");
  visit_order_.clear();
  const auto last = static_cast<std::size_t>(output.id());
  std::vector<Tensor> grads(last + 1);
  std::vector<char> has_grad(last + 1, 0);
  grads[last] = seed;
  has_grad[last] = 1;

  std::vector<Tensor*> in_grads;
  for (std::size_t id = last + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!has_grad[id] || !node.needs_grad) continue;
    visit_order_.push_back(static_cast<std::int32_t>(id));
    if (node.parameter) {
      auto acc = node.parameter->grad();
      const Tensor& g = grads[id];
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[static_cast<std::int64_t>(i)];
    } else if (node.backward) {
      in_grads.assign(node.inputs.size(), nullptr);
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const auto in = static_cast<std::size_t>(node.inputs[k]);
        if (!nodes_[in].needs_grad) continue;
        if (!has_grad[in]) {
          grads[in] = Tensor(value(Var(this, static_cast<std::int32_t>(in))).shape());
          has_grad[in] = 1;
        }
        in_grads[k] = &grads[in];
      }
      node.backward(grads[id], in_grads);
    }
    grads[id] = Tensor{};
  }
}

Var matmul(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_rank2(x, "matmul");
  require_rank2(y, "matmul");
  if (x.cols() != y.rows()) {
    throw DimensionError("matmul: inner dimensions differ " + shape_to_string(x.shape()) + " x " +
                         shape_to_string(y.shape()));
  }
  Tensor out({x.rows(), y.cols()});
  as_matrix(out).noalias() = as_matrix(x) * as_matrix(y);
  return tape.record(OpKind::kMatmul, std::move(out), {a, b},
                     [px = &x, py = &y](const Tensor& g, std::span<Tensor* const> in) {
                       if (in[0]) as_matrix(*in[0]).noalias() += as_matrix(g) * as_matrix(*py).transpose();
                       if (in[1]) as_matrix(*in[1]).noalias() += as_matrix(*px).transpose() * as_matrix(g);
                     });
}

Var spmm(const SparseMatrix& m, const Var& x) {
  const Tensor& h = x.value();
  require_rank2(h, "spmm");
  if (h.rows() != m.cols) {
    throw DimensionError("spmm: sparse matrix has " + std::to_string(m.cols) + " columns, operand " +
                         shape_to_string(h.shape()));
  }
  const std::int64_t d = h.cols();
  Tensor out({m.rows, d});
  for (std::int64_t r = 0; r < m.rows; ++r) {
    double* dst = out.raw() + r * d;
    for (auto p = m.offsets[r]; p < m.offsets[r + 1]; ++p) {
      const double w = m.values[static_cast<std::size_t>(p)];
      const double* src = h.raw() + static_cast<std::int64_t>(m.indices[static_cast<std::size_t>(p)]) * d;
      for (std::int64_t c = 0; c < d; ++c) dst[c] += w * src[c];
    }
  }
  return tape_of(x).record(OpKind::kSpmm, std::move(out), {x},
                           [pm = &m, d](const Tensor& g, std::span<Tensor* const> in) {
                             if (!in[0]) return;
                             for (std::int64_t r = 0; r < pm->rows; ++r) {
                               const double* src = g.raw() + r * d;
                               for (auto p = pm->offsets[r]; p < pm->offsets[r + 1]; ++p) {
                                 const double w = pm->values[static_cast<std::size_t>(p)];
                                 double* dst =
                                     in[0]->raw() +
                                     static_cast<std::int64_t>(pm->indices[static_cast<std::size_t>(p)]) * d;
                                 for (std::int64_t c = 0; c < d; ++c) dst[c] += w * src[c];
                               }
                             }
                           });
}

Var mixed_spmm(std::span<const SparseMatrix* const> mats, const Var& w, const Var& x) {
  Tape& tape = common_tape(w, x);
  const Tensor& h = x.value();
  require_rank2(h, "mixed_spmm");
  if (w.value().numel() != static_cast<std::int64_t>(mats.size())) {
    throw DimensionError("mixed_spmm: " + std::to_string(mats.size()) + " matrices but weights of shape " +
                         shape_to_string(w.value().shape()));
  }
  if (mats.empty()) throw DimensionError("mixed_spmm: no matrices");
  const std::int64_t rows = mats[0]->rows;
  for (const SparseMatrix* m : mats) {
    if (m->rows != rows || m->cols != h.rows()) {
      throw DimensionError("mixed_spmm: sparse matrix " + std::to_string(m->rows) + "x" + std::to_string(m->cols) +
                           " does not fit operand " + shape_to_string(h.shape()));
    }
  }
  const std::int64_t d = h.cols();
  const double* wv = w.value().raw();
  Tensor out({rows, d});
  for (std::int64_t r = 0; r < rows; ++r) {
    double* dst = out.raw() + r * d;
    for (std::size_t k = 0; k < mats.size(); ++k) {
      const SparseMatrix& m = *mats[k];
      for (auto p = m.offsets[r]; p < m.offsets[r + 1]; ++p) {
        const double coef = wv[k] * m.values[static_cast<std::size_t>(p)];
        const double* src = h.raw() + static_cast<std::int64_t>(m.indices[static_cast<std::size_t>(p)]) * d;
        for (std::int64_t c = 0; c < d; ++c) dst[c] += coef * src[c];
      }
    }
  }
  std::vector<const SparseMatrix*> held(mats.begin(), mats.end());
  return tape.record(
      OpKind::kMixedSpmm, std::move(out), {w, x},
      [held = std::move(held), pw = &w.value(), ph = &h, rows, d](const Tensor& g, std::span<Tensor* const> in) {
        for (std::size_t k = 0; k < held.size(); ++k) {
          const SparseMatrix& m = *held[k];
          const double wk = pw->raw()[k];
          double dw = 0.0;
          for (std::int64_t r = 0; r < rows; ++r) {
            const double* gr = g.raw() + r * d;
            for (auto p = m.offsets[r]; p < m.offsets[r + 1]; ++p) {
              const double v = m.values[static_cast<std::size_t>(p)];
              const std::int64_t j = m.indices[static_cast<std::size_t>(p)];
              if (in[0]) {
                const double* hj = ph->raw() + j * d;
                double dot = 0.0;
                for (std::int64_t c = 0; c < d; ++c) dot += gr[c] * hj[c];
                dw += v * dot;
              }
              if (in[1]) {
                double* dst = in[1]->raw() + j * d;
                const double coef = wk * v;
                for (std::int64_t c = 0; c < d; ++c) dst[c] += coef * gr[c];
              }
            }
          }
          if (in[0]) in[0]->raw()[k] += dw;
        }
      });
}

Var add(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape(x, y, "add");
  Tensor out(x.shape());
  {
    const double* px = x.raw();
    const double* py = y.raw();
    double* po = out.raw();
    for (std::int64_t i = 0, n = x.numel(); i < n; ++i) po[i] = px[i] + py[i];
  }
  return tape.record(OpKind::kAdd, std::move(out), {a, b}, [](const Tensor& g, std::span<Tensor* const> in) {
    for (auto* dst : in) {
      if (dst) accumulate(dst->raw(), g.raw(), g.numel());
    }
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape(x, y, "sub");
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] - y[i];
  return tape.record(OpKind::kSub, std::move(out), {a, b}, [](const Tensor& g, std::span<Tensor* const> in) {
    if (in[0]) {
      for (std::int64_t i = 0; i < g.numel(); ++i) (*in[0])[i] += g[i];
    }
    if (in[1]) {
      for (std::int64_t i = 0; i < g.numel(); ++i) (*in[1])[i] -= g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape(x, y, "mul");
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] * y[i];
  return tape.record(OpKind::kMul, std::move(out), {a, b},
                     [px = &x, py = &y](const Tensor& g, std::span<Tensor* const> in) {
                       if (in[0]) {
                         for (std::int64_t i = 0; i < g.numel(); ++i) (*in[0])[i] += g[i] * (*py)[i];
                       }
                       if (in[1]) {
                         for (std::int64_t i = 0; i < g.numel(); ++i) (*in[1])[i] += g[i] * (*px)[i];
                       }
                     });
}

Var div(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape(x, y, "div");
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] / y[i];
  return tape.record(OpKind::kDiv, std::move(out), {a, b},
                     [px = &x, py = &y](const Tensor& g, std::span<Tensor* const> in) {
                       if (in[0]) {
                         for (std::int64_t i = 0; i < g.numel(); ++i) (*in[0])[i] += g[i] / (*py)[i];
                       }
                       if (in[1]) {
                         for (std::int64_t i = 0; i < g.numel(); ++i) {
                           const double yi = (*py)[i];
                           (*in[1])[i] -= g[i] * (*px)[i] / (yi * yi);
                         }
                       }
                     });
}

Var scale(const Var& a, double factor) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] * factor;
  return tape_of(a).record(OpKind::kScale, std::move(out), {a},
                           [factor](const Tensor& g, std::span<Tensor* const> in) {
                             if (!in[0]) return;
                             for (std::int64_t i = 0; i < g.numel(); ++i) (*in[0])[i] += g[i] * factor;
                           });
}

Var add_scalar(const Var& a, double offset) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] + offset;
  return tape_of(a).record(OpKind::kAddScalar, std::move(out), {a},
                           [](const Tensor& g, std::span<Tensor* const> in) {
                             if (!in[0]) return;
                             for (std::int64_t i = 0; i < g.numel(); ++i) (*in[0])[i] += g[i];
                           });
}

Var mul_scalar(const Var& a, const Var& s) {
  Tape& tape = common_tape(a, s);
  const Tensor& x = a.value();
  const Tensor& factor = s.value();
  if (factor.numel() != 1) {
    throw DimensionError("mul_scalar: factor must have one element, got " + shape_to_string(factor.shape()));
  }
  const double f = factor[0];
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] * f;
  return tape.record(OpKind::kMulScalar, std::move(out), {a, s},
                     [px = &x, f](const Tensor& g, std::span<Tensor* const> in) {
                       if (in[0]) {
                         for (std::int64_t i = 0; i < g.numel(); ++i) (*in[0])[i] += g[i] * f;
                       }
                       if (in[1]) {
                         double acc = 0.0;
                         for (std::int64_t i = 0; i < g.numel(); ++i) acc += g[i] * (*px)[i];
                         (*in[1])[0] += acc;
                       }
                     });
}

Var add_bias(const Var& a, const Var& bias) {
  Tape& tape = common_tape(a, bias);
  const Tensor& x = a.value();
  const Tensor& b = bias.value();
  require_rank2(x, "add_bias");
  const std::int64_t rows = x.rows();
  const std::int64_t cols = x.cols();
  if (b.numel() != cols) {
    throw DimensionError("add_bias: bias " + shape_to_string(b.shape()) + " does not match " +
                         shape_to_string(x.shape()));
  }
  Tensor out(x.shape());
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* src = x.raw() + r * cols;
    double* dst = out.raw() + r * cols;
    for (std::int64_t c = 0; c < cols; ++c) dst[c] = src[c] + b.raw()[c];
  }
  return tape.record(OpKind::kAddBias, std::move(out), {a, bias},
                     [rows, cols](const Tensor& g, std::span<Tensor* const> in) {
                       if (in[0]) accumulate(in[0]->raw(), g.raw(), g.numel());
                       if (in[1]) {
                         for (std::int64_t r = 0; r < rows; ++r) {
                           accumulate(in[1]->raw(), g.raw() + r * cols, cols);
                         }
                       }
                     });
}

Var relu(const Var& a) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  const double* px = x.raw();
  double* py = out.raw();
  for (std::int64_t i = 0, n = x.numel(); i < n; ++i) py[i] = px[i] > 0.0 ? px[i] : 0.0;
  return tape_of(a).record(OpKind::kRelu, std::move(out), {a}, [px](const Tensor& g, std::span<Tensor* const> in) {
    if (!in[0]) return;
    double* dst = in[0]->raw();
    const double* pg = g.raw();
    for (std::int64_t i = 0, n = g.numel(); i < n; ++i) dst[i] += px[i] > 0.0 ? pg[i] : 0.0;
  });
}

Var sigmoid(const Var& a) {
  return elementwise_unary(OpKind::kSigmoid, a, [](double v) {
    const double y = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    return std::pair{y, y * (1.0 - y)};
  });
}

Var softplus(const Var& a) {
  return elementwise_unary(OpKind::kSoftplus, a, [](double v) {
    const double y = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
    const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    return std::pair{y, s};
  });
}

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw ValidationError("concat of zero tensors");
  if (axis != 0 && axis != 1) throw DimensionError("concat axis must be 0 or 1");
  Tape& tape = tape_of(parts[0]);
  std::vector<const Tensor*> values;
  for (const auto& p : parts) {
    common_tape(parts[0], p);
    values.push_back(&p.value());
    require_rank2(p.value(), "concat");
  }
  const std::int64_t fixed = axis == 0 ? values[0]->cols() : values[0]->rows();
  std::int64_t total = 0;
  std::vector<std::int64_t> extents;
  for (const auto* v : values) {
    if ((axis == 0 ? v->cols() : v->rows()) != fixed) {
      throw DimensionError("concat: mismatched " + shape_to_string(values[0]->shape()) + " and " +
                           shape_to_string(v->shape()));
    }
    extents.push_back(axis == 0 ? v->rows() : v->cols());
    total += extents.back();
  }
  const std::int64_t out_rows = axis == 0 ? total : fixed;
  const std::int64_t out_cols = axis == 0 ? fixed : total;
  Tensor out({out_rows, out_cols});
  std::int64_t offset = 0;
  for (std::size_t p = 0; p < values.size(); ++p) {
    const Tensor& v = *values[p];
    for (std::int64_t r = 0; r < v.rows(); ++r) {
      for (std::int64_t c = 0; c < v.cols(); ++c) {
        if (axis == 0) {
          out.at(offset + r, c) = v.at(r, c);
        } else {
          out.at(r, offset + c) = v.at(r, c);
        }
      }
    }
    offset += extents[p];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record(OpKind::kConcat, std::move(out), std::move(inputs),
                     [axis, extents](const Tensor& g, std::span<Tensor* const> in) {
                       std::int64_t offset = 0;
                       for (std::size_t p = 0; p < in.size(); ++p) {
                         if (in[p]) {
                           Tensor& dst = *in[p];
                           for (std::int64_t r = 0; r < dst.rows(); ++r) {
                             for (std::int64_t c = 0; c < dst.cols(); ++c) {
                               dst.at(r, c) += axis == 0 ? g.at(offset + r, c) : g.at(r, offset + c);
                             }
                           }
                         }
                         offset += extents[p];
                       }
                     });
}

Var slice_cols(const Var& a, std::int64_t begin, std::int64_t end) {
  const Tensor& x = a.value();
  require_rank2(x, "slice_cols");
  if (begin < 0 || end > x.cols() || begin > end) {
    throw RangeError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") outside columns of " + shape_to_string(x.shape()));
  }
  const std::int64_t width = end - begin;
  Tensor out({x.rows(), width});
  for (std::int64_t r = 0; r < x.rows(); ++r) {
    for (std::int64_t c = 0; c < width; ++c) out.at(r, c) = x.at(r, begin + c);
  }
  return tape_of(a).record(OpKind::kSliceCols, std::move(out), {a},
                           [begin, width](const Tensor& g, std::span<Tensor* const> in) {
                             if (!in[0]) return;
                             for (std::int64_t r = 0; r < g.rows(); ++r) {
                               for (std::int64_t c = 0; c < width; ++c) in[0]->at(r, begin + c) += g.at(r, c);
                             }
                           });
}

Var gather_rows(const Var& a, std::span<const std::int32_t> index) {
  const Tensor& x = a.value();
  require_rank2(x, "gather_rows");
  check_index(index, x.rows(), "gather_rows");
  const std::int64_t d = x.cols();
  const auto m = static_cast<std::int64_t>(index.size());
  Tensor out({m, d});
  for (std::int64_t r = 0; r < m; ++r) {
    std::copy_n(x.raw() + static_cast<std::int64_t>(index[static_cast<std::size_t>(r)]) * d, d,
                out.raw() + r * d);
  }
  return tape_of(a).record(
      OpKind::kGatherRows, std::move(out), {a},
      [idx = std::vector<std::int32_t>(index.begin(), index.end()), d](const Tensor& g,
                                                                       std::span<Tensor* const> in) {
        if (!in[0]) return;
        for (std::size_t r = 0; r < idx.size(); ++r) {
          double* dst = in[0]->raw() + static_cast<std::int64_t>(idx[r]) * d;
          const double* src = g.raw() + static_cast<std::int64_t>(r) * d;
          for (std::int64_t c = 0; c < d; ++c) dst[c] += src[c];
        }
      });
}

Var scatter_add_rows(const Var& base, std::span<const std::int32_t> index, const Var& source) {
  Tape& tape = common_tape(base, source);
  const Tensor& b = base.value();
  const Tensor& s = source.value();
  require_rank2(b, "scatter_add_rows");
  require_rank2(s, "scatter_add_rows");
  if (s.cols() != b.cols() || s.rows() != static_cast<std::int64_t>(index.size())) {
    throw DimensionError("scatter_add_rows: source " + shape_to_string(s.shape()) + " with " +
                         std::to_string(index.size()) + " indices into " + shape_to_string(b.shape()));
  }
  check_index(index, b.rows(), "scatter_add_rows");
  const std::int64_t d = b.cols();
  Tensor out = b;
  out.set_requires_grad(false);
  for (std::size_t r = 0; r < index.size(); ++r) {
    double* dst = out.raw() + static_cast<std::int64_t>(index[r]) * d;
    const double* src = s.raw() + static_cast<std::int64_t>(r) * d;
    for (std::int64_t c = 0; c < d; ++c) dst[c] += src[c];
  }
  return tape.record(
      OpKind::kScatterAddRows, std::move(out), {base, source},
      [idx = std::vector<std::int32_t>(index.begin(), index.end()), d](const Tensor& g,
                                                                       std::span<Tensor* const> in) {
        if (in[0]) {
          for (std::int64_t i = 0; i < g.numel(); ++i) (*in[0])[i] += g[i];
        }
        if (in[1]) {
          for (std::size_t r = 0; r < idx.size(); ++r) {
            const double* src = g.raw() + static_cast<std::int64_t>(idx[r]) * d;
            double* dst = in[1]->raw() + static_cast<std::int64_t>(r) * d;
            for (std::int64_t c = 0; c < d; ++c) dst[c] += src[c];
          }
        }
      });
}

Var segment_sum(const Var& source, std::span<const std::int32_t> index, std::int64_t num_rows) {
  const Var zero = tape_of(source).constant(Tensor({num_rows, source.value().cols()}));
  return scatter_add_rows(zero, index, source);
}

Var sum(const Var& a, int axis) {
  const Tensor& x = a.value();
  require_rank2(x, "sum");
  if (axis != 0 && axis != 1) throw DimensionError("sum axis must be 0 or 1");
  const std::int64_t rows = x.rows();
  const std::int64_t cols = x.cols();
  Tensor out(axis == 0 ? Shape{1, cols} : Shape{rows, 1});
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) out[axis == 0 ? c : r] += x.at(r, c);
  }
  return tape_of(a).record(OpKind::kSum, std::move(out), {a},
                           [axis, rows, cols](const Tensor& g, std::span<Tensor* const> in) {
                             if (!in[0]) return;
                             for (std::int64_t r = 0; r < rows; ++r) {
                               for (std::int64_t c = 0; c < cols; ++c) in[0]->at(r, c) += g[axis == 0 ? c : r];
                             }
                           });
}

Var mean(const Var& a, int axis) {
  const Tensor& x = a.value();
  require_rank2(x, "mean");
  if (axis != 0 && axis != 1) throw DimensionError("mean axis must be 0 or 1");
  const std::int64_t rows = x.rows();
  const std::int64_t cols = x.cols();
  const std::int64_t count = axis == 0 ? rows : cols;
  if (count == 0) throw DimensionError("mean over an empty axis");
  const double inv = 1.0 / static_cast<double>(count);
  Tensor out(axis == 0 ? Shape{1, cols} : Shape{rows, 1});
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) out[axis == 0 ? c : r] += x.at(r, c);
  }
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= inv;
  return tape_of(a).record(OpKind::kMean, std::move(out), {a},
                           [axis, rows, cols, inv](const Tensor& g, std::span<Tensor* const> in) {
                             if (!in[0]) return;
                             for (std::int64_t r = 0; r < rows; ++r) {
                               for (std::int64_t c = 0; c < cols; ++c) {
                                 in[0]->at(r, c) += g[axis == 0 ? c : r] * inv;
                               }
                             }
                           });
}

Var sum_all(const Var& a) {
  const Tensor& x = a.value();
  double acc = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) acc += x[i];
  return tape_of(a).record(OpKind::kSumAll, Tensor::scalar(acc), {a},
                           [](const Tensor& g, std::span<Tensor* const> in) {
                             if (!in[0]) return;
                             const double s = g[0];
                             for (std::int64_t i = 0; i < in[0]->numel(); ++i) (*in[0])[i] += s;
                           });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormStats& stats, bool training,
               const BatchNormOptions& options) {
  Tape& tape = common_tape(x, gamma);
  common_tape(x, beta);
  const Tensor& in = x.value();
  require_rank2(in, "batch_norm");
  const std::int64_t m = in.rows();
  const std::int64_t c = in.cols();
  if (gamma.value().numel() != c || beta.value().numel() != c || stats.running_mean.numel() != c ||
      stats.running_var.numel() != c) {
    throw DimensionError("batch_norm: parameter sizes do not match " + shape_to_string(in.shape()));
  }
  if (training && m == 0) throw DimensionError("batch_norm: empty batch in training mode");

  std::vector<double> mu(static_cast<std::size_t>(c), 0.0);
  std::vector<double> inv_std(static_cast<std::size_t>(c), 0.0);
  if (training) {
    std::vector<double> var(static_cast<std::size_t>(c), 0.0);
    for (std::int64_t r = 0; r < m; ++r) {
      for (std::int64_t j = 0; j < c; ++j) mu[j] += in.at(r, j);
    }
    for (auto& v : mu) v /= static_cast<double>(m);
    for (std::int64_t r = 0; r < m; ++r) {
      for (std::int64_t j = 0; j < c; ++j) {
        const double dev = in.at(r, j) - mu[j];
        var[j] += dev * dev;
      }
    }
    for (std::int64_t j = 0; j < c; ++j) {
      const double biased = var[j] / static_cast<double>(m);
      const double unbiased = m > 1 ? var[j] / static_cast<double>(m - 1) : biased;
      inv_std[j] = 1.0 / std::sqrt(biased + options.eps);
      stats.running_mean[j] = (1.0 - options.momentum) * stats.running_mean[j] + options.momentum * mu[j];
      stats.running_var[j] = (1.0 - options.momentum) * stats.running_var[j] + options.momentum * unbiased;
    }
  } else {
    for (std::int64_t j = 0; j < c; ++j) {
      mu[j] = stats.running_mean[j];
      inv_std[j] = 1.0 / std::sqrt(stats.running_var[j] + options.eps);
    }
  }

  const Tensor& gm = gamma.value();
  const Tensor& bt = beta.value();
  Tensor xhat({m, c});
  Tensor out({m, c});
  for (std::int64_t r = 0; r < m; ++r) {
    for (std::int64_t j = 0; j < c; ++j) {
      const double h = (in.at(r, j) - mu[j]) * inv_std[j];
      xhat.at(r, j) = h;
      out.at(r, j) = gm[j] * h + bt[j];
    }
  }
  return tape.record(
      OpKind::kBatchNorm, std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), pg = &gm, training, m, c](
          const Tensor& g, std::span<Tensor* const> grads) {
        if (grads[1] || grads[2]) {
          for (std::int64_t r = 0; r < m; ++r) {
            for (std::int64_t j = 0; j < c; ++j) {
              if (grads[1]) (*grads[1])[j] += g.at(r, j) * xhat.at(r, j);
              if (grads[2]) (*grads[2])[j] += g.at(r, j);
            }
          }
        }
        if (!grads[0]) return;
        Tensor& dx = *grads[0];
        if (!training) {
          for (std::int64_t r = 0; r < m; ++r) {
            for (std::int64_t j = 0; j < c; ++j) dx.at(r, j) += g.at(r, j) * (*pg)[j] * inv_std[j];
          }
          return;
        }
        std::vector<double> sum_dxhat(static_cast<std::size_t>(c), 0.0);
        std::vector<double> sum_dxhat_xhat(static_cast<std::size_t>(c), 0.0);
        const double* gp = g.raw();
        const double* hp = xhat.raw();
        const double* gmp = pg->raw();
        for (std::int64_t r = 0; r < m; ++r) {
          for (std::int64_t j = 0; j < c; ++j) {
            const double dxhat = gp[r * c + j] * gmp[j];
            sum_dxhat[j] += dxhat;
            sum_dxhat_xhat[j] += dxhat * hp[r * c + j];
          }
        }
        double* dxp = dx.raw();
        const double inv_m = 1.0 / static_cast<double>(m);
        for (std::int64_t r = 0; r < m; ++r) {
          for (std::int64_t j = 0; j < c; ++j) {
            const double dxhat = gp[r * c + j] * gmp[j];
            dxp[r * c + j] += inv_std[j] * inv_m *
                              (static_cast<double>(m) * dxhat - sum_dxhat[j] - hp[r * c + j] * sum_dxhat_xhat[j]);
          }
        }
      });
}

Var cross_entropy_logits(const Var& logits, std::span<const std::int32_t> labels) {
  const Tensor& z = logits.value();
  require_rank2(z, "cross_entropy_logits");
  const std::int64_t m = z.rows();
  const std::int64_t classes = z.cols();
  if (static_cast<std::int64_t>(labels.size()) != m) {
    throw DimensionError("cross_entropy_logits: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(m) + " rows");
  }
  if (m == 0) throw DimensionError("cross_entropy_logits: empty batch");
  for (auto y : labels) {
    if (y < 0 || y >= classes) {
      throw ValidationError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
  Tensor probs({m, classes});
  double loss = 0.0;
  for (std::int64_t r = 0; r < m; ++r) {
    double mx = z.at(r, 0);
    for (std::int64_t j = 1; j < classes; ++j) mx = std::max(mx, z.at(r, j));
    double total = 0.0;
    for (std::int64_t j = 0; j < classes; ++j) {
      probs.at(r, j) = std::exp(z.at(r, j) - mx);
      total += probs.at(r, j);
    }
    for (std::int64_t j = 0; j < classes; ++j) probs.at(r, j) /= total;
    loss += -(z.at(r, labels[static_cast<std::size_t>(r)]) - mx - std::log(total));
  }
  loss /= static_cast<double>(m);
  return tape_of(logits).record(
      OpKind::kCrossEntropy, Tensor::scalar(loss), {logits},
      [probs = std::move(probs), y = std::vector<std::int32_t>(labels.begin(), labels.end()), m, classes](
          const Tensor& g, std::span<Tensor* const> in) {
        if (!in[0]) return;
        const double s = g[0] / static_cast<double>(m);
        for (std::int64_t r = 0; r < m; ++r) {
          for (std::int64_t j = 0; j < classes; ++j) {
            const double target = j == y[static_cast<std::size_t>(r)] ? 1.0 : 0.0;
            in[0]->at(r, j) += s * (probs.at(r, j) - target);
          }
        }
      });
}

}  // namespace nudrew
