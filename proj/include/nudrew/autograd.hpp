#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "nudrew/tensor.hpp"

namespace nudrew {

enum class OpKind {
  kParameter,
  kConstant,
  kMatmul,
  kSpmm,
  kMixedSpmm,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kScale,
  kAddScalar,
  kMulScalar,
  kAddBias,
  kRelu,
  kSigmoid,
  kSoftplus,
  kConcat,
  kSliceCols,
  kGatherRows,
  kScatterAddRows,
  kSum,
  kMean,
  kSumAll,
  kBatchNorm,
  kCrossEntropy,
};

std::string_view op_name(OpKind kind);

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::int32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::int32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::int32_t id_ = -1;
};

// Records operations in execution order. Node ids are a topological order, so
// backward walks them in reverse. Parameter leaves alias caller-owned tensors;
// those tensors (and any SparseMatrix passed to spmm) must outlive the tape.
class Tape {
 public:
  // in_grads[i] is null when input i does not need a gradient.
  using BackwardFn = std::function<void(const Tensor& out_grad, std::span<Tensor* const> in_grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf bound to a caller tensor. If it requires grad, backward accumulates into it.
  Var parameter(Tensor& tensor);
  Var constant(Tensor value);
  Var record(OpKind kind, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(const Var& v) const;
  bool needs_grad(const Var& v) const { return nodes_[static_cast<std::size_t>(v.id())].needs_grad; }
  OpKind kind(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].kind; }
  const std::vector<std::int32_t>& inputs(std::int32_t id) const {
    return nodes_[static_cast<std::size_t>(id)].inputs;
  }
  std::size_t size() const { return nodes_.size(); }

  // Scalar loss; seeds d(loss)/d(loss) = 1.
  void backward(const Var& loss);
  // Vector-Jacobian product: seed has the output's shape.
  void backward(const Var& output, const Tensor& seed);

  // Node ids visited by the most recent backward, in visit order.
  const std::vector<std::int32_t>& last_visit_order() const { return visit_order_; }

 private:
  struct Node {
    OpKind kind;
    Tensor value;
    std::vector<std::int32_t> inputs;
    BackwardFn backward;
    Tensor* parameter = nullptr;
    bool needs_grad = false;
  };

  void check_owned(const Var& v) const;

  std::deque<Node> nodes_;
  std::vector<std::int32_t> visit_order_;
};

struct BatchNormStats {
  Tensor running_mean;
  Tensor running_var;
};

struct BatchNormOptions {
  double momentum = 0.1;
  double eps = 1e-5;
};

// Dense matrix product of 2-D operands.
Var matmul(const Var& a, const Var& b);
// Constant sparse matrix times dense 2-D operand.
Var spmm(const SparseMatrix& m, const Var& x);
// sum_k w[k] * mats[k] x with w a Var of mats.size() elements. Differentiable in
// w and x; the matrices must outlive the tape.
Var mixed_spmm(std::span<const SparseMatrix* const> mats, const Var& w, const Var& x);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double offset);
// Multiplies every element of a by the single element of s.
Var mul_scalar(const Var& a, const Var& s);
// Adds a row vector (numel == cols) to every row of a 2-D operand.
Var add_bias(const Var& a, const Var& bias);

// Subgradient at 0 is 0.
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);

Var concat(std::span<const Var> parts, int axis);
Var slice_cols(const Var& a, std::int64_t begin, std::int64_t end);
Var gather_rows(const Var& a, std::span<const std::int32_t> index);
// base with source row r added into row index[r].
Var scatter_add_rows(const Var& base, std::span<const std::int32_t> index, const Var& source);
// scatter_add_rows onto a zero base of num_rows rows.
Var segment_sum(const Var& source, std::span<const std::int32_t> index, std::int64_t num_rows);

// Reductions of 2-D operands. axis 0 yields [1, cols], axis 1 yields [rows, 1].
Var sum(const Var& a, int axis);
Var mean(const Var& a, int axis);
Var sum_all(const Var& a);

// Per-column normalization over rows. Training uses batch statistics and
// updates stats in place; evaluation uses the running statistics.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormStats& stats, bool training,
               const BatchNormOptions& options = {});

// Mean softmax cross-entropy over rows of logits.
Var cross_entropy_logits(const Var& logits, std::span<const std::int32_t> labels);

}  // namespace nudrew
