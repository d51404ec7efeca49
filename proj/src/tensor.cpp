#include "nudrew/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "nudrew/errors.hpp"

namespace nudrew {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw DimensionError("negative dimension in shape " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), cols_(trailing(shape_)), data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), cols_(trailing(shape_)), data_(std::move(data)) {
  if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_)) {
    throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_to_string(shape_));
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const auto r = static_cast<std::int64_t>(rows.size());
  const auto c = r ? static_cast<std::int64_t>(rows.begin()->size()) : 0;
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(r * c));
  for (const auto& row : rows) {
    if (static_cast<std::int64_t>(row.size()) != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({static_cast<std::int64_t>(values.size())}, std::vector<double>(values));
}

Tensor Tensor::identity(std::int64_t n) {
  Tensor t({n, n});
  for (std::int64_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

std::int64_t Tensor::rows() const { return shape_.empty() ? 1 : shape_[0]; }

std::int64_t Tensor::trailing(const Shape& shape) {
  std::int64_t c = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) c *= shape[i];
  return c;
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_to_string(shape_));
  return data_[0];
}

void Tensor::set_requires_grad(bool on) {
  requires_grad_ = on;
  if (on) {
    grad_.assign(data_.size(), 0.0);
  } else {
    grad_.clear();
  }
}

void Tensor::zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

Tensor Tensor::grad_tensor() const {
  if (!requires_grad_) throw ValidationError("tensor does not require grad");
  return Tensor(shape_, grad_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw DimensionError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::same_values(const Tensor& other) const {
  return shape_ == other.shape_ && data_ == other.data_;
}

SparseMatrix SparseMatrix::empty(std::int64_t rows, std::int64_t cols) {
  SparseMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.offsets.assign(static_cast<std::size_t>(rows + 1), 0);
  return m;
}

SparseMatrix SparseMatrix::transposed() const {
  SparseMatrix t = empty(cols, rows);
  for (auto c : indices) ++t.offsets[static_cast<std::size_t>(c) + 1];
  for (std::int64_t i = 0; i < cols; ++i) t.offsets[i + 1] += t.offsets[i];
  t.indices.resize(indices.size());
  t.values.resize(values.size());
  std::vector<std::int64_t> cursor(t.offsets.begin(), t.offsets.end() - 1);
  for (std::int64_t r = 0; r < rows; ++r) {
    for (auto p = offsets[r]; p < offsets[r + 1]; ++p) {
      const auto c = indices[static_cast<std::size_t>(p)];
      const auto dst = cursor[static_cast<std::size_t>(c)]++;
      t.indices[static_cast<std::size_t>(dst)] = static_cast<std::int32_t>(r);
      t.values[static_cast<std::size_t>(dst)] = values[static_cast<std::size_t>(p)];
    }
  }
  return t;
}

}  // namespace nudrew
