#include <gtest/gtest.h>

#include "nudrew/errors.hpp"
#include "nudrew/tensor.hpp"

namespace nudrew {
namespace {

TEST(TensorTest, DataLengthMustMatchShape) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.numel(), 6);
  EXPECT_EQ(t.rows(), 2);
  EXPECT_EQ(t.cols(), 3);
}

TEST(TensorTest, GradPresentOnlyWhenRequired) {
  Tensor t({2, 2});
  EXPECT_TRUE(t.grad().empty());
  t.set_requires_grad(true);
  ASSERT_EQ(t.grad().size(), 4u);
  EXPECT_EQ(t.grad_tensor().shape(), t.shape());
  t.set_requires_grad(false);
  EXPECT_THROW(t.grad_tensor(), ValidationError);
}

TEST(TensorTest, ScalarAndMatrixLiterals) {
  auto s = Tensor::scalar(3.0);
  EXPECT_EQ(s.rank(), 0);
  EXPECT_DOUBLE_EQ(s.item(), 3.0);
  auto m = Tensor::matrix({{1, 2}, {3, 4}});
  EXPECT_DOUBLE_EQ(m.at(1, 0), 3.0);
  EXPECT_THROW(Tensor::matrix({{1, 2}, {3}}), DimensionError);
  EXPECT_THROW(m.item(), DimensionError);
  EXPECT_THROW(m.reshaped({3}), DimensionError);
  EXPECT_EQ(m.reshaped({4}).shape(), Shape({4}));
}

TEST(SparseMatrixTest, TransposeSwapsEntries) {
  SparseMatrix m = SparseMatrix::empty(2, 3);
  m.offsets = {0, 2, 3};
  m.indices = {0, 2, 1};
  m.values = {1.0, 2.0, 3.0};
  auto t = m.transposed();
  EXPECT_EQ(t.rows, 3);
  EXPECT_EQ(t.offsets, (std::vector<std::int64_t>{0, 1, 2, 3}));
  EXPECT_EQ(t.indices, (std::vector<std::int32_t>{0, 1, 0}));
  EXPECT_EQ(t.values, (std::vector<double>{1.0, 3.0, 2.0}));
}

}  // namespace
}  // namespace nudrew
