#include "milab/tensor.hpp"

#include <gtest/gtest.h>

#include "milab/error.hpp"

namespace milab {
namespace {

TEST(Tensor, MatrixLayoutIsRowMajor) {
  const Tensor t = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(t.shape(), (Shape{2, 3}));
  EXPECT_EQ(t.at(1, 0), 4.0);
  EXPECT_EQ(t.row(1)[2], 6.0);
  EXPECT_EQ(t[4], 5.0);
}

TEST(Tensor, VectorBehavesAsSingleRow) {
  const Tensor v = Tensor::vector({1, 2, 3});
  EXPECT_EQ(v.rows(), 1u);
  EXPECT_EQ(v.cols(), 3u);
}

TEST(Tensor, TransposeSwapsIndices) {
  const Tensor t = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  const Tensor tt = t.transposed();
  ASSERT_EQ(tt.shape(), (Shape{3, 2}));
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(t.at(r, c), tt.at(c, r));
  }
}

TEST(Tensor, GatherRowsKeepsRequestedOrder) {
  const Tensor t = Tensor::matrix({{1, 1}, {2, 2}, {3, 3}});
  const std::size_t idx[] = {2, 0};
  const Tensor g = t.gather_rows(idx);
  EXPECT_EQ(g, Tensor::matrix({{3, 3}, {1, 1}}));
}

TEST(Tensor, ReshapeRejectsWrongElementCount) {
  const Tensor t = Tensor::zeros({2, 3});
  EXPECT_EQ(t.reshaped({3, 2}).shape(), (Shape{3, 2}));
  EXPECT_THROW(t.reshaped({4, 2}), DimensionError);
}

TEST(Tensor, ConstructorChecksDataLength) {
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), DimensionError);
}

TEST(Tensor, GradAccumulates) {
  Tensor t = Tensor::zeros({2});
  const double g[] = {1.0, -2.0};
  t.accumulate_grad(g);
  t.accumulate_grad(g);
  ASSERT_TRUE(t.grad());
  EXPECT_EQ((*t.grad())[0], 2.0);
  EXPECT_EQ((*t.grad())[1], -4.0);
  t.zero_grad();
  EXPECT_EQ((*t.grad())[1], 0.0);
}

TEST(Tensor, IdentityHasUnitDiagonal) {
  const Tensor i = Tensor::identity(3);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(i.at(r, c), r == c ? 1.0 : 0.0);
  }
}

}  // namespace
}  // namespace milab
