#include "hkt/grad/tensor.hpp"

#include <gtest/gtest.h>

#include "hkt/error.hpp"

namespace hkt::grad {
namespace {

TEST(TensorTest, ShapeMatchesData) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST(TensorTest, DetachedMatmulIdentity) {
  Tensor v = Tensor::from_rows({{0.5}, {-2.0}, {3.25}});
  EXPECT_EQ(matmul(Tensor::identity(3), v), v);
}

TEST(TensorTest, DetachedMatmulHandValues) {
  Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
  Tensor b = Tensor::from_rows({{1}, {1}});
  EXPECT_EQ(matmul(a, b), Tensor::from_rows({{3}, {7}}));
  EXPECT_EQ(matmul_nt(a, a), matmul(a, a.transposed()));
  EXPECT_EQ(matmul_tn(a, a), matmul(a.transposed(), a));
}

TEST(TensorTest, MatmulMismatchNamesBothShapes) {
  try {
    matmul(Tensor::matrix(2, 3), Tensor::matrix(2, 3));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3] * [2x3]"), std::string::npos) << msg;
  }
}

}  // namespace
}  // namespace hkt::grad
