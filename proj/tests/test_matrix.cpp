#include <gtest/gtest.h>

#include <random>

#include "shield/errors.hpp"
#include "shield/matrix.hpp"
#include "shield/sparse.hpp"
#include "support.hpp"

using namespace shield;
using shield::testing::random_matrix;

namespace {

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

CsrMatrix csr_from_dense(const Matrix& m) {
  CsrMatrix c;
  c.rows = m.rows();
  c.cols = m.cols();
  c.row_ptr.push_back(0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t k = 0; k < m.cols(); ++k) {
      if (m(r, k) != 0.0) {
        c.col_idx.push_back(k);
        c.values.push_back(m(r, k));
      }
    }
    c.row_ptr.push_back(c.values.size());
  }
  return c;
}

}  // namespace

TEST(Matrix, MatmulTwoByTwoExample) {
  const Matrix a{{1, 2}, {3, 4}};
  const Matrix b{{5, 6}, {7, 8}};
  EXPECT_EQ(matmul(a, b), (Matrix{{19, 22}, {43, 50}}));
}

TEST(Matrix, MatmulMatchesNaiveLoops) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> dim(1, 7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
    const Matrix a = random_matrix(rng, m, k);
    const Matrix b = random_matrix(rng, k, n);
    EXPECT_LE(max_abs_diff(matmul(a, b), naive_matmul(a, b)), 1e-12);
  }
}

TEST(Matrix, MatmulIsAssociative) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix a = random_matrix(rng, 3, 4), b = random_matrix(rng, 4, 5), c = random_matrix(rng, 5, 2);
    EXPECT_LE(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))), 1e-10);
  }
}

TEST(Matrix, MatmulShapeErrorNamesBothShapes) {
  try {
    matmul(Matrix(2, 3), Matrix(2, 3));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
  }
}

TEST(Matrix, PowerAndIdentity) {
  const Matrix a{{1, 1}, {0, 1}};
  EXPECT_EQ(matrix_power(a, 0), Matrix::identity(2));
  EXPECT_EQ(matrix_power(a, 5), (Matrix{{1, 5}, {0, 1}}));
  EXPECT_THROW(matrix_power(Matrix(2, 3), 2), ShapeError);
}

TEST(Matrix, DotNormTranspose) {
  const Matrix v = Matrix::column({3, 4});
  EXPECT_DOUBLE_EQ(norm2(v.data()), 5.0);
  EXPECT_DOUBLE_EQ(dot(v.data(), v.data()), 25.0);
  const Matrix m{{1, 2, 3}, {4, 5, 6}};
  EXPECT_EQ(m.transposed(), (Matrix{{1, 4}, {2, 5}, {3, 6}}));
  EXPECT_EQ(m.transposed().transposed(), m);
}

TEST(Sparse, SpmmMatchesDense) {
  std::mt19937_64 rng(13);
  std::bernoulli_distribution keep(0.3);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix a = random_matrix(rng, 6, 5);
    for (double& x : a.data())
      if (!keep(rng)) x = 0.0;
    const CsrMatrix csr = csr_from_dense(a);
    EXPECT_EQ(csr.to_dense(), a);
    const Matrix b = random_matrix(rng, 5, 3);
    EXPECT_LE(max_abs_diff(spmm(csr, b), naive_matmul(a, b)), 1e-12);
    const Matrix c = random_matrix(rng, 6, 2);
    EXPECT_LE(max_abs_diff(spmm_transposed(csr, c), naive_matmul(a.transposed(), c)), 1e-12);
  }
}

TEST(Sparse, AtReturnsZeroForMissing) {
  const CsrMatrix c = csr_from_dense(Matrix{{0, 2}, {3, 0}});
  EXPECT_EQ(c.nnz(), 2u);
  EXPECT_EQ(c.at(0, 0), 0.0);
  EXPECT_EQ(c.at(0, 1), 2.0);
  EXPECT_EQ(c.at(1, 0), 3.0);
}
