#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "shield/errors.hpp"
#include "shield/pcm.hpp"
#include "support.hpp"

using namespace shield;
using shield::testing::random_matrix;

namespace {

PcmParams fixed_params(const Matrix& w1, const Matrix& b1, const Matrix& w2, const Matrix& b2) {
  PcmParams p;
  p.w_vision = Param("w1", w1);
  p.b_vision = Param("b1", b1);
  p.w_text = Param("w2", w2);
  p.b_text = Param("b2", b2);
  return p;
}

Matrix fuse(PcmParams& p, const Matrix& hv, const Matrix& ht) {
  Tape t;
  return pcm_fuse(t.constant(hv), t.constant(ht), t, p).value();
}

}  // namespace

TEST(Pcm, IdentityMapsMultiplyElementwise) {
  PcmParams p = fixed_params(Matrix::identity(2), Matrix(2, 1), Matrix::identity(2), Matrix(2, 1));
  EXPECT_EQ(fuse(p, Matrix::column({2, -1}), Matrix::column({3, 4})), Matrix::column({6, -4}));
}

TEST(Pcm, SignAgreementLaw) {
  std::mt19937_64 rng(31);
  PcmParams p = fixed_params(Matrix::identity(3), Matrix(3, 1), Matrix::identity(3), Matrix(3, 1));
  for (int i = 0; i < 200; ++i) {
    const Matrix hv = random_matrix(rng, 3, 1), ht = random_matrix(rng, 3, 1);
    const Matrix out = fuse(p, hv, ht);
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_EQ(out[k] > 0, (hv[k] > 0) == (ht[k] > 0));
    }
  }
}

TEST(Pcm, BilinearWithZeroBias) {
  std::mt19937_64 rng(32);
  PcmParams p = fixed_params(random_matrix(rng, 5, 3), Matrix(5, 1), random_matrix(rng, 5, 4), Matrix(5, 1));
  const Matrix hv = random_matrix(rng, 3, 1), hv2 = random_matrix(rng, 3, 1);
  const Matrix ht = random_matrix(rng, 4, 1);
  const double a = 1.7, b = -0.4;
  const Matrix lhs = fuse(p, add(scaled(hv, a), scaled(hv2, b)), ht);
  const Matrix rhs = add(scaled(fuse(p, hv, ht), a), scaled(fuse(p, hv2, ht), b));
  EXPECT_LE(max_abs_diff(lhs, rhs), 1e-12);
}

TEST(Pcm, ForwardPoolsBeforeFusing) {
  std::mt19937_64 rng(33);
  const Matrix patches = random_matrix(rng, 6, 3), tokens = random_matrix(rng, 4, 2);
  PcmParams p = PcmParams::init(5, 3, 2, rng);
  Matrix hv(3, 1), ht(2, 1);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 3; ++c) hv[c] += patches(r, c) / 6.0;
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 2; ++c) ht[c] += tokens(r, c) / 4.0;
  Matrix expected(5, 1);
  for (std::size_t k = 0; k < 5; ++k) {
    double v = p.b_vision.value[k], t = p.b_text.value[k];
    for (std::size_t c = 0; c < 3; ++c) v += p.w_vision.value(k, c) * hv[c];
    for (std::size_t c = 0; c < 2; ++c) t += p.w_text.value(k, c) * ht[c];
    expected[k] = v * t;
  }
  Tape tape;
  EXPECT_LE(max_abs_diff(pcm_forward(patches, tokens, tape, p).value(), expected), 1e-12);
}

TEST(Pcm, InitIsBoundedByFanIn) {
  std::mt19937_64 rng(34);
  const PcmParams p = PcmParams::init(64, 16, 9, rng);
  EXPECT_EQ(p.fused_dim(), 64u);
  EXPECT_EQ(p.vision_dim(), 16u);
  EXPECT_EQ(p.text_dim(), 9u);
  for (double x : p.w_vision.value.data()) EXPECT_LE(std::abs(x), 0.25);
  for (double x : p.w_text.value.data()) EXPECT_LE(std::abs(x), 1.0 / 3.0);
}

TEST(Pcm, ShapeMismatchThrows) {
  std::mt19937_64 rng(35);
  PcmParams p = PcmParams::init(4, 3, 2, rng);
  Tape t;
  EXPECT_THROW(pcm_fuse(t.constant(Matrix(2, 1)), t.constant(Matrix(2, 1)), t, p), ShapeError);
  EXPECT_THROW(pcm_forward(Matrix(0, 3), Matrix(2, 2), t, p), DomainError);
}
