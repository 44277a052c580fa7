#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "shield/errors.hpp"
#include "shield/theorem.hpp"

using namespace shield;

namespace {

// One token, one patch, one identity layer: Â = [[.5,.5],[.5,.5]], reach = 1.
TheoremInstance two_node_instance(const Matrix& token, const Matrix& patch, const Matrix& u) {
  TheoremInstance inst;
  ReferenceGraph& g = inst.graph;
  g.n_t = 1;
  g.n_v = 1;
  g.grid_rows = g.grid_cols = 1;
  g.cross_edges = {{0, 1}};
  g.token_features = token;
  g.patch_features = patch;
  inst.gcn.activation = Activation::kIdentity;
  inst.gcn.layers.emplace_back("w", Matrix::identity(token.cols()));
  inst.classifier = u;
  inst.flipped_node = 0;
  return inst;
}

}  // namespace

TEST(Theorem, HandInstanceValues) {
  // s = (x0 + x1) / 2 = (2, 1); l = u^T s = 2.
  const auto inst = two_node_instance(Matrix{{3, 0}}, Matrix{{1, 2}}, Matrix::column({1, 0}));
  const TheoremReport r = verify_theorem(inst);
  EXPECT_DOUBLE_EQ(r.l, 2.0);
  // delta = (-6, 0): delta_l = 1 * (-6) / 2 = -3 and the score flips.
  EXPECT_DOUBLE_EQ(r.delta_l_closed, -3.0);
  EXPECT_NEAR(r.delta_l_empirical, -3.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.cs_upper_bound, 3.0);
  EXPECT_DOUBLE_EQ(r.rhs_threshold, 4.0);
  EXPECT_TRUE(r.flip_occurred);
  EXPECT_GT(r.delta_norm, r.rhs_threshold);
  EXPECT_TRUE(r.passed());
}

TEST(Theorem, BelowThresholdCannotFlip) {
  // |delta| = 2 < threshold 4: no flip.
  const auto inst = two_node_instance(Matrix{{1, 0}}, Matrix{{3, 2}}, Matrix::column({1, 0}));
  const TheoremReport r = verify_theorem(inst);
  EXPECT_LT(r.delta_norm, r.rhs_threshold);
  EXPECT_FALSE(r.flip_occurred);
  EXPECT_TRUE(r.passed());
}

TEST(Theorem, ParallelDeltaMakesBoundTight) {
  const auto inst = two_node_instance(Matrix{{2, 2}}, Matrix{{1, -1}}, Matrix::column({1, 1}));
  const TheoremReport r = verify_theorem(inst);
  EXPECT_NEAR(std::abs(r.delta_l_closed), r.cs_upper_bound, 1e-12);
}

TEST(Theorem, OrthogonalDeltaLeavesScoreUnchanged) {
  const auto inst = two_node_instance(Matrix{{0, 5}}, Matrix{{1, 1}}, Matrix::column({1, 0}));
  const TheoremReport r = verify_theorem(inst);
  EXPECT_EQ(r.delta_l_closed, 0.0);
  EXPECT_NEAR(r.delta_l_empirical, 0.0, 1e-15);
  EXPECT_FALSE(r.flip_occurred);
}

TEST(Theorem, ZeroScoreIsVacuous) {
  const auto inst = two_node_instance(Matrix{{1, 0}}, Matrix{{-1, 0}}, Matrix::column({1, 0}));
  const TheoremReport r = verify_theorem(inst);
  EXPECT_EQ(r.l, 0.0);
  EXPECT_TRUE(r.checks[2].vacuous);
  EXPECT_TRUE(r.passed());
}

TEST(Theorem, ReluIsRejected) {
  auto inst = two_node_instance(Matrix{{1, 0}}, Matrix{{1, 0}}, Matrix::column({1, 0}));
  inst.gcn.activation = Activation::kRelu;
  EXPECT_THROW(verify_theorem(inst), ConfigError);
}

TEST(Theorem, ClosedFormMatchesEmpiricalOnRandomInstances) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto inst = random_instance(seed, 1 + seed % 6, 1 + seed % 3, 1 + seed % 4, 1 + seed % 3, 1 + seed % 4);
    const double closed = delta_l_closed_form(inst);
    const double emp = delta_l_empirical(inst);
    EXPECT_LE(std::abs(closed - emp), 1e-9 * std::max(1.0, std::abs(emp))) << "seed " << seed;
    EXPECT_LE(std::abs(closed), cs_bound(inst) + 1e-12);
  }
}

TEST(Theorem, CampaignHasNoFailures) {
  const CampaignSummary s = run_theorem_campaign(300, 7);
  EXPECT_EQ(s.failures(), 0u);
  EXPECT_GT(s.flips, 0u);
  EXPECT_LE(s.max_bound_ratio, 1.0 + 1e-12);
  const auto j = to_json(s);
  EXPECT_EQ(j["failures"], 0);
}

TEST(Theorem, FlippedNodeIsUniform) {
  // Chi-square over the 6 nodes of a fixed 2-token, 2x2-grid layout.
  constexpr int kDraws = 10000;
  std::vector<int> counts(6, 0);
  for (int seed = 0; seed < kDraws; ++seed) ++counts[random_instance(static_cast<std::uint64_t>(seed), 2, 2, 2, 1, 1).flipped_node];
  const double expected = kDraws / 6.0;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 20.52);  // 5 dof, p = 0.001
}
