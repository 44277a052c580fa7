#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "shield/errors.hpp"
#include "shield/reference_graph.hpp"
#include "support.hpp"

using namespace shield;
using namespace shield::testing;

TEST(Graph, TokenChain) {
  EXPECT_TRUE(build_token_edges(1).empty());
  EXPECT_EQ(build_token_edges(4), (std::vector<Edge>{{0, 1}, {1, 2}, {2, 3}}));
}

TEST(Graph, TwoByTwoGrid) {
  EXPECT_EQ(build_patch_edges(2, 2), (std::vector<Edge>{{0, 1}, {2, 3}, {0, 2}, {1, 3}}));
  EXPECT_THROW(build_patch_edges(2, 2, 5), DomainError);
}

TEST(Graph, EdgeCountIdentities) {
  for (std::size_t r = 1; r <= 6; ++r)
    for (std::size_t c = 1; c <= 6; ++c) EXPECT_EQ(build_patch_edges(r, c).size(), r * (c - 1) + c * (r - 1));
}

TEST(Graph, TopKExample) {
  // Token row attends to patches at columns 10..13.
  Matrix a(14, 14);
  a(0, 10) = 0.1;
  a(0, 11) = 0.5;
  a(0, 12) = 0.2;
  a(0, 13) = 0.4;
  EXPECT_EQ(top_k_patch_neighbors(a, 0, {10, 13}, 2), (std::vector<std::size_t>{11, 13}));
  EXPECT_EQ(top_k_patch_neighbors(a, 0, {10, 13}, 9), (std::vector<std::size_t>{10, 11, 12, 13}));
}

TEST(Graph, TopKTiesGoToLowerIndex) {
  Matrix a(5, 5, 0.3);
  EXPECT_EQ(top_k_patch_neighbors(a, 0, {0, 4}, 2), (std::vector<std::size_t>{0, 1}));
  a(0, 3) = 0.9;
  EXPECT_EQ(top_k_patch_neighbors(a, 0, {0, 4}, 2), (std::vector<std::size_t>{0, 3}));
}

TEST(Graph, TopKMatchesStableSortOracle) {
  std::mt19937_64 rng(41);
  std::uniform_int_distribution<int> level(0, 3);  // coarse values force ties
  for (int trial = 0; trial < 300; ++trial) {
    Matrix a(12, 12);
    for (double& x : a.data()) x = level(rng) * 0.25;
    const IndexRange patches{2, 10};
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, 10)(rng);
    std::vector<std::size_t> idx(patches.length());
    std::iota(idx.begin(), idx.end(), patches.first);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return a(0, x) > a(0, y); });
    idx.resize(std::min(k, idx.size()));
    std::sort(idx.begin(), idx.end());
    EXPECT_EQ(top_k_patch_neighbors(a, 0, patches, k), idx);
  }
}

TEST(Graph, BuildFromDumpUsesAttentionRows) {
  std::mt19937_64 rng(42);
  DumpShape s;
  s.n_t = 2;
  s.grid_rows = 1;
  s.grid_cols = 3;
  s.prefix = 1;
  MemeDump d = random_dump(rng, s);
  // Text tokens sit at prompt positions 4 and 5, patches at 1..3.
  d.attention(4, 1) = 0.0;
  d.attention(4, 2) = 5.0;
  d.attention(4, 3) = 1.0;
  d.attention(5, 1) = 7.0;
  d.attention(5, 2) = 0.0;
  d.attention(5, 3) = 0.0;
  const ReferenceGraph g = build_reference_graph(d, 1);
  EXPECT_EQ(g.cross_edges, (std::vector<Edge>{{0, 3}, {1, 2}}));
  EXPECT_EQ(g.patch_edges, (std::vector<Edge>{{2, 3}, {3, 4}}));
  EXPECT_EQ(g.token_edges, (std::vector<Edge>{{0, 1}}));
  EXPECT_TRUE(g.violations().empty());
  EXPECT_THROW(build_reference_graph(d, 0), DomainError);
}

TEST(Graph, RandomConfigurationsSatisfyCountIdentities) {
  std::mt19937_64 rng(43);
  std::uniform_int_distribution<std::size_t> small(1, 5), kd(1, 30);
  for (int trial = 0; trial < 300; ++trial) {
    DumpShape s;
    s.n_t = small(rng);
    s.grid_rows = small(rng);
    s.grid_cols = small(rng);
    const std::size_t k = kd(rng);
    const ReferenceGraph g = build_reference_graph(random_dump(rng, s), k);
    const std::size_t n_v = s.grid_rows * s.grid_cols;
    EXPECT_EQ(g.token_edges.size(), s.n_t - 1);
    EXPECT_EQ(g.patch_edges.size(), s.grid_rows * (s.grid_cols - 1) + s.grid_cols * (s.grid_rows - 1));
    EXPECT_EQ(g.cross_edges.size(), s.n_t * std::min(k, n_v));
    std::set<Edge> unique(g.cross_edges.begin(), g.cross_edges.end());
    EXPECT_EQ(unique.size(), g.cross_edges.size());
  }
}

TEST(Graph, PropagationTwoNodeExample) {
  ReferenceGraph g;
  g.n_t = 1;
  g.n_v = 1;
  g.grid_rows = g.grid_cols = 1;
  g.cross_edges = {{0, 1}};
  g.token_features = Matrix(1, 1);
  g.patch_features = Matrix(1, 1);
  EXPECT_LE(max_abs_diff(propagation_matrix(g).to_dense(), Matrix{{0.5, 0.5}, {0.5, 0.5}}), 1e-15);
}

TEST(Graph, PropagationMatchesDenseFormula) {
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 50; ++trial) {
    DumpShape s;
    s.n_t = 1 + trial % 4;
    s.grid_rows = 1 + trial % 3;
    s.grid_cols = 2;
    const ReferenceGraph g = build_reference_graph(random_dump(rng, s), 1 + trial % 3);
    const Matrix dense = propagation_matrix(g).to_dense();
    EXPECT_LE(max_abs_diff(dense, dense_propagation(g.node_count(), all_edges(g))), 1e-14);
    EXPECT_LE(max_abs_diff(dense, dense.transposed()), 0.0);
  }
}

TEST(Graph, LinearGcnMatchesDenseClosedForm) {
  std::mt19937_64 rng(45);
  for (int trial = 0; trial < 50; ++trial) {
    DumpShape s;
    s.n_t = 1 + trial % 5;
    s.grid_rows = 1 + trial % 2;
    s.grid_cols = 1 + trial % 3;
    s.d_t = s.d_v = 3;
    const ReferenceGraph g = build_reference_graph(random_dump(rng, s), 2);
    GcnParams p = GcnParams::init(3, 1 + trial % 3, Activation::kIdentity, 3, 3, rng);
    std::vector<Matrix> ws;
    for (const auto& w : p.layers) ws.push_back(w.value);
    const CsrMatrix prop = propagation_matrix(g);
    Tape t;
    const Matrix got = graph_readout(gcn_forward(t, g, prop, p)).value();
    const Matrix want = dense_linear_readout(dense_propagation(g.node_count(), all_edges(g)), g.node_features(), ws);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_LE(rel_diff(got[i], want[i]), 1e-12);
  }
}

TEST(Graph, ProjectionsOnlyWhenDimsDiffer) {
  std::mt19937_64 rng(46);
  const GcnParams same = GcnParams::init(4, 2, Activation::kRelu, 4, 4, rng);
  EXPECT_FALSE(same.text_projection.has_value());
  EXPECT_EQ(same.layer_count(), 2u);
  const GcnParams diff = GcnParams::init(5, 1, Activation::kRelu, 3, 4, rng);
  ASSERT_TRUE(diff.text_projection.has_value());
  EXPECT_EQ(diff.text_projection->value.cols(), 3u);
  EXPECT_EQ(diff.vision_projection->value.cols(), 4u);
  EXPECT_THROW(GcnParams::init(5, 1, Activation::kRelu, 4, 4, rng), ConfigError);
}

TEST(Graph, EdgeListExport) {
  std::mt19937_64 rng(47);
  DumpShape s;
  s.n_t = 2;
  const ReferenceGraph g = build_reference_graph(random_dump(rng, s), 1);
  const std::string text = export_edge_list(g);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), static_cast<long>(g.edge_count()));
  EXPECT_EQ(text.rfind("TT 0 1\n", 0), 0u) << text;
}

TEST(Activation, NamesRoundTrip) {
  EXPECT_EQ(parse_activation("relu"), Activation::kRelu);
  EXPECT_EQ(parse_activation(to_string(Activation::kIdentity)), Activation::kIdentity);
  EXPECT_THROW(parse_activation("tanh"), ConfigError);
}
