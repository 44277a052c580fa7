#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "shield/dump.hpp"
#include "shield/matrix.hpp"
#include "shield/reference_graph.hpp"

namespace shield::testing {

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                            double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(rows, cols);
  for (double& x : m.data()) x = g(rng);
  return m;
}

struct DumpShape {
  std::size_t n_t = 3;
  std::size_t d_t = 4;
  std::size_t grid_rows = 2;
  std::size_t grid_cols = 2;
  std::size_t d_v = 4;
  std::size_t d_sp = 3;
  std::size_t prefix = 1;  // prompt tokens before the patch block
  std::size_t gap = 0;     // tokens between patches and text
  std::size_t suffix = 2;
};

// Patches occupy [prefix, prefix + n_v), text follows after `gap` tokens.
inline MemeDump random_dump(std::mt19937_64& rng, const DumpShape& s, int label = 0,
                            const std::string& id = "sample") {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n_v = s.grid_rows * s.grid_cols;
  MemeDump d;
  d.id = id;
  d.label = label;
  d.n_t = s.n_t;
  d.d_t = s.d_t;
  d.n_v = n_v;
  d.d_v = s.d_v;
  d.grid_rows = s.grid_rows;
  d.grid_cols = s.grid_cols;
  d.d_sp = s.d_sp;
  d.n = s.prefix + n_v + s.gap + s.n_t + s.suffix;
  d.patch_range = {s.prefix, s.prefix + n_v - 1};
  d.text_range = {s.prefix + n_v + s.gap, s.prefix + n_v + s.gap + s.n_t - 1};
  d.token_embeddings = random_matrix(rng, s.n_t, s.d_t);
  d.patch_embeddings = random_matrix(rng, n_v, s.d_v);
  d.hidden_state = random_matrix(rng, s.d_sp, 1);
  d.attention = Matrix(d.n, d.n);
  for (double& x : d.attention.data()) x = unit(rng);
  quantize_payload(d);
  return d;
}

// (1/n) 1^T Â^K X W1...WK with plain dense loops.
inline Matrix dense_linear_readout(const Matrix& a_hat, const Matrix& x,
                                   const std::vector<Matrix>& weights) {
  Matrix h = x;
  for (const Matrix& w : weights) h = matmul(matmul(a_hat, h), w);
  Matrix out(h.cols(), 1);
  for (std::size_t r = 0; r < h.rows(); ++r)
    for (std::size_t c = 0; c < h.cols(); ++c) out[c] += h(r, c);
  for (double& v : out.data()) v /= static_cast<double>(h.rows());
  return out;
}

// Â from an edge list, computed densely from scratch.
inline Matrix dense_propagation(std::size_t n, const std::vector<Edge>& edges) {
  Matrix adj = Matrix::identity(n);
  for (auto [a, b] : edges) {
    adj(a, b) = 1.0;
    adj(b, a) = 1.0;
  }
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += adj(i, j);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) adj(i, j) /= std::sqrt(deg[i] * deg[j]);
  return adj;
}

inline std::vector<Edge> all_edges(const ReferenceGraph& g) {
  std::vector<Edge> e = g.token_edges;
  e.insert(e.end(), g.patch_edges.begin(), g.patch_edges.end());
  e.insert(e.end(), g.cross_edges.begin(), g.cross_edges.end());
  return e;
}

inline double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace shield::testing
