#pragma once

// Cross-modal reference graph and the GCN that reads it.
//
// Nodes are the n_t text tokens (ids 0..n_t-1) followed by the n_v image
// patches (ids n_t..n_t+n_v-1). Three undirected edge sets connect them:
//   TT  consecutive tokens,
//   PP  4-neighbours on the row-major patch grid,
//   TP  each token to the K_ref patches it attends to most.
// Self-loops are not stored; the propagation matrix adds them.

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "shield/autodiff.hpp"
#include "shield/dump.hpp"
#include "shield/sparse.hpp"

namespace shield {

using Edge = std::pair<std::size_t, std::size_t>;  // (smaller id, larger id)

struct ReferenceGraph {
  std::size_t n_t = 0;
  std::size_t n_v = 0;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  std::vector<Edge> token_edges;  // E_tt, node ids
  std::vector<Edge> patch_edges;  // E_pp, node ids
  std::vector<Edge> cross_edges;  // E_tp, (token node, patch node)
  Matrix token_features;          // H_t
  Matrix patch_features;          // H_v

  std::size_t node_count() const noexcept { return n_t + n_v; }
  std::size_t edge_count() const noexcept {
    return token_edges.size() + patch_edges.size() + cross_edges.size();
  }
  std::size_t patch_node(std::size_t patch) const noexcept { return n_t + patch; }

  // Stacked [H_t; H_v]; requires d_t == d_v.
  Matrix node_features() const;

  // Empty when every structural invariant holds.
  std::vector<std::string> violations() const;
};

// Chain over token positions 0..n_t-1.
std::vector<Edge> build_token_edges(std::size_t n_t);

// 4-neighbourhood on an r x c grid, local patch ids in row-major order:
// all horizontal edges first, then all vertical ones.
std::vector<Edge> build_patch_edges(std::size_t rows, std::size_t cols);
std::vector<Edge> build_patch_edges(std::size_t rows, std::size_t cols, std::size_t n_v);

// Attention-matrix column indices of the min(k_ref, |patches|) largest entries
// of row `token_row` restricted to `patches`. Ties go to the lower index; the
// result is ascending.
std::vector<std::size_t> top_k_patch_neighbors(const Matrix& attention, std::size_t token_row,
                                               IndexRange patches, std::size_t k_ref);

// Throws InvalidDumpError for invalid dumps and DomainError for k_ref == 0.
ReferenceGraph build_reference_graph(const MemeDump& dump, std::size_t k_ref);

// D^-1/2 (Adj + I) D^-1/2 with D the degree matrix of Adj + I.
CsrMatrix propagation_matrix(const ReferenceGraph& graph);

enum class Activation { kRelu, kIdentity };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

struct GcnParams {
  std::vector<Param> layers;  // each d_g x d_g
  Activation activation = Activation::kRelu;
  // Learned input maps into d_g, present only when d_t != d_v.
  std::optional<Param> text_projection;    // d_g x d_t
  std::optional<Param> vision_projection;  // d_g x d_v

  std::size_t hidden_dim() const { return layers.front().value.rows(); }
  std::size_t layer_count() const { return layers.size(); }
  std::vector<Param*> params();

  static GcnParams init(std::size_t d_g, std::size_t layer_count, Activation activation,
                        std::size_t d_t, std::size_t d_v, std::mt19937_64& rng);
};

// Projected node features X on the tape.
Var node_features(Tape& tape, const ReferenceGraph& graph, GcnParams& params);

// H^(0) = X, H^(k) = act(P H^(k-1) W^(k)). `propagation` must outlive the tape.
Var gcn_forward(Tape& tape, const ReferenceGraph& graph, const CsrMatrix& propagation,
                GcnParams& params);

// Mean over node rows.
Var graph_readout(Var node_embeddings);

// One "TT|PP|TP src dst" line per edge.
std::string export_edge_list(const ReferenceGraph& graph);

}  // namespace shield
