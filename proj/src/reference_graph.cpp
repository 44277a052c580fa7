#include "shield/reference_graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "shield/errors.hpp"
#include "shield/pcm.hpp"

namespace shield {

Matrix ReferenceGraph::node_features() const {
  if (token_features.cols() != patch_features.cols()) {
    throw ShapeError("node_features: token dim " + std::to_string(token_features.cols()) +
                     " != patch dim " + std::to_string(patch_features.cols()));
  }
  const std::size_t d = token_features.cols();
  Matrix x(node_count(), d);
  std::copy(token_features.data().begin(), token_features.data().end(), x.data().begin());
  std::copy(patch_features.data().begin(), patch_features.data().end(),
            x.data().begin() + static_cast<std::ptrdiff_t>(n_t * d));
  return x;
}

std::vector<std::string> ReferenceGraph::violations() const {
  std::vector<std::string> v;
  const std::size_t n = node_count();
  std::set<Edge> seen;
  auto check = [&](const std::vector<Edge>& edges, const char* name, auto ok) {
    for (const auto& [a, b] : edges) {
      if (a >= n || b >= n) v.push_back(std::string(name) + " endpoint out of range");
      else if (a == b) v.push_back(std::string(name) + " self-loop");
      else if (a > b) v.push_back(std::string(name) + " edge not normalized (a > b)");
      else if (!ok(a, b)) v.push_back(std::string(name) + " edge joins wrong node types");
      if (!seen.insert({std::min(a, b), std::max(a, b)}).second) {
        v.push_back(std::string(name) + " duplicate edge");
      }
    }
  };
  const auto is_token = [this](std::size_t id) { return id < n_t; };
  check(token_edges, "E_tt", [&](std::size_t a, std::size_t b) { return is_token(a) && is_token(b); });
  check(patch_edges, "E_pp", [&](std::size_t a, std::size_t b) { return !is_token(a) && !is_token(b); });
  check(cross_edges, "E_tp", [&](std::size_t a, std::size_t b) { return is_token(a) && !is_token(b); });
  if (token_features.rows() != n_t) v.push_back("token feature rows != n_t");
  if (patch_features.rows() != n_v) v.push_back("patch feature rows != n_v");
  return v;
}

std::vector<Edge> build_token_edges(std::size_t n_t) {
  std::vector<Edge> e;
  for (std::size_t i = 0; i + 1 < n_t; ++i) e.emplace_back(i, i + 1);
  return e;
}

std::vector<Edge> build_patch_edges(std::size_t rows, std::size_t cols) {
  std::vector<Edge> e;
  e.reserve(rows * (cols ? cols - 1 : 0) + cols * (rows ? rows - 1 : 0));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c + 1 < cols; ++c) e.emplace_back(r * cols + c, r * cols + c + 1);
  for (std::size_t r = 0; r + 1 < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) e.emplace_back(r * cols + c, (r + 1) * cols + c);
  return e;
}

std::vector<Edge> build_patch_edges(std::size_t rows, std::size_t cols, std::size_t n_v) {
  if (rows * cols != n_v) {
    throw DomainError("build_patch_edges: grid " + std::to_string(rows) + "x" +
                      std::to_string(cols) + " does not hold " + std::to_string(n_v) + " patches");
  }
  return build_patch_edges(rows, cols);
}

std::vector<std::size_t> top_k_patch_neighbors(const Matrix& attention, std::size_t token_row,
                                               IndexRange patches, std::size_t k_ref) {
  if (k_ref == 0) throw DomainError("top_k_patch_neighbors: K_ref must be >= 1");
  if (attention.rows() != attention.cols()) {
    throw ShapeError("top_k_patch_neighbors: attention must be square, got " +
                     shape_string(attention));
  }
  if (token_row >= attention.rows()) {
    throw DomainError("top_k_patch_neighbors: token row " + std::to_string(token_row) +
                      " outside attention of size " + std::to_string(attention.rows()));
  }
  if (patches.first > patches.last || patches.last >= attention.cols()) {
    throw DomainError("top_k_patch_neighbors: patch range [" + std::to_string(patches.first) +
                      ", " + std::to_string(patches.last) + "] outside attention columns");
  }
  std::vector<std::size_t> idx(patches.length());
  std::iota(idx.begin(), idx.end(), patches.first);
  const std::size_t k = std::min(k_ref, idx.size());
  const auto row = attention.row(token_row);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&row](std::size_t a, std::size_t b) {
                      if (row[a] != row[b]) return row[a] > row[b];
                      return a < b;
                    });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

ReferenceGraph build_reference_graph(const MemeDump& dump, std::size_t k_ref) {
  require_valid(dump);
  if (k_ref == 0) throw DomainError("build_reference_graph: K_ref must be >= 1");
  ReferenceGraph g;
  g.n_t = dump.n_t;
  g.n_v = dump.n_v;
  g.grid_rows = dump.grid_rows;
  g.grid_cols = dump.grid_cols;
  g.token_edges = build_token_edges(dump.n_t);
  g.patch_edges = build_patch_edges(dump.grid_rows, dump.grid_cols, dump.n_v);
  for (auto& [a, b] : g.patch_edges) {
    a += g.n_t;
    b += g.n_t;
  }
  for (std::size_t t = 0; t < dump.n_t; ++t) {
    const std::size_t row = dump.text_range.first + t;
    for (std::size_t j : top_k_patch_neighbors(dump.attention, row, dump.patch_range, k_ref)) {
      g.cross_edges.emplace_back(t, g.patch_node(j - dump.patch_range.first));
    }
  }
  g.token_features = dump.token_embeddings;
  g.patch_features = dump.patch_embeddings;
  return g;
}

CsrMatrix propagation_matrix(const ReferenceGraph& graph) {
  const std::size_t n = graph.node_count();
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t i = 0; i < n; ++i) adj[i].push_back(i);
  for (const auto* edges : {&graph.token_edges, &graph.patch_edges, &graph.cross_edges}) {
    for (const auto& [a, b] : *edges) {
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
  }
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::sort(adj[i].begin(), adj[i].end());
    adj[i].erase(std::unique(adj[i].begin(), adj[i].end()), adj[i].end());
    inv_sqrt_deg[i] = 1.0 / std::sqrt(static_cast<double>(adj[i].size()));
  }
  CsrMatrix m;
  m.rows = m.cols = n;
  m.row_ptr.reserve(n + 1);
  m.row_ptr.push_back(0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : adj[i]) {
      m.col_idx.push_back(j);
      m.values.push_back(inv_sqrt_deg[i] * inv_sqrt_deg[j]);
    }
    m.row_ptr.push_back(m.col_idx.size());
  }
  return m;
}

std::string_view to_string(Activation a) {
  return a == Activation::kRelu ? "relu" : "identity";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::vector<Param*> GcnParams::params() {
  std::vector<Param*> out;
  if (text_projection) out.push_back(&*text_projection);
  if (vision_projection) out.push_back(&*vision_projection);
  for (auto& w : layers) out.push_back(&w);
  return out;
}

GcnParams GcnParams::init(std::size_t d_g, std::size_t layer_count, Activation activation,
                          std::size_t d_t, std::size_t d_v, std::mt19937_64& rng) {
  if (layer_count == 0) throw ConfigError("gcn: layer count must be >= 1");
  if (d_g == 0) throw ConfigError("gcn: hidden dim must be >= 1");
  if (d_t == d_v && d_g != d_t) {
    throw ConfigError("gcn: with equal token/patch dims the hidden dim must equal them (" +
                      std::to_string(d_t) + "), got " + std::to_string(d_g));
  }
  GcnParams p;
  p.activation = activation;
  if (d_t != d_v) {
    p.text_projection = Param("gcn.text_projection", uniform_fan_in(d_g, d_t, d_t, rng));
    p.vision_projection = Param("gcn.vision_projection", uniform_fan_in(d_g, d_v, d_v, rng));
  }
  for (std::size_t k = 0; k < layer_count; ++k) {
    p.layers.emplace_back("gcn.layer" + std::to_string(k), uniform_fan_in(d_g, d_g, d_g, rng));
  }
  return p;
}

Var node_features(Tape& tape, const ReferenceGraph& graph, GcnParams& params) {
  if (params.text_projection.has_value() != params.vision_projection.has_value()) {
    throw ConfigError("gcn: projections must be both present or both absent");
  }
  if (!params.text_projection) {
    if (graph.token_features.cols() != params.hidden_dim() ||
        graph.patch_features.cols() != params.hidden_dim()) {
      throw ShapeError("gcn: node features of width " + std::to_string(graph.token_features.cols()) +
                       "/" + std::to_string(graph.patch_features.cols()) +
                       " need projections into d_g=" + std::to_string(params.hidden_dim()));
    }
    return tape.constant(graph.node_features());
  }
  Var tokens = ad::matmul(tape.constant(graph.token_features),
                          ad::transpose(tape.param(*params.text_projection)));
  Var patches = ad::matmul(tape.constant(graph.patch_features),
                           ad::transpose(tape.param(*params.vision_projection)));
  const Var parts[] = {tokens, patches};
  return ad::vstack(parts);
}

Var gcn_forward(Tape& tape, const ReferenceGraph& graph, const CsrMatrix& propagation,
                GcnParams& params) {
  if (propagation.rows != graph.node_count()) {
    throw ShapeError("gcn_forward: propagation matrix has " + std::to_string(propagation.rows) +
                     " rows for " + std::to_string(graph.node_count()) + " nodes");
  }
  Var h = node_features(tape, graph, params);
  for (auto& w : params.layers) {
    h = ad::matmul(ad::spmm(propagation, h), tape.param(w));
    if (params.activation == Activation::kRelu) h = ad::relu(h);
  }
  return h;
}

Var graph_readout(Var node_embeddings) { return ad::mean_pool(node_embeddings); }

std::string export_edge_list(const ReferenceGraph& graph) {
  std::string out;
  auto emit = [&out](const char* type, const std::vector<Edge>& edges) {
    for (const auto& [a, b] : edges) {
      out += type;
      out += ' ';
      out += std::to_string(a);
      out += ' ';
      out += std::to_string(b);
      out += '\n';
    }
  };
  emit("TT", graph.token_edges);
  emit("PP", graph.patch_edges);
  emit("TP", graph.cross_edges);
  return out;
}

}  // namespace shield
