#pragma once

// Numerical check of the single-node sign-flip bound for a linear GCN.
//
// With identity activation a K-layer GCN gives H^(K) = Â^K X P with
// P = W^(1) ... W^(K) and Â the propagation matrix. Negating the features of
// node v0 adds delta = -2 x_v0 to that row, so the mean readout moves by
//   delta_s = (1^T Â^K e_v0) (delta^T P) / n
// and the classifier score l = u^T s by
//   delta_l = (1^T Â^K e_v0) (delta^T P u) / n.
// Cauchy-Schwarz bounds |delta_l| by (1^T Â^K e_v0)/n * |delta| * |P u|, so a
// flip of the prediction (|delta_l| > |l| with opposite sign) requires
//   |delta| > n |l| / ((1^T Â^K e_v0) |P u|).

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "shield/matrix.hpp"
#include "shield/reference_graph.hpp"

namespace shield {

struct TheoremInstance {
  ReferenceGraph graph;  // node features in graph.token_features / patch_features
  GcnParams gcn;         // identity activation, no projections
  Matrix classifier;     // u, d_g x 1
  std::size_t flipped_node = 0;

  Matrix features() const { return graph.node_features(); }
  std::size_t node_count() const { return graph.node_count(); }
};

// Throws DomainError/ConfigError when the instance is outside the theorem's
// assumptions (non-identity activation, input projections, bad shapes).
void validate_instance(const TheoremInstance& inst);

// Intermediate quantities computed with plain dense algebra.
struct TheoremTerms {
  Matrix propagation_power;    // Â^K, dense
  Matrix delta;                // -2 x_v0, d_g x 1
  Matrix weight_product;       // P = W^(1) ... W^(K)
  Matrix weighted_classifier;  // P u
  Matrix readout;            // s
  double score = 0.0;        // l = u^T s
  double reach = 0.0;        // 1^T Â^K e_v0
};

TheoremTerms theorem_terms(const TheoremInstance& inst);

double delta_l_closed_form(const TheoremInstance& inst);
// Two GCN forward passes (original and flipped) through gcn_forward.
double delta_l_empirical(const TheoremInstance& inst);
double cs_bound(const TheoremInstance& inst);
// Throws DomainError when |P u| == 0.
double discriminative_threshold(const TheoremInstance& inst);

// Score u^T readout(gcn(X)) through the recorded forward pass.
double linear_score(const TheoremInstance& inst, const Matrix& features);

struct TheoremCheck {
  std::string name;
  bool pass = true;
  double residual = 0.0;
  bool vacuous = false;
};

struct TheoremReport {
  double l = 0.0;
  double delta_l_closed = 0.0;
  double delta_l_empirical = 0.0;
  double cs_upper_bound = 0.0;
  double rhs_threshold = 0.0;  // +inf when |P u| == 0
  double delta_norm = 0.0;
  bool flip_occurred = false;
  std::vector<TheoremCheck> checks;

  bool passed() const;
};

// Checks (a) closed form vs empirical within 1e-9 max(1, |delta_l|),
// (b) |delta_l| <= bound + 1e-12, (c) flip implies |delta| > threshold.
// Failures are recorded, never thrown.
TheoremReport verify_theorem(const TheoremInstance& inst);

nlohmann::ordered_json to_json(const TheoremReport& r);

// Reference graph of a random dump (d_t = d_v = d_g, uniform attention),
// Gaussian features, weights and classifier, uniform flipped node.
TheoremInstance random_instance(std::uint64_t seed, std::size_t n_t, std::size_t grid_rows,
                                std::size_t grid_cols, std::size_t gcn_layers, std::size_t k_ref,
                                std::size_t d_g = 4);

struct CampaignSummary {
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  std::size_t closed_form_failures = 0;
  std::size_t cauchy_schwarz_failures = 0;
  std::size_t necessity_failures = 0;
  std::size_t flips = 0;
  std::size_t vacuous = 0;
  double max_closed_form_residual = 0.0;
  double max_bound_ratio = 0.0;  // max |delta_l| / bound

  std::size_t failures() const {
    return closed_form_failures + cauchy_schwarz_failures + necessity_failures;
  }
};

// Random sizes per trial: n_t in [1, 6], grid up to 3 x 4, K in [1, 3],
// K_ref in [1, 4]; at most 18 nodes.
CampaignSummary run_theorem_campaign(std::size_t trials, std::uint64_t seed);

nlohmann::ordered_json to_json(const CampaignSummary& s);

}  // namespace shield
