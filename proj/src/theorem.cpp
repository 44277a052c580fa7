#include "shield/theorem.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "shield/autodiff.hpp"
#include "shield/errors.hpp"

namespace shield {
namespace {

constexpr double kClosedFormTol = 1e-9;
constexpr double kBoundSlack = 1e-12;

int sign(double x) { return (x > 0.0) - (x < 0.0); }

Matrix flipped_features(const TheoremInstance& inst) {
  Matrix x = inst.features();
  for (double& v : x.row(inst.flipped_node)) v = -v;
  return x;
}

}  // namespace

void validate_instance(const TheoremInstance& inst) {
  if (inst.gcn.layers.empty()) throw DomainError("theorem instance needs at least one GCN layer");
  if (inst.gcn.activation != Activation::kIdentity) {
    throw ConfigError("theorem verification requires identity activation, got '" +
                      std::string(to_string(inst.gcn.activation)) + "'");
  }
  if (inst.gcn.text_projection || inst.gcn.vision_projection) {
    throw ConfigError("theorem verification does not support input projections");
  }
  if (const auto v = inst.graph.violations(); !v.empty()) {
    throw DomainError("theorem instance graph is invalid: " + v.front());
  }
  const std::size_t d = inst.gcn.hidden_dim();
  if (inst.graph.token_features.cols() != d || inst.graph.patch_features.cols() != d) {
    throw DomainError("theorem instance features must have width d_g=" + std::to_string(d));
  }
  for (const auto& w : inst.gcn.layers) {
    if (w.value.rows() != d || w.value.cols() != d) throw DomainError("GCN weights must be d_g x d_g");
  }
  if (inst.classifier.rows() != d || inst.classifier.cols() != 1) {
    throw DomainError("classifier must be a d_g vector");
  }
  if (inst.flipped_node >= inst.node_count()) {
    throw DomainError("flipped node " + std::to_string(inst.flipped_node) + " out of range");
  }
}

TheoremTerms theorem_terms(const TheoremInstance& inst) {
  validate_instance(inst);
  const std::size_t n = inst.node_count();
  const std::size_t d = inst.gcn.hidden_dim();
  const auto k = static_cast<unsigned>(inst.gcn.layer_count());
  TheoremTerms t;
  t.propagation_power = matrix_power(propagation_matrix(inst.graph).to_dense(), k);
  t.weight_product = Matrix::identity(d);
  for (const auto& w : inst.gcn.layers) t.weight_product = matmul(t.weight_product, w.value);
  t.weighted_classifier = matmul(t.weight_product, inst.classifier);

  const Matrix x = inst.features();
  t.delta = Matrix(d, 1);
  for (std::size_t c = 0; c < d; ++c) t.delta[c] = -2.0 * x(inst.flipped_node, c);

  const Matrix h = matmul(matmul(t.propagation_power, x), t.weight_product);
  t.readout = Matrix(d, 1);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) t.readout[c] += h(r, c);
  for (double& v : t.readout.data()) v /= static_cast<double>(n);
  t.score = dot(inst.classifier.data(), t.readout.data());
  for (std::size_t r = 0; r < n; ++r) t.reach += t.propagation_power(r, inst.flipped_node);
  return t;
}

double delta_l_closed_form(const TheoremInstance& inst) {
  const TheoremTerms t = theorem_terms(inst);
  return t.reach * dot(t.delta.data(), t.weighted_classifier.data()) /
         static_cast<double>(inst.node_count());
}

double linear_score(const TheoremInstance& inst, const Matrix& features) {
  validate_instance(inst);
  ReferenceGraph g = inst.graph;
  const std::size_t d = features.cols();
  g.token_features = Matrix(g.n_t, d, std::vector<double>(features.data().begin(),
                                                           features.data().begin() + static_cast<std::ptrdiff_t>(g.n_t * d)));
  g.patch_features = Matrix(g.n_v, d, std::vector<double>(features.data().begin() + static_cast<std::ptrdiff_t>(g.n_t * d),
                                                           features.data().end()));
  const CsrMatrix prop = propagation_matrix(g);
  GcnParams gcn = inst.gcn;
  Tape tape;
  Var s = graph_readout(gcn_forward(tape, g, prop, gcn));
  return ad::matmul(ad::transpose(s), tape.constant(inst.classifier)).scalar();
}

double delta_l_empirical(const TheoremInstance& inst) {
  return linear_score(inst, flipped_features(inst)) - linear_score(inst, inst.features());
}

double cs_bound(const TheoremInstance& inst) {
  const TheoremTerms t = theorem_terms(inst);
  return t.reach / static_cast<double>(inst.node_count()) * norm2(t.delta.data()) *
         norm2(t.weighted_classifier.data());
}

double discriminative_threshold(const TheoremInstance& inst) {
  const TheoremTerms t = theorem_terms(inst);
  const double pu = norm2(t.weighted_classifier.data());
  if (pu == 0.0) throw DomainError("degenerate classifier: |P u| = 0");
  if (!(t.reach > 0.0)) throw DomainError("flipped node does not reach the readout");
  return static_cast<double>(inst.node_count()) * std::abs(t.score) / (t.reach * pu);
}

bool TheoremReport::passed() const {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

TheoremReport verify_theorem(const TheoremInstance& inst) {
  const TheoremTerms t = theorem_terms(inst);
  const double n = static_cast<double>(inst.node_count());
  const double delta_norm = norm2(t.delta.data());
  const double pu = norm2(t.weighted_classifier.data());

  TheoremReport r;
  r.l = linear_score(inst, inst.features());
  r.delta_l_closed = t.reach * dot(t.delta.data(), t.weighted_classifier.data()) / n;
  r.delta_l_empirical = linear_score(inst, flipped_features(inst)) - r.l;
  r.cs_upper_bound = t.reach / n * delta_norm * pu;
  r.rhs_threshold = pu == 0.0 ? std::numeric_limits<double>::infinity()
                              : n * std::abs(r.l) / (t.reach * pu);
  r.delta_norm = delta_norm;
  r.flip_occurred = r.l != 0.0 && sign(r.delta_l_empirical) != sign(r.l) &&
                    std::abs(r.delta_l_empirical) > std::abs(r.l);

  const double closed_residual = std::abs(r.delta_l_closed - r.delta_l_empirical);
  r.checks.push_back({"closed_form_matches_empirical",
                      closed_residual <= kClosedFormTol * std::max(1.0, std::abs(r.delta_l_empirical)),
                      closed_residual, false});

  const double bound_residual = std::abs(r.delta_l_closed) - r.cs_upper_bound;
  r.checks.push_back({"cauchy_schwarz_bound", bound_residual <= kBoundSlack, bound_residual, false});

  TheoremCheck necessity{"flip_implies_threshold", true, delta_norm - r.rhs_threshold, false};
  if (r.l == 0.0) {
    necessity.vacuous = true;
  } else if (r.flip_occurred) {
    necessity.pass = delta_norm > r.rhs_threshold;
  }
  r.checks.push_back(necessity);
  return r;
}

nlohmann::ordered_json to_json(const TheoremReport& r) {
  nlohmann::ordered_json j;
  j["l"] = r.l;
  j["delta_l_closed"] = r.delta_l_closed;
  j["delta_l_empirical"] = r.delta_l_empirical;
  j["cs_bound"] = r.cs_upper_bound;
  j["threshold"] = std::isfinite(r.rhs_threshold) ? nlohmann::ordered_json(r.rhs_threshold)
                                                  : nlohmann::ordered_json(nullptr);
  j["delta_norm"] = r.delta_norm;
  j["flip_occurred"] = r.flip_occurred;
  nlohmann::ordered_json checks = nlohmann::ordered_json::array();
  for (const auto& c : r.checks) {
    nlohmann::ordered_json cj;
    cj["name"] = c.name;
    cj["pass"] = c.pass;
    cj["residual"] = std::isfinite(c.residual) ? nlohmann::ordered_json(c.residual)
                                               : nlohmann::ordered_json(nullptr);
    if (c.vacuous) cj["vacuous"] = true;
    checks.push_back(cj);
  }
  j["checks"] = checks;
  return j;
}

TheoremInstance random_instance(std::uint64_t seed, std::size_t n_t, std::size_t grid_rows,
                                std::size_t grid_cols, std::size_t gcn_layers, std::size_t k_ref,
                                std::size_t d_g) {
  if (n_t == 0 || grid_rows == 0 || grid_cols == 0 || gcn_layers == 0 || k_ref == 0 || d_g == 0) {
    throw DomainError("random_instance: sizes must be >= 1");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::size_t n_v = grid_rows * grid_cols;
  MemeDump d;
  d.id = "theorem-" + std::to_string(seed);
  d.label = kUnlabeled;
  d.n_t = n_t;
  d.d_t = d_g;
  d.n_v = n_v;
  d.d_v = d_g;
  d.grid_rows = grid_rows;
  d.grid_cols = grid_cols;
  d.d_sp = 1;
  d.n = n_v + n_t;
  d.patch_range = {0, n_v - 1};
  d.text_range = {n_v, n_v + n_t - 1};
  d.token_embeddings = Matrix(n_t, d_g);
  for (double& x : d.token_embeddings.data()) x = gauss(rng);
  d.patch_embeddings = Matrix(n_v, d_g);
  for (double& x : d.patch_embeddings.data()) x = gauss(rng);
  d.hidden_state = Matrix(1, 1);
  d.attention = Matrix(d.n, d.n);
  for (double& x : d.attention.data()) x = unit(rng);

  TheoremInstance inst;
  inst.graph = build_reference_graph(d, k_ref);
  inst.gcn.activation = Activation::kIdentity;
  for (std::size_t k = 0; k < gcn_layers; ++k) {
    Matrix w(d_g, d_g);
    for (double& x : w.data()) x = gauss(rng);
    inst.gcn.layers.emplace_back("theorem.layer" + std::to_string(k), std::move(w));
  }
  inst.classifier = Matrix(d_g, 1);
  for (double& x : inst.classifier.data()) x = gauss(rng);
  inst.flipped_node = std::uniform_int_distribution<std::size_t>(0, d.n - 1)(rng);
  return inst;
}

CampaignSummary run_theorem_campaign(std::size_t trials, std::uint64_t seed) {
  CampaignSummary s;
  s.trials = trials;
  s.seed = seed;
  std::mt19937_64 master(seed);
  auto pick = [&master](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(master);
  };
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const std::size_t n_t = pick(1, 6);
    const std::size_t rows = pick(1, 3);
    const std::size_t cols = pick(1, 4);
    const std::size_t layers = pick(1, 3);
    const std::size_t k_ref = pick(1, 4);
    const std::uint64_t trial_seed = master();
    const TheoremReport r = verify_theorem(random_instance(trial_seed, n_t, rows, cols, layers, k_ref));
    s.closed_form_failures += !r.checks[0].pass;
    s.cauchy_schwarz_failures += !r.checks[1].pass;
    s.necessity_failures += !r.checks[2].pass;
    s.flips += r.flip_occurred;
    s.vacuous += r.checks[2].vacuous;
    s.max_closed_form_residual = std::max(s.max_closed_form_residual, r.checks[0].residual);
    if (r.cs_upper_bound > 0.0) {
      s.max_bound_ratio = std::max(s.max_bound_ratio, std::abs(r.delta_l_closed) / r.cs_upper_bound);
    }
  }
  return s;
}

nlohmann::ordered_json to_json(const CampaignSummary& s) {
  nlohmann::ordered_json j;
  j["trials"] = s.trials;
  j["seed"] = s.seed;
  j["failures"] = s.failures();
  j["closed_form_failures"] = s.closed_form_failures;
  j["cauchy_schwarz_failures"] = s.cauchy_schwarz_failures;
  j["necessity_failures"] = s.necessity_failures;
  j["flips"] = s.flips;
  j["vacuous"] = s.vacuous;
  j["max_closed_form_residual"] = s.max_closed_form_residual;
  j["max_bound_ratio"] = s.max_bound_ratio;
  return j;
}

}  // namespace shield
