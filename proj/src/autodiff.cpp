#include "shield/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "shield/errors.hpp"

namespace shield {

const Matrix& Var::value() const { return tape->value(id); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw UsageError("scalar() on a " + shape_string(v) + " node");
  return v[0];
}

Var Tape::constant(Matrix value) { return record(std::move(value), false, {}); }

Var Tape::param(Param& p) {
  Var v = record(p.value, true, {});
  nodes_[v.id].param = &p;
  return v;
}

Var Tape::record(Matrix value, bool requires_grad, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.empty() && !n.value.empty()) return Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(std::size_t id, const Matrix& contribution) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (!contribution.same_shape(n.value)) {
    throw ShapeError("gradient shape " + shape_string(contribution) + " does not match node " +
                     shape_string(n.value));
  }
  if (n.grad.empty()) {
    n.grad = contribution;
    return;
  }
  for (std::size_t i = 0; i < n.grad.size(); ++i) n.grad[i] += contribution[i];
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw UsageError("backward: variable belongs to another tape");
  const Matrix& lv = nodes_[loss.id].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw UsageError("backward requires a scalar loss, got " + shape_string(lv));
  }
  for (auto& n : nodes_) n.grad = Matrix();
  if (!nodes_[loss.id].requires_grad) return;
  nodes_[loss.id].grad = Matrix(1, 1, 1.0);

  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.backward) {
      // Copy: the closure may accumulate into other nodes of nodes_.
      const Matrix g = n.grad;
      n.backward(*this, g);
    }
    if (n.param != nullptr) {
      Matrix& pg = n.param->grad;
      if (pg.empty()) pg = Matrix(n.value.rows(), n.value.cols());
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
    }
  }
}

namespace ad {
namespace {

void require_same_tape(Var a, Var b, const char* op) {
  if (a.tape != b.tape) throw UsageError(std::string(op) + ": operands from different tapes");
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shapes differ (" + shape_string(a) + " vs " +
                     shape_string(b) + ")");
  }
}

bool any_grad(Var a) { return a.tape->requires_grad(a.id); }
bool any_grad(Var a, Var b) { return any_grad(a) || any_grad(b); }

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  Matrix out = shield::matmul(a.value(), b.value());
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), any_grad(a, b), [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, shield::matmul(g, t.value(ib).transposed()));
    if (t.requires_grad(ib)) t.accumulate(ib, shield::matmul(t.value(ia).transposed(), g));
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Matrix out = shield::add(a.value(), b.value());
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), any_grad(a, b), [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var scale(Var a, double s) {
  const std::size_t ia = a.id;
  return a.tape->record(scaled(a.value(), s), any_grad(a),
                        [ia, s](Tape& t, const Matrix& g) { t.accumulate(ia, scaled(g, s)); });
}

Var hadamard(Var a, Var b) {
  require_same_tape(a, b, "hadamard");
  require_same_shape(a.value(), b.value(), "hadamard");
  Matrix out = a.value();
  const Matrix& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), any_grad(a, b), [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) {
      Matrix ga = g;
      const Matrix& other = t.value(ib);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= other[i];
      t.accumulate(ia, ga);
    }
    if (t.requires_grad(ib)) {
      Matrix gb = g;
      const Matrix& other = t.value(ia);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= other[i];
      t.accumulate(ib, gb);
    }
  });
}

Var linear(Var x, Var w, Var b) {
  if (x.cols() != 1) throw ShapeError("linear: input must be a column vector, got " +
                                      shape_string(x.value()));
  if (w.cols() != x.rows()) {
    throw ShapeError("linear: weight " + shape_string(w.value()) + " does not accept input " +
                     shape_string(x.value()));
  }
  if (b.rows() != w.rows() || b.cols() != 1) {
    throw ShapeError("linear: bias " + shape_string(b.value()) + " does not match weight " +
                     shape_string(w.value()));
  }
  return add(matmul(w, x), b);
}

Var mean_pool(Var h) {
  const Matrix& hv = h.value();
  if (hv.rows() == 0) throw DomainError("mean_pool: empty input (0 rows)");
  const std::size_t n = hv.rows(), d = hv.cols();
  Matrix out(d, 1);
  std::vector<double> column(n);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t r = 0; r < n; ++r) column[r] = hv(r, c);
    out[c] = order_invariant_sum(column) / static_cast<double>(n);
  }
  const std::size_t ih = h.id;
  return h.tape->record(std::move(out), any_grad(h), [ih, n, d](Tape& t, const Matrix& g) {
    Matrix gh(n, d);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) gh(r, c) = g[c] / static_cast<double>(n);
    t.accumulate(ih, gh);
  });
}

Var sigmoid(Var x) {
  Matrix out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = shield::sigmoid(out[i]);
  Matrix s = out;
  const std::size_t ix = x.id;
  return x.tape->record(std::move(out), any_grad(x),
                        [ix, s = std::move(s)](Tape& t, const Matrix& g) {
                          Matrix gx = g;
                          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= s[i] * (1.0 - s[i]);
                          t.accumulate(ix, gx);
                        });
}

Var relu(Var x) {
  Matrix out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], 0.0);
  const std::size_t ix = x.id;
  return x.tape->record(std::move(out), any_grad(x), [ix](Tape& t, const Matrix& g) {
    Matrix gx = g;
    const Matrix& in = t.value(ix);
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (!(in[i] > 0.0)) gx[i] = 0.0;
    t.accumulate(ix, gx);
  });
}

Var transpose(Var x) {
  const std::size_t ix = x.id;
  return x.tape->record(x.value().transposed(), any_grad(x), [ix](Tape& t, const Matrix& g) {
    t.accumulate(ix, g.transposed());
  });
}

Var vstack(std::span<const Var> parts) {
  if (parts.empty()) throw DomainError("vstack: no inputs");
  Tape* tape = parts.front().tape;
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  bool needs_grad = false;
  std::vector<std::size_t> ids, offsets;
  for (const Var& p : parts) {
    if (p.tape != tape) throw UsageError("vstack: operands from different tapes");
    if (p.cols() != cols) {
      throw ShapeError("vstack: column counts differ (" + std::to_string(cols) + " vs " +
                       shape_string(p.value()) + ")");
    }
    ids.push_back(p.id);
    offsets.push_back(rows);
    rows += p.rows();
    needs_grad = needs_grad || any_grad(p);
  }
  Matrix out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(offsets[k] * cols));
  }
  return tape->record(std::move(out), needs_grad,
                      [ids = std::move(ids), offsets = std::move(offsets), cols](
                          Tape& t, const Matrix& g) {
                        for (std::size_t k = 0; k < ids.size(); ++k) {
                          if (!t.requires_grad(ids[k])) continue;
                          const std::size_t r = t.value(ids[k]).rows();
                          const auto first = g.data().begin() +
                                             static_cast<std::ptrdiff_t>(offsets[k] * cols);
                          t.accumulate(ids[k], Matrix(r, cols, std::vector<double>(
                                                                   first, first + static_cast<std::ptrdiff_t>(r * cols))));
                        }
                      });
}

Var concat(std::span<const Var> parts) {
  for (const Var& p : parts) {
    if (p.cols() != 1) throw ShapeError("concat: expected column vectors, got " +
                                        shape_string(p.value()));
  }
  return vstack(parts);
}

Var concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Var spmm(const CsrMatrix& a, Var x) {
  const CsrMatrix* ap = &a;
  const std::size_t ix = x.id;
  return x.tape->record(shield::spmm(a, x.value()), any_grad(x),
                        [ap, ix](Tape& t, const Matrix& g) {
                          t.accumulate(ix, spmm_transposed(*ap, g));
                        });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const std::size_t ix = x.id;
  const std::size_t r = x.rows(), c = x.cols();
  return x.tape->record(Matrix(1, 1, s), any_grad(x), [ix, r, c](Tape& t, const Matrix& g) {
    t.accumulate(ix, Matrix(r, c, g[0]));
  });
}

Var bce_loss(Var logit, int label) {
  if (label != 0 && label != 1) {
    throw DomainError("bce_loss: label must be 0 or 1, got " + std::to_string(label));
  }
  const double z = logit.scalar();
  const std::size_t iz = logit.id;
  return logit.tape->record(Matrix(1, 1, bce_from_logit(z, label)), any_grad(logit),
                            [iz, z, label](Tape& t, const Matrix& g) {
                              t.accumulate(iz, Matrix(1, 1, g[0] * (shield::sigmoid(z) - label)));
                            });
}

}  // namespace ad

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double bce_from_logit(double logit, int label) {
  if (label != 0 && label != 1) {
    throw DomainError("bce_loss: label must be 0 or 1, got " + std::to_string(label));
  }
  return std::max(logit, 0.0) - logit * label + std::log1p(std::exp(-std::abs(logit)));
}

void adam_step(std::span<Param* const> params, AdamState& state) {
  if (state.first_moment.empty()) {
    for (const Param* p : params) {
      state.first_moment.emplace_back(p->value.rows(), p->value.cols());
      state.second_moment.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                     " params, got " + std::to_string(params.size()));
  }
  ++state.step_count;
  const AdamConfig& c = state.config;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    Matrix& m = state.first_moment[k];
    Matrix& v = state.second_moment[k];
    if (!m.same_shape(p.value) || !p.grad.same_shape(p.value)) {
      throw ShapeError("adam_step: shape mismatch for param '" + p.name + "'");
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p.value[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
    p.zero_grad();
  }
}

GradCheckResult grad_check(const std::function<Var(Tape&)>& loss,
                           std::span<Param* const> params, double eps, double floor) {
  if (!(eps > 0.0)) throw DomainError("grad_check: eps must be positive");
  for (Param* p : params) p->grad = Matrix(p->value.rows(), p->value.cols());
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (Param* p : params) analytic.push_back(p->grad);

  auto evaluate = [&loss]() {
    Tape tape;
    return loss(tape).scalar();
  };

  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + eps;
      const double f_plus = evaluate();
      p.value[i] = saved - eps;
      const double f_minus = evaluate();
      p.value[i] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      const double a = analytic[k][i];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      if (rel > result.max_rel_error) {
        result = {rel, k, i, a, numeric};
      }
    }
    p.zero_grad();
  }
  return result;
}

}  // namespace shield
