#pragma once

// Tape-based reverse-mode differentiation over dense double matrices.
//
// A Tape records every operation applied during a forward pass. Each recorded
// node keeps its value and a closure that pushes the node's adjoint back to its
// inputs. Leaves are either constants (no gradient) or bindings of a Param, in
// which case backward() accumulates into Param::grad.
//
//   Tape tape;
//   Var w = tape.param(weights);
//   Var y = ad::matmul(w, tape.constant(x));
//   tape.backward(ad::sum(y));
//
// A tape is single-threaded. Vars are cheap handles and are only valid while
// the tape that produced them is alive.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "shield/matrix.hpp"
#include "shield/sparse.hpp"

namespace shield {

struct Param {
  Matrix value;
  Matrix grad;
  std::string name;

  Param() = default;
  Param(std::string n, Matrix v)
      : value(std::move(v)), grad(value.rows(), value.cols()), name(std::move(n)) {}

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  // Value of a 1x1 node.
  double scalar() const;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var param(Param& p);

  // Records a computed node. `backward` may be empty when no input needs grad.
  Var record(Matrix value, bool requires_grad, BackwardFn backward);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Adjoint of a node after backward(); zero matrix if never reached.
  Matrix grad(Var v) const;

  // Adds `contribution` to the adjoint of node `id`.
  void accumulate(std::size_t id, const Matrix& contribution);

  // Propagates d(loss)/d(node) to every reachable node and adds the result
  // into the bound Params' grad fields. `loss` must be 1x1.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    Param* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

namespace ad {

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var scale(Var a, double s);
Var hadamard(Var a, Var b);
// W x + b for column vector x (d_in x 1), W (d_out x d_in), b (d_out x 1).
Var linear(Var x, Var w, Var b);
// Column means of an n x d matrix, returned as a d x 1 vector.
Var mean_pool(Var h);
Var sigmoid(Var x);
Var relu(Var x);
Var transpose(Var x);
// Stacks matrices with equal column counts on top of each other.
Var vstack(std::span<const Var> parts);
// Concatenates column vectors; equivalent to vstack over n_i x 1 parts.
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
// a * x where `a` is a constant sparse matrix. `a` must outlive the tape.
Var spmm(const CsrMatrix& a, Var x);
// Sum of all entries, 1x1.
Var sum(Var x);
// Binary cross-entropy from a 1x1 logit: log(1 + exp(z)) - y z, evaluated in
// a form that stays finite for large |z|. Label must be 0 or 1.
Var bce_loss(Var logit, int label);

}  // namespace ad

// Plain scalar helpers sharing the numerically stable forms used above.
double sigmoid(double x);
double bce_from_logit(double logit, int label);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::int64_t step_count = 0;
};

// One bias-corrected Adam update of every param, then zeroes their grads.
// The state is sized on first use and must be reused with the same param list.
void adam_step(std::span<Param* const> params, AdamState& state);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_entry = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares reverse-mode gradients of `loss` against central differences
// (f(p + eps) - f(p - eps)) / (2 eps) for every entry of every param. The
// relative error of an entry is |a - n| / max(|a|, |n|, floor). Param values
// are restored afterwards and their grads are left zeroed.
GradCheckResult grad_check(const std::function<Var(Tape&)>& loss,
                           std::span<Param* const> params, double eps = 1e-5,
                           double floor = 1e-4);

}  // namespace shield
