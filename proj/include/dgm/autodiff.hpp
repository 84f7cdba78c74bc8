#pragma once

// Reverse-mode differentiation over Eigen matrices.
//
// A Tape records every intermediate matrix together with a closure that maps
// the gradient of that node onto the gradients of its inputs. Node ids are
// assigned in creation order, so a reverse sweep over ids is a valid
// topological order. Only nodes that (transitively) depend on a variable
// carry gradients; constants never allocate one.
//
// The primitive set is intentionally small: broadcasting arithmetic, matrix
// products, a handful of elementwise nonlinearities, an ARD-RBF Gram matrix,
// and the SPD solve / logdet / quadratic-form primitives used by GP
// marginal likelihoods.

#include <deque>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace dgm::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

class Var {
 public:
  Var() = default;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double scalar() const;

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Cholesky factor of an SPD matrix, with the extra diagonal jitter that was
/// needed to make the factorization succeed.
struct SpdFactor {
  Eigen::LLT<Matrix> llt;
  double extra_jitter = 0.0;

  Matrix solve(const Matrix& b) const { return llt.solve(b); }
  double logdet() const;
  /// Explicit inverse, computed on first use and cached. For wide right-hand
  /// sides a GEMM against it is cheaper than two triangular solves.
  const Matrix& inverse() const;

 private:
  mutable Matrix inverse_;
};

/// Factorizes `a`, escalating diagonal jitter x10 from 1e-8 up to 1e-4 on
/// failure. Throws ConditioningError when every attempt fails.
std::shared_ptr<SpdFactor> factorize_spd(const Matrix& a);

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var variable(Matrix value);
  Var constant(Matrix value);
  Var constant(double value);

  /// Seeds d(root)/d(root) = 1 and propagates to every reachable node.
  /// `root` must be 1x1.
  void backward(const Var& root);

  /// Gradient accumulated at `v`; a zero matrix of matching shape if the
  /// node was never reached.
  Matrix grad(const Var& v) const;

  std::size_t size() const { return nodes_.size(); }

  // Primitive-author interface.
  Var push(Matrix value, bool requires_grad, Backward backward);
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  bool requires_grad(const Var& v) const { return requires_grad(v.id()); }
  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  void accumulate(int id, const Matrix& g);
  void accumulate(int id, Matrix&& g);

  /// Cached factorization of an SPD node, shared by every primitive that
  /// consumes it.
  const SpdFactor& factor(int id);
  const SpdFactor& factor(const Var& a) { return factor(a.id()); }
  /// Id the next pushed node will receive; lets a backward closure refer to
  /// its own output value.
  int next_id() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::deque<Node> nodes_;
  std::unordered_map<int, std::shared_ptr<SpdFactor>> factors_;
};

// ---- arithmetic (numpy-style broadcasting of 1x1, 1xn and mx1 operands) ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var divide(const Var& a, const Var& b);
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator*(double s, const Var& a);
Var operator+(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var scale(const Var& a, double s);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

// ---- reductions ----
Var sum(const Var& a);
/// Sum over columns; m x n -> m x 1.
Var row_sum(const Var& a);
/// Sum over rows; m x n -> 1 x n.
Var col_sum(const Var& a);

// ---- elementwise ----
Var sigmoid(const Var& a);
/// log(1 + exp(x))^2
Var softplus_square(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
/// sqrt(max(x, floor)); derivative is zero where the floor is active.
Var sqrt_floor(const Var& a, double floor);
Var cos(const Var& a);
Var sin(const Var& a);

// ---- structure ----
Var block(const Var& a, Eigen::Index row, Eigen::Index col, Eigen::Index rows, Eigen::Index cols);
Var column(const Var& a, Eigen::Index col);
Var vcat(const std::vector<Var>& parts);
Var hcat(const std::vector<Var>& parts);
/// Column-major reinterpretation of a contiguous range of a column vector.
Var reshape_segment(const Var& vec, Eigen::Index offset, Eigen::Index rows, Eigen::Index cols);

// ---- kernels ----
/// K_ij = exp(-1/2 sum_d (a_id - b_jd)^2 * inv_sq_ell_d). inv_sq_ell is 1 x D.
Var rbf_kernel(const Var& a, const Var& b, const Var& inv_sq_ell);
/// d/dt_a of that kernel when row i of `a` moves with velocity adot_i:
/// -k_ij * sum_d (a_id - b_jd) inv_sq_ell_d adot_id. `k` is rbf_kernel(a, b, inv_sq_ell).
Var rbf_kernel_dt(const Var& a, const Var& adot, const Var& b, const Var& inv_sq_ell, const Var& k);

// ---- symmetric positive-definite algebra ----
/// a + s * I, s a 1x1 node.
Var add_diag(const Var& a, const Var& s);
Var add_diag(const Var& a, double s);
/// a^{-1} b
Var solve_spd(const Var& a, const Var& b);
/// log det a
Var logdet_spd(const Var& a);
/// Column j of the result is b_j^T a^{-1} b_j, returned as (cols(b) x 1).
Var quad_diag_spd(const Var& a, const Var& b);
/// Row i of the result is c_i a^{-1} c_i^T, returned as (rows(c) x 1).
Var quad_diag_rows_spd(const Var& a, const Var& c);

}  // namespace dgm::ad
