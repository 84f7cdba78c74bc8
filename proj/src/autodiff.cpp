#include "dgm/autodiff.hpp"

#include <cmath>
#include <string>

#include "dgm/errors.hpp"

namespace dgm::ad {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Eigen::Index broadcast_dim(Eigen::Index a, Eigen::Index b, const char* op) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  throw ShapeError(std::string(op) + ": incompatible broadcast dimensions " + std::to_string(a) +
                   " and " + std::to_string(b));
}

Matrix broadcast_to(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  if (m.rows() == 1 && m.cols() == 1) return Matrix::Constant(rows, cols, m(0, 0));
  if (m.rows() == 1) return m.replicate(rows, 1);
  return m.replicate(1, cols);
}

// Sums a broadcast gradient back to the operand's original shape.
Matrix reduce_to(const Matrix& g, Eigen::Index rows, Eigen::Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Matrix::Constant(1, 1, g.sum());
  if (rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

Tape& tape_of(const Var& a, const Var& b) {
  if (a.tape() != b.tape() || a.tape() == nullptr) throw std::invalid_argument("operands live on different tapes");
  return *a.tape();
}

template <class Fn>
Var unary(const Var& a, Matrix value, Fn local_grad) {
  Tape& t = *a.tape();
  const int ia = a.id();
  return t.push(std::move(value), t.requires_grad(a), [ia, local_grad](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, local_grad(tp, g));
  });
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("scalar(): node is " + shape_str(v));
  return v(0, 0);
}

double SpdFactor::logdet() const {
  const auto& l = llt.matrixLLT();
  return 2.0 * l.diagonal().array().log().sum();
}

const Matrix& SpdFactor::inverse() const {
  if (inverse_.size() == 0) inverse_ = llt.solve(Matrix::Identity(llt.rows(), llt.rows()));
  return inverse_;
}

std::shared_ptr<SpdFactor> factorize_spd(const Matrix& a) {
  if (a.rows() != a.cols()) throw ShapeError("factorize_spd: matrix is " + shape_str(a));
  auto f = std::make_shared<SpdFactor>();
  f->llt.compute(a);
  if (f->llt.info() == Eigen::Success) return f;
  for (double jitter = 1e-8; jitter <= 1e-4 * (1 + 1e-9); jitter *= 10.0) {
    Matrix b = a;
    b.diagonal().array() += jitter;
    f->llt.compute(b);
    if (f->llt.info() == Eigen::Success) {
      f->extra_jitter = jitter;
      return f;
    }
  }
  throw ConditioningError("Cholesky factorization failed after jitter escalation to 1e-4 (n=" +
                          std::to_string(a.rows()) + ")");
}

Var Tape::variable(Matrix value) { return push(std::move(value), true, nullptr); }
Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }
Var Tape::constant(double value) { return push(Matrix::Constant(1, 1, value), false, nullptr); }

Var Tape::push(Matrix value, bool requires_grad, Backward backward) {
  nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, requires_grad ? std::move(backward) : nullptr});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::accumulate(int id, Matrix&& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = std::move(g);
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Var& root) {
  if (root.tape() != this) throw std::invalid_argument("backward: root is not on this tape");
  if (root.value().size() != 1) throw ShapeError("backward: root must be 1x1, got " + shape_str(root.value()));
  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[static_cast<std::size_t>(root.id())].grad = Matrix::Ones(1, 1);
  for (int i = root.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

Matrix Tape::grad(const Var& v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

const SpdFactor& Tape::factor(int id) {
  auto it = factors_.find(id);
  if (it != factors_.end()) return *it->second;
  auto f = factorize_spd(value(id));
  return *factors_.emplace(id, std::move(f)).first->second;
}

// ---------------------------------------------------------------- arithmetic

Var add(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  const Matrix& va = a.value();
  const Matrix& vb = b.value();
  const auto r = broadcast_dim(va.rows(), vb.rows(), "add");
  const auto c = broadcast_dim(va.cols(), vb.cols(), "add");
  Matrix out = broadcast_to(va, r, c) + broadcast_to(vb, r, c);
  const int ia = a.id(), ib = b.id();
  const auto ar = va.rows(), ac = va.cols(), br = vb.rows(), bc = vb.cols();
  return t.push(std::move(out), t.requires_grad(a) || t.requires_grad(b),
                [=](Tape& tp, const Matrix& g) {
                  if (tp.requires_grad(ia)) tp.accumulate(ia, reduce_to(g, ar, ac));
                  if (tp.requires_grad(ib)) tp.accumulate(ib, reduce_to(g, br, bc));
                });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  const Matrix& va = a.value();
  const Matrix& vb = b.value();
  const auto r = broadcast_dim(va.rows(), vb.rows(), "sub");
  const auto c = broadcast_dim(va.cols(), vb.cols(), "sub");
  Matrix out = broadcast_to(va, r, c) - broadcast_to(vb, r, c);
  const int ia = a.id(), ib = b.id();
  const auto ar = va.rows(), ac = va.cols(), br = vb.rows(), bc = vb.cols();
  return t.push(std::move(out), t.requires_grad(a) || t.requires_grad(b),
                [=](Tape& tp, const Matrix& g) {
                  if (tp.requires_grad(ia)) tp.accumulate(ia, reduce_to(g, ar, ac));
                  if (tp.requires_grad(ib)) tp.accumulate(ib, Matrix(-reduce_to(g, br, bc)));
                });
}

Var hadamard(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  const Matrix& va = a.value();
  const Matrix& vb = b.value();
  const auto r = broadcast_dim(va.rows(), vb.rows(), "hadamard");
  const auto c = broadcast_dim(va.cols(), vb.cols(), "hadamard");
  Matrix out = broadcast_to(va, r, c).cwiseProduct(broadcast_to(vb, r, c));
  const int ia = a.id(), ib = b.id();
  const auto ar = va.rows(), ac = va.cols(), br = vb.rows(), bc = vb.cols();
  return t.push(std::move(out), t.requires_grad(a) || t.requires_grad(b),
                [=](Tape& tp, const Matrix& g) {
                  if (tp.requires_grad(ia)) {
                    tp.accumulate(ia, reduce_to(g.cwiseProduct(broadcast_to(tp.value(ib), r, c)), ar, ac));
                  }
                  if (tp.requires_grad(ib)) {
                    tp.accumulate(ib, reduce_to(g.cwiseProduct(broadcast_to(tp.value(ia), r, c)), br, bc));
                  }
                });
}

Var divide(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  const Matrix& va = a.value();
  const Matrix& vb = b.value();
  const auto r = broadcast_dim(va.rows(), vb.rows(), "divide");
  const auto c = broadcast_dim(va.cols(), vb.cols(), "divide");
  Matrix out = broadcast_to(va, r, c).cwiseQuotient(broadcast_to(vb, r, c));
  const int ia = a.id(), ib = b.id();
  const auto ar = va.rows(), ac = va.cols(), br = vb.rows(), bc = vb.cols();
  return t.push(std::move(out), t.requires_grad(a) || t.requires_grad(b),
                [=](Tape& tp, const Matrix& g) {
                  const Matrix den = broadcast_to(tp.value(ib), r, c);
                  if (tp.requires_grad(ia)) tp.accumulate(ia, reduce_to(g.cwiseQuotient(den), ar, ac));
                  if (tp.requires_grad(ib)) {
                    const Matrix num = broadcast_to(tp.value(ia), r, c);
                    Matrix gb = -g.cwiseProduct(num).cwiseQuotient(den.cwiseProduct(den));
                    tp.accumulate(ib, reduce_to(gb, br, bc));
                  }
                });
}

Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator-(const Var& a) { return scale(a, -1.0); }
Var operator*(double s, const Var& a) { return scale(a, s); }
Var operator+(const Var& a, double s) { return add_scalar(a, s); }

Var add_scalar(const Var& a, double s) {
  return unary(a, (a.value().array() + s).matrix(), [](Tape&, const Matrix& g) { return g; });
}

Var scale(const Var& a, double s) {
  return unary(a, s * a.value(), [s](Tape&, const Matrix& g) { return Matrix(s * g); });
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a.value()) + " * " + shape_str(b.value()));
  }
  Matrix out = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  return t.push(std::move(out), t.requires_grad(a) || t.requires_grad(b), [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, Matrix(g * tp.value(ib).transpose()));
    if (tp.requires_grad(ib)) tp.accumulate(ib, Matrix(tp.value(ia).transpose() * g));
  });
}

Var transpose(const Var& a) {
  return unary(a, a.value().transpose(), [](Tape&, const Matrix& g) { return Matrix(g.transpose()); });
}

// ---------------------------------------------------------------- reductions

Var sum(const Var& a) {
  const auto r = a.rows(), c = a.cols();
  return unary(a, Matrix::Constant(1, 1, a.value().sum()),
               [r, c](Tape&, const Matrix& g) { return Matrix(Matrix::Constant(r, c, g(0, 0))); });
}

Var row_sum(const Var& a) {
  const auto c = a.cols();
  return unary(a, a.value().rowwise().sum(), [c](Tape&, const Matrix& g) { return Matrix(g.replicate(1, c)); });
}

Var col_sum(const Var& a) {
  const auto r = a.rows();
  return unary(a, a.value().colwise().sum(), [r](Tape&, const Matrix& g) { return Matrix(g.replicate(r, 1)); });
}

// ---------------------------------------------------------------- elementwise

Var sigmoid(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  Tape& t = *a.tape();
  const int ia = a.id();
  const int io = t.next_id();
  return t.push(std::move(out), t.requires_grad(a), [ia, io](Tape& tp, const Matrix& g) {
    const Matrix& s = tp.value(io);
    tp.accumulate(ia, Matrix(g.array() * s.array() * (1.0 - s.array())));
  });
}

namespace {
double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Var softplus_square(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) {
    const double s = softplus(x);
    return s * s;
  });
  return unary(a, std::move(out), [ia = a.id()](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(ia);
    Matrix d = x.unaryExpr([](double v) { return 2.0 * softplus(v) * logistic(v); });
    return Matrix(g.cwiseProduct(d));
  });
}

Var exp(const Var& a) {
  Matrix out = a.value().array().exp().matrix();
  Tape& t = *a.tape();
  const int ia = a.id();
  const int io = t.next_id();
  return t.push(std::move(out), t.requires_grad(a), [ia, io](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, Matrix(g.cwiseProduct(tp.value(io))));
  });
}

Var log(const Var& a) {
  return unary(a, a.value().array().log().matrix(), [ia = a.id()](Tape& tp, const Matrix& g) {
    return Matrix(g.cwiseQuotient(tp.value(ia)));
  });
}

Var square(const Var& a) {
  return unary(a, a.value().array().square().matrix(), [ia = a.id()](Tape& tp, const Matrix& g) {
    return Matrix(2.0 * g.cwiseProduct(tp.value(ia)));
  });
}

Var sqrt_floor(const Var& a, double floor) {
  Matrix out = a.value().unaryExpr([floor](double x) { return std::sqrt(std::max(x, floor)); });
  return unary(a, std::move(out), [ia = a.id(), floor](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(ia);
    Matrix d = x.unaryExpr([floor](double v) { return v > floor ? 0.5 / std::sqrt(v) : 0.0; });
    return Matrix(g.cwiseProduct(d));
  });
}

Var cos(const Var& a) {
  return unary(a, a.value().array().cos().matrix(), [ia = a.id()](Tape& tp, const Matrix& g) {
    return Matrix(-g.cwiseProduct(Matrix(tp.value(ia).array().sin())));
  });
}

Var sin(const Var& a) {
  return unary(a, a.value().array().sin().matrix(), [ia = a.id()](Tape& tp, const Matrix& g) {
    return Matrix(g.cwiseProduct(Matrix(tp.value(ia).array().cos())));
  });
}

// ---------------------------------------------------------------- structure

Var block(const Var& a, Eigen::Index row, Eigen::Index col, Eigen::Index rows, Eigen::Index cols) {
  const Matrix& va = a.value();
  if (row < 0 || col < 0 || row + rows > va.rows() || col + cols > va.cols()) {
    throw ShapeError("block out of range on " + shape_str(va));
  }
  const auto r = va.rows(), c = va.cols();
  return unary(a, va.block(row, col, rows, cols), [=](Tape&, const Matrix& g) {
    Matrix full = Matrix::Zero(r, c);
    full.block(row, col, rows, cols) = g;
    return full;
  });
}

Var column(const Var& a, Eigen::Index col) { return block(a, 0, col, a.rows(), 1); }

Var vcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("vcat of nothing");
  Tape& t = *parts.front().tape();
  const auto c = parts.front().cols();
  Eigen::Index total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.cols() != c) throw ShapeError("vcat: column mismatch");
    total += p.rows();
    rg = rg || t.requires_grad(p);
  }
  Matrix out(total, c);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    spans.emplace_back(p.id(), off);
    off += p.rows();
  }
  return t.push(std::move(out), rg, [spans](Tape& tp, const Matrix& g) {
    for (const auto& [id, o] : spans) {
      if (tp.requires_grad(id)) tp.accumulate(id, Matrix(g.middleRows(o, tp.value(id).rows())));
    }
  });
}

Var hcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("hcat of nothing");
  Tape& t = *parts.front().tape();
  const auto r = parts.front().rows();
  Eigen::Index total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.rows() != r) throw ShapeError("hcat: row mismatch");
    total += p.cols();
    rg = rg || t.requires_grad(p);
  }
  Matrix out(r, total);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    spans.emplace_back(p.id(), off);
    off += p.cols();
  }
  return t.push(std::move(out), rg, [spans](Tape& tp, const Matrix& g) {
    for (const auto& [id, o] : spans) {
      if (tp.requires_grad(id)) tp.accumulate(id, Matrix(g.middleCols(o, tp.value(id).cols())));
    }
  });
}

Var reshape_segment(const Var& vec, Eigen::Index offset, Eigen::Index rows, Eigen::Index cols) {
  const Matrix& v = vec.value();
  if (v.cols() != 1 || offset < 0 || offset + rows * cols > v.rows()) {
    throw ShapeError("reshape_segment out of range on " + shape_str(v));
  }
  Matrix out = Eigen::Map<const Matrix>(v.data() + offset, rows, cols);
  const auto n = v.rows();
  return unary(vec, std::move(out), [=](Tape&, const Matrix& g) {
    Matrix full = Matrix::Zero(n, 1);
    Eigen::Map<Matrix>(full.data() + offset, rows, cols) = g;
    return full;
  });
}

// ---------------------------------------------------------------- kernels

Var rbf_kernel(const Var& a, const Var& b, const Var& inv_sq_ell) {
  Tape& t = tape_of(a, b);
  const Matrix& za = a.value();
  const Matrix& zb = b.value();
  const Matrix& w = inv_sq_ell.value();
  if (za.cols() != zb.cols() || w.rows() != 1 || w.cols() != za.cols()) {
    throw ShapeError("rbf_kernel: feature dimension mismatch");
  }
  const auto n = za.rows(), m = zb.rows(), dims = za.cols();
  Matrix k = Matrix::Zero(n, m);
  for (Eigen::Index d = 0; d < dims; ++d) {
    const double wd = w(0, d);
    for (Eigen::Index j = 0; j < m; ++j) {
      const double bj = zb(j, d);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double diff = za(i, d) - bj;
        k(i, j) += diff * diff * wd;
      }
    }
  }
  k = (-0.5 * k.array()).exp().matrix();
  const int ia = a.id(), ib = b.id(), iw = inv_sq_ell.id();
  const bool rg = t.requires_grad(a) || t.requires_grad(b) || t.requires_grad(inv_sq_ell);
  const int ik = t.next_id();
  return t.push(std::move(k), rg, [=](Tape& tp, const Matrix& g) {
    const Matrix& za_ = tp.value(ia);
    const Matrix& zb_ = tp.value(ib);
    const Matrix& w_ = tp.value(iw);
    const Matrix p = g.cwiseProduct(tp.value(ik));
    const Eigen::VectorXd rs = p.rowwise().sum();
    const Eigen::RowVectorXd cs = p.colwise().sum();
    if (tp.requires_grad(ia)) {
      Matrix ga(za_.rows(), za_.cols());
      for (Eigen::Index d = 0; d < za_.cols(); ++d) {
        ga.col(d) = -w_(0, d) * (za_.col(d).cwiseProduct(rs) - p * zb_.col(d));
      }
      tp.accumulate(ia, std::move(ga));
    }
    if (tp.requires_grad(ib)) {
      Matrix gb(zb_.rows(), zb_.cols());
      for (Eigen::Index d = 0; d < zb_.cols(); ++d) {
        gb.col(d) = w_(0, d) * (p.transpose() * za_.col(d) - zb_.col(d).cwiseProduct(cs.transpose()));
      }
      tp.accumulate(ib, std::move(gb));
    }
    if (tp.requires_grad(iw)) {
      // dK/dw_d = -1/2 (a_d - b_d)^2 K
      Matrix gw(1, za_.cols());
      for (Eigen::Index d = 0; d < za_.cols(); ++d) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < zb_.rows(); ++j) {
          for (Eigen::Index i = 0; i < za_.rows(); ++i) {
            const double diff = za_(i, d) - zb_(j, d);
            acc += p(i, j) * diff * diff;
          }
        }
        gw(0, d) = -0.5 * acc;
      }
      tp.accumulate(iw, std::move(gw));
    }
  });
}

Var rbf_kernel_dt(const Var& a, const Var& adot, const Var& b, const Var& inv_sq_ell, const Var& k) {
  Tape& t = tape_of(a, b);
  const Matrix& za = a.value();
  const Matrix& zb = b.value();
  const Matrix& w = inv_sq_ell.value();
  if (za.cols() != zb.cols() || adot.rows() != za.rows() || adot.cols() != za.cols() || w.rows() != 1 ||
      w.cols() != za.cols() || k.rows() != za.rows() || k.cols() != zb.rows()) {
    throw ShapeError("rbf_kernel_dt: operand shapes disagree");
  }
  // D_ij = s_i - c_ij with s_i = a_i . (w * adot_i), c = (adot * w) b^T; out = -k * D.
  auto u = std::make_shared<Matrix>(adot.value().array().rowwise() * w.row(0).array());
  auto d = std::make_shared<Matrix>(-(*u) * zb.transpose());
  d->colwise() += za.cwiseProduct(*u).rowwise().sum();
  Matrix out = -k.value().cwiseProduct(*d);
  const int ia = a.id(), iad = adot.id(), ib = b.id(), iw = inv_sq_ell.id(), ik = k.id();
  const bool rg = t.requires_grad(a) || t.requires_grad(adot) || t.requires_grad(b) ||
                  t.requires_grad(inv_sq_ell) || t.requires_grad(k);
  return t.push(std::move(out), rg, [=](Tape& tp, const Matrix& g) {
    const Matrix& za_ = tp.value(ia);
    const Matrix& zad = tp.value(iad);
    const Matrix& zb_ = tp.value(ib);
    const Matrix& w_ = tp.value(iw);
    if (tp.requires_grad(ik)) tp.accumulate(ik, Matrix(-g.cwiseProduct(*d)));
    const Matrix h = -g.cwiseProduct(tp.value(ik));  // dL/dD
    const Eigen::VectorXd gs = h.rowwise().sum();
    // dL/du = gs * a - h b   (from s and from -c)
    const Matrix gu = za_.array().colwise() * gs.array() - (h * zb_).array();
    if (tp.requires_grad(ia)) tp.accumulate(ia, Matrix(u->array().colwise() * gs.array()));
    if (tp.requires_grad(ib)) tp.accumulate(ib, Matrix(-h.transpose() * (*u)));
    if (tp.requires_grad(iad)) tp.accumulate(iad, Matrix(gu.array().rowwise() * w_.row(0).array()));
    if (tp.requires_grad(iw)) tp.accumulate(iw, Matrix(gu.cwiseProduct(zad).colwise().sum()));
  });
}

// ---------------------------------------------------------------- SPD algebra

Var add_diag(const Var& a, const Var& s) {
  Tape& t = tape_of(a, s);
  if (a.rows() != a.cols() || s.value().size() != 1) throw ShapeError("add_diag: needs square matrix and 1x1 shift");
  Matrix out = a.value();
  out.diagonal().array() += s.scalar();
  const int ia = a.id(), is = s.id();
  return t.push(std::move(out), t.requires_grad(a) || t.requires_grad(s), [ia, is](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, g);
    if (tp.requires_grad(is)) tp.accumulate(is, Matrix::Constant(1, 1, g.trace()));
  });
}

Var add_diag(const Var& a, double s) { return add_diag(a, a.tape()->constant(s)); }

Var solve_spd(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (a.rows() != a.cols() || a.rows() != b.rows()) throw ShapeError("solve_spd: dimension mismatch");
  const SpdFactor& f = t.factor(a);
  Matrix x = f.solve(b.value());
  const int ia = a.id(), ib = b.id();
  const int ix = t.next_id();
  return t.push(std::move(x), t.requires_grad(a) || t.requires_grad(b), [ia, ib, ix](Tape& tp, const Matrix& g) {
    const SpdFactor& fac = tp.factor(ia);
    Matrix gb = fac.solve(g);
    if (tp.requires_grad(ia)) tp.accumulate(ia, Matrix(-gb * tp.value(ix).transpose()));
    if (tp.requires_grad(ib)) tp.accumulate(ib, std::move(gb));
  });
}

Var logdet_spd(const Var& a) {
  Tape& t = *a.tape();
  if (a.rows() != a.cols()) throw ShapeError("logdet_spd: matrix not square");
  const SpdFactor& f = t.factor(a);
  const int ia = a.id();
  return t.push(Matrix::Constant(1, 1, f.logdet()), t.requires_grad(a), [ia](Tape& tp, const Matrix& g) {
    const SpdFactor& fac = tp.factor(ia);
    tp.accumulate(ia, Matrix(g(0, 0) * fac.inverse()));
  });
}

Var quad_diag_spd(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (a.rows() != a.cols() || a.rows() != b.rows()) throw ShapeError("quad_diag_spd: dimension mismatch");
  const SpdFactor& f = t.factor(a);
  auto x = std::make_shared<Matrix>(f.inverse() * b.value());
  Matrix q = b.value().cwiseProduct(*x).colwise().sum().transpose();
  const int ia = a.id(), ib = b.id();
  return t.push(std::move(q), t.requires_grad(a) || t.requires_grad(b), [ia, ib, x](Tape& tp, const Matrix& g) {
    // d q_j = 2 x_j^T db_j - x_j^T dA x_j
    const Matrix xg = (*x) * g.col(0).asDiagonal();
    if (tp.requires_grad(ia)) tp.accumulate(ia, Matrix(-xg * x->transpose()));
    if (tp.requires_grad(ib)) tp.accumulate(ib, Matrix(2.0 * xg));
  });
}

Var quad_diag_rows_spd(const Var& a, const Var& c) {
  Tape& t = tape_of(a, c);
  if (a.rows() != a.cols() || a.rows() != c.cols()) throw ShapeError("quad_diag_rows_spd: dimension mismatch");
  const SpdFactor& f = t.factor(a);
  // y = c a^{-1}, rows y_i = c_i a^{-1} since a is symmetric
  auto y = std::make_shared<Matrix>(c.value() * f.inverse());
  Matrix q = c.value().cwiseProduct(*y).rowwise().sum();
  const int ia = a.id(), ic = c.id();
  return t.push(std::move(q), t.requires_grad(a) || t.requires_grad(c), [ia, ic, y](Tape& tp, const Matrix& g) {
    const Matrix gy = g.col(0).asDiagonal() * (*y);
    if (tp.requires_grad(ia)) tp.accumulate(ia, Matrix(-y->transpose() * gy));
    if (tp.requires_grad(ic)) tp.accumulate(ic, Matrix(2.0 * gy));
  });
}

}  // namespace dgm::ad
