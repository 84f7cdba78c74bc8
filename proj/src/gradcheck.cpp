#include "dgm/gradcheck.hpp"

#include <cmath>
#include <string>

#include "dgm/errors.hpp"

namespace dgm {

GradResult value_and_grad(const LossFn& loss, const Eigen::VectorXd& p) {
  ad::Tape tape;
  ad::Var params = tape.variable(p);
  ad::Var out = loss(tape, params);
  const double v = out.scalar();
  if (!std::isfinite(v)) throw NonFiniteError("loss evaluated to " + std::to_string(v));
  tape.backward(out);
  GradResult r{v, tape.grad(params)};
  if (!r.gradient.allFinite()) {
    for (Eigen::Index i = 0; i < r.gradient.size(); ++i) {
      if (!std::isfinite(r.gradient[i])) {
        throw NonFiniteError("gradient coordinate " + std::to_string(i) + " is non-finite");
      }
    }
  }
  return r;
}

double evaluate(const LossFn& loss, const Eigen::VectorXd& p) {
  ad::Tape tape;
  ad::Var params = tape.constant(p);
  return loss(tape, params).scalar();
}

Eigen::VectorXd finite_diff_grad(const LossFn& loss, const Eigen::VectorXd& p, double eps) {
  if (!(eps > 0)) throw std::invalid_argument("finite difference step must be positive");
  Eigen::VectorXd g(p.size());
  Eigen::VectorXd q = p;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    q[i] = p[i] + eps;
    const double up = evaluate(loss, q);
    q[i] = p[i] - eps;
    const double down = evaluate(loss, q);
    q[i] = p[i];
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

double finite_diff_check(const LossFn& loss, const Eigen::VectorXd& p, double eps) {
  const Eigen::VectorXd ad_grad = value_and_grad(loss, p).gradient;
  const Eigen::VectorXd fd_grad = finite_diff_grad(loss, p, eps);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double err = std::abs(ad_grad[i] - fd_grad[i]) / std::max(1.0, std::abs(ad_grad[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace dgm
