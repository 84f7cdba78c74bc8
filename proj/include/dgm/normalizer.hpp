#pragma once

#include <vector>

#include <Eigen/Dense>

namespace dgm {

/// Per-dimension affine state map x' = (x - shift) / scale and time map
/// t' = t / time_scale. Derivatives transform as dx'/dt' = time_scale * (dx/dt) / scale.
struct Normalizer {
  Eigen::VectorXd shift;
  Eigen::VectorXd scale;
  double time_scale = 1.0;

  static Normalizer identity(int dim) {
    return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim), 1.0};
  }

  Eigen::VectorXd state_in(const Eigen::VectorXd& x) const { return (x - shift).cwiseQuotient(scale); }
  Eigen::VectorXd state_out(const Eigen::VectorXd& xn) const { return shift + scale.cwiseProduct(xn); }

  /// Rows [x0', t'] for one initial condition at several times.
  Eigen::MatrixXd points(const Eigen::VectorXd& x0, const Eigen::VectorXd& times) const {
    const Eigen::Index k = x0.size();
    Eigen::MatrixXd p(times.size(), k + 1);
    const Eigen::RowVectorXd xn = state_in(x0).transpose();
    for (Eigen::Index i = 0; i < times.size(); ++i) {
      p.row(i).head(k) = xn;
      p(i, k) = times[i] / time_scale;
    }
    return p;
  }
};

}  // namespace dgm
