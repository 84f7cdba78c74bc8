#pragma once

#include <functional>

#include "dgm/autodiff.hpp"

namespace dgm {

/// A scalar loss built on a tape from the flat parameter column vector.
using LossFn = std::function<ad::Var(ad::Tape&, const ad::Var& params)>;

struct GradResult {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

/// Evaluates `loss` at `p` and back-propagates. Throws NonFiniteError if the
/// value or any gradient coordinate is NaN/Inf.
GradResult value_and_grad(const LossFn& loss, const Eigen::VectorXd& p);

/// Loss value only; no backward sweep.
double evaluate(const LossFn& loss, const Eigen::VectorXd& p);

/// Central finite-difference gradient with step `eps`.
Eigen::VectorXd finite_diff_grad(const LossFn& loss, const Eigen::VectorXd& p, double eps);

/// max_i |g_ad_i - g_fd_i| / max(1, |g_ad_i|).
double finite_diff_check(const LossFn& loss, const Eigen::VectorXd& p, double eps);

}  // namespace dgm
