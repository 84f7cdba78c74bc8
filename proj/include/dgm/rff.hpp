#pragma once

#include <cstdint>

#include "dgm/autodiff.hpp"

namespace dgm {

struct PosteriorVars;

/// Paired cos/sin random Fourier features of a unit-variance ARD-RBF kernel:
///   phi(z) = sqrt(2 / F) [cos(omega z); sin(omega z)],
/// so phi(z)^T phi(z) = 1 for every z.
struct FourierFeatureSpec {
  int features = 0;       ///< F, even
  Eigen::MatrixXd omega;  ///< (F / 2) x D, rows ~ N(0, diag(1 / l^2))
};

namespace rff {

FourierFeatureSpec sample_fourier_features(const Eigen::RowVectorXd& lengthscales, int features, std::uint64_t seed);

/// Phi: F x n for feature rows z (n x D).
ad::Var feature_matrix(const FourierFeatureSpec& spec, const ad::Var& z);
/// d Phi / dt given dz/dt (n x D): F x n.
ad::Var feature_matrix_dot(const FourierFeatureSpec& spec, const ad::Var& z, const ad::Var& zdot);
Eigen::MatrixXd feature_matrix(const FourierFeatureSpec& spec, const Eigen::MatrixXd& z);

/// (Phi^T Phi + s2 I)^{-1} v via the F x F system Phi Phi^T + s2 I.
Eigen::VectorXd woodbury_solve(const Eigen::MatrixXd& phi, double s2, const Eigen::VectorXd& v);
/// log det(Phi^T Phi + s2 I) for Phi of shape F x n.
double approx_logdet(const Eigen::MatrixXd& phi, double s2, Eigen::Index n);

/// M = Phi Phi^T + s2 I.
ad::Var feature_system(const ad::Var& phi, const ad::Var& s2);
/// 1/2 r^T (Phi^T Phi + s2 I)^{-1} r + 1/2 log det(Phi^T Phi + s2 I), from M.
ad::Var data_nll_core(const ad::Var& m, const ad::Var& phi, const ad::Var& s2, const ad::Var& r);
/// mu = mean_dot + Phi_dot^T M^{-1} Phi r; var = s2 diag(Phi_dot^T M^{-1} Phi_dot).
PosteriorVars derivative_posterior_core(const ad::Var& m, const ad::Var& phi, const ad::Var& phi_dot,
                                        const ad::Var& s2, const ad::Var& r, const ad::Var& mean_dot);
/// mu = mean + Phi_q^T M^{-1} Phi r; var = s2 diag(Phi_q^T M^{-1} Phi_q).
PosteriorVars state_posterior_core(const ad::Var& m, const ad::Var& phi, const ad::Var& phi_q, const ad::Var& s2,
                                   const ad::Var& r, const ad::Var& mean, bool with_var = true);

}  // namespace rff
}  // namespace dgm
