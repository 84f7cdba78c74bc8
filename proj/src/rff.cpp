#include "dgm/rff.hpp"

#include <cmath>
#include <stdexcept>

#include "dgm/errors.hpp"
#include "dgm/rng.hpp"
#include "dgm/smoother.hpp"

namespace dgm::rff {

FourierFeatureSpec sample_fourier_features(const Eigen::RowVectorXd& lengthscales, int features, std::uint64_t seed) {
  if (features < 2 || features % 2 != 0) throw std::invalid_argument("feature count must be even and >= 2");
  if ((lengthscales.array() <= 0).any()) throw std::invalid_argument("lengthscales must be positive");
  Rng rng(seed);
  FourierFeatureSpec spec;
  spec.features = features;
  spec.omega.resize(features / 2, lengthscales.size());
  for (Eigen::Index r = 0; r < spec.omega.rows(); ++r)
    for (Eigen::Index d = 0; d < spec.omega.cols(); ++d) spec.omega(r, d) = rng.normal() / lengthscales[d];
  return spec;
}

ad::Var feature_matrix(const FourierFeatureSpec& spec, const ad::Var& z) {
  ad::Tape& t = *z.tape();
  const ad::Var proj = ad::matmul(z, t.constant(spec.omega.transpose()));
  const double c = std::sqrt(2.0 / spec.features);
  return ad::transpose(ad::scale(ad::hcat({ad::cos(proj), ad::sin(proj)}), c));
}

ad::Var feature_matrix_dot(const FourierFeatureSpec& spec, const ad::Var& z, const ad::Var& zdot) {
  ad::Tape& t = *z.tape();
  const ad::Var omega_t = t.constant(spec.omega.transpose());
  const ad::Var proj = ad::matmul(z, omega_t);
  const ad::Var proj_dot = ad::matmul(zdot, omega_t);
  const double c = std::sqrt(2.0 / spec.features);
  return ad::transpose(
      ad::scale(ad::hcat({-ad::hadamard(ad::sin(proj), proj_dot), ad::hadamard(ad::cos(proj), proj_dot)}), c));
}

Eigen::MatrixXd feature_matrix(const FourierFeatureSpec& spec, const Eigen::MatrixXd& z) {
  ad::Tape tape;
  return feature_matrix(spec, tape.constant(z)).value();
}

Eigen::VectorXd woodbury_solve(const Eigen::MatrixXd& phi, double s2, const Eigen::VectorXd& v) {
  if (!(s2 > 0)) throw std::invalid_argument("noise variance must be positive");
  if (phi.cols() != v.size()) throw ShapeError("woodbury_solve: Phi columns must match v");
  Eigen::MatrixXd m = phi * phi.transpose();
  m.diagonal().array() += s2;
  const auto f = ad::factorize_spd(m);
  return (v - phi.transpose() * f->solve(phi * v)) / s2;
}

double approx_logdet(const Eigen::MatrixXd& phi, double s2, Eigen::Index n) {
  if (!(s2 > 0)) throw std::invalid_argument("noise variance must be positive");
  Eigen::MatrixXd m = phi * phi.transpose();
  m.diagonal().array() += s2;
  return ad::factorize_spd(m)->logdet() + static_cast<double>(n - phi.rows()) * std::log(s2);
}

ad::Var feature_system(const ad::Var& phi, const ad::Var& s2) {
  return ad::add_diag(ad::matmul(phi, ad::transpose(phi)), s2);
}

ad::Var data_nll_core(const ad::Var& m, const ad::Var& phi, const ad::Var& s2, const ad::Var& r) {
  const auto n = r.rows();
  const auto f = phi.rows();
  const ad::Var u = ad::matmul(phi, r);
  const ad::Var quad = ad::divide(ad::sum(ad::square(r)) - ad::quad_diag_spd(m, u), s2);
  const ad::Var logdet = ad::logdet_spd(m) + ad::scale(ad::log(s2), static_cast<double>(n - f));
  return ad::scale(quad + logdet, 0.5);
}

PosteriorVars derivative_posterior_core(const ad::Var& m, const ad::Var& phi, const ad::Var& phi_dot,
                                        const ad::Var& s2, const ad::Var& r, const ad::Var& mean_dot) {
  const ad::Var w = ad::solve_spd(m, ad::matmul(phi, r));
  return {mean_dot + ad::matmul(ad::transpose(phi_dot), w), ad::hadamard(ad::quad_diag_spd(m, phi_dot), s2)};
}

PosteriorVars state_posterior_core(const ad::Var& m, const ad::Var& phi, const ad::Var& phi_q, const ad::Var& s2,
                                   const ad::Var& r, const ad::Var& mean, bool with_var) {
  const ad::Var w = ad::solve_spd(m, ad::matmul(phi, r));
  PosteriorVars out{mean + ad::matmul(ad::transpose(phi_q), w), {}};
  if (with_var) out.var = ad::hadamard(ad::quad_diag_spd(m, phi_q), s2);
  return out;
}

}  // namespace dgm::rff
