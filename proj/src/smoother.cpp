#include "dgm/smoother.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "dgm/errors.hpp"
#include "dgm/rng.hpp"

namespace dgm {

namespace gp {

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::RowVectorXd& lengthscales) {
  if ((lengthscales.array() <= 0).any()) throw std::invalid_argument("lengthscales must be positive");
  ad::Tape tape;
  const Eigen::MatrixXd w = lengthscales.array().square().inverse().matrix();
  return ad::rbf_kernel(tape.constant(a), tape.constant(b), tape.constant(w)).value();
}

ad::Var kernel_dt(const ad::Var& z_a, const ad::Var& zdot_a, const ad::Var& z_b, const ad::Var& inv_sq_ell,
                  const ad::Var& k_ab) {
  return ad::rbf_kernel_dt(z_a, zdot_a, z_b, inv_sq_ell, k_ab);
}

ad::Var kernel_ddt_diag(const ad::Var& zdot, const ad::Var& inv_sq_ell) {
  return ad::row_sum(ad::hadamard(ad::square(zdot), inv_sq_ell));
}

Eigen::MatrixXd kernel_ddt(const Eigen::MatrixXd& z_a, const Eigen::MatrixXd& zdot_a, const Eigen::MatrixXd& z_b,
                           const Eigen::MatrixXd& zdot_b, const Eigen::RowVectorXd& inv_sq_ell) {
  Eigen::MatrixXd out(z_a.rows(), z_b.rows());
  const Eigen::VectorXd w = inv_sq_ell.transpose();
  for (Eigen::Index i = 0; i < z_a.rows(); ++i) {
    for (Eigen::Index j = 0; j < z_b.rows(); ++j) {
      const Eigen::VectorXd d = (z_a.row(i) - z_b.row(j)).transpose();
      const double k = std::exp(-0.5 * d.cwiseProduct(w).dot(d));
      const Eigen::VectorXd ua = zdot_a.row(i).transpose().cwiseProduct(w);
      const Eigen::VectorXd ub = zdot_b.row(j).transpose().cwiseProduct(w);
      out(i, j) = k * (ua.dot(zdot_b.row(j).transpose()) - d.dot(ua) * d.dot(ub));
    }
  }
  return out;
}

ad::Var data_nll_core(const ad::Var& a, const ad::Var& r) {
  const ad::Var alpha = ad::solve_spd(a, r);
  return ad::scale(ad::sum(ad::hadamard(r, alpha)) + ad::logdet_spd(a), 0.5);
}

PosteriorVars derivative_posterior_core(const ad::Var& a, const ad::Var& r, const ad::Var& kdot,
                                        const ad::Var& kddot_diag, const ad::Var& mean_dot) {
  const ad::Var alpha = ad::solve_spd(a, r);
  return {mean_dot + ad::matmul(kdot, alpha), kddot_diag - ad::quad_diag_rows_spd(a, kdot)};
}

PosteriorVars state_posterior_core(const ad::Var& a, const ad::Var& r, const ad::Var& kcross, const ad::Var& kdiag,
                                   const ad::Var& mean, bool with_var) {
  const ad::Var alpha = ad::solve_spd(a, r);
  PosteriorVars out{mean + ad::matmul(kcross, alpha), {}};
  if (with_var) out.var = kdiag - ad::quad_diag_rows_spd(a, kcross);
  return out;
}

}  // namespace gp

namespace {
std::string feat_name(int k) { return "smoother.feat" + std::to_string(k); }
}  // namespace

Smoother::Smoother(SmootherConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.state_dim < 1) throw std::invalid_argument("smoother needs a positive state dimension");
  if (cfg_.core_widths.empty()) throw std::invalid_argument("smoother core needs at least one layer");
  if (cfg_.rff_features < 0 || cfg_.rff_features % 2 != 0) {
    throw std::invalid_argument("random feature count must be a non-negative even number");
  }
}

MlpSpec Smoother::core_spec() const { return {cfg_.state_dim + 1, cfg_.core_widths, OutputActivation::Sigmoid}; }
MlpSpec Smoother::mean_spec() const { return {cfg_.core_widths.back(), {cfg_.state_dim}, OutputActivation::Identity}; }
MlpSpec Smoother::feature_spec() const {
  return {cfg_.core_widths.back(), {cfg_.feature_dim}, OutputActivation::Identity};
}

void Smoother::add_segments(ParamLayout& layout) const {
  add_mlp_segments(layout, "smoother.core", core_spec(), ParamGroup::SmootherNet);
  add_mlp_segments(layout, "smoother.mean", mean_spec(), ParamGroup::SmootherNet);
  for (int k = 0; k < cfg_.state_dim; ++k) add_mlp_segments(layout, feat_name(k), feature_spec(), ParamGroup::SmootherNet);
  if (!uses_rff()) layout.add("smoother.log_ell", cfg_.state_dim, cfg_.feature_dim, ParamGroup::SmootherHyper);
  layout.add("smoother.log_noise", cfg_.state_dim, 1, ParamGroup::SmootherHyper);
}

void Smoother::init(ParamVector& p, Rng& rng, const Eigen::VectorXd& noise_std) const {
  if (noise_std.size() != cfg_.state_dim || (noise_std.array() <= 0).any()) {
    throw std::invalid_argument("initial noise std must be positive per dimension");
  }
  init_mlp(p, "smoother.core", core_spec(), rng);
  init_mlp(p, "smoother.mean", mean_spec(), rng);
  for (int k = 0; k < cfg_.state_dim; ++k) init_mlp(p, feat_name(k), feature_spec(), rng);
  if (!uses_rff()) p.view("smoother.log_ell").setZero();
  p.view("smoother.log_noise") = noise_std.array().log().matrix();
}

void Smoother::sample_frequencies(std::uint64_t seed) {
  freqs_.clear();
  if (!uses_rff()) return;
  const Eigen::RowVectorXd ones = Eigen::RowVectorXd::Ones(cfg_.feature_dim);
  for (int k = 0; k < cfg_.state_dim; ++k) {
    freqs_.push_back(rff::sample_fourier_features(ones, cfg_.rff_features, derive_seed(seed, 0xFEA7u + k)));
  }
}

SmootherFeatures Smoother::features(const ad::Var& params, const ParamLayout& layout, const Eigen::MatrixXd& points,
                                    bool with_dot) const {
  if (points.cols() != cfg_.state_dim + 1) throw ShapeError("smoother points must have K + 1 columns");
  ad::Tape& t = *params.tape();
  const ad::Var in = t.constant(points);
  SmootherFeatures f;
  ad::Var h, hd;
  if (with_dot) {
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(points.rows(), points.cols());
    e.col(cfg_.state_dim).setOnes();
    Tangent tc = mlp_forward_tangent(params, layout, "smoother.core", core_spec(), in, t.constant(std::move(e)));
    h = tc.value;
    hd = tc.dot;
  } else {
    h = mlp_forward(params, layout, "smoother.core", core_spec(), in);
  }
  // Heads are single affine layers, so their tangent is the linear part alone.
  auto head = [&](const std::string& prefix, ad::Var& value, ad::Var* dot) {
    const ad::Var w = segment(params, layout, prefix + ".W0");
    value = ad::matmul(h, w) + segment(params, layout, prefix + ".b0");
    if (dot) *dot = ad::matmul(hd, w);
  };
  head("smoother.mean", f.mean, with_dot ? &f.mean_dot : nullptr);
  f.z.resize(static_cast<std::size_t>(cfg_.state_dim));
  if (with_dot) f.z_dot.resize(static_cast<std::size_t>(cfg_.state_dim));
  for (int k = 0; k < cfg_.state_dim; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    head(feat_name(k), f.z[ks], with_dot ? &f.z_dot[ks] : nullptr);
  }
  return f;
}

ad::Var Smoother::inv_sq_ell(const ad::Var& params, const ParamLayout& layout, int k) const {
  if (uses_rff()) return params.tape()->constant(Eigen::MatrixXd::Ones(1, cfg_.feature_dim));
  const Segment& s = layout.at("smoother.log_ell");
  // row k of a column-major K x D block
  std::vector<ad::Var> parts;
  for (int d = 0; d < cfg_.feature_dim; ++d) {
    parts.push_back(ad::reshape_segment(params, s.offset + d * cfg_.state_dim + k, 1, 1));
  }
  return ad::exp(ad::scale(ad::hcat(parts), -2.0));
}

ad::Var Smoother::noise_var(const ad::Var& params, const ParamLayout& layout, int k) const {
  const Segment& s = layout.at("smoother.log_noise");
  return ad::add_scalar(ad::exp(ad::scale(ad::reshape_segment(params, s.offset + k, 1, 1), 2.0)), kGramJitter);
}

SmootherGp::SmootherGp(const Smoother& sm, const ad::Var& params, const ParamLayout& layout, const ObservationSet& obs)
    : sm_(sm), params_(params), layout_(layout) {
  const int kdim = sm.state_dim();
  if (obs.points.rows() == 0 || obs.y.rows() != obs.points.rows() || obs.y.cols() != kdim) {
    throw ShapeError("observation set shapes are inconsistent");
  }
  if (sm.uses_rff() && static_cast<int>(sm.frequencies().size()) != kdim) {
    throw std::invalid_argument("random Fourier frequencies have not been sampled");
  }
  ad::Tape& t = *params.tape();
  obs_features_ = sm.features(params, layout, obs.points, false);
  const ad::Var y = t.constant(obs.y);
  for (int k = 0; k < kdim; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    residual_.push_back(ad::column(y, k) - ad::column(obs_features_.mean, k));
    noise_var_.push_back(sm.noise_var(params, layout, k));
    inv_sq_ell_.push_back(sm.inv_sq_ell(params, layout, k));
    if (sm.uses_rff()) {
      phi_obs_.push_back(rff::feature_matrix(sm.frequencies()[ks], obs_features_.z[ks]));
      system_.push_back(rff::feature_system(phi_obs_.back(), noise_var_.back()));
    } else {
      const ad::Var& z = obs_features_.z[ks];
      system_.push_back(ad::add_diag(ad::rbf_kernel(z, z, inv_sq_ell_.back()), noise_var_.back()));
    }
  }
}

ad::Var SmootherGp::data_nll(int k) const {
  const auto ks = static_cast<std::size_t>(k);
  if (sm_.uses_rff()) return rff::data_nll_core(system_[ks], phi_obs_[ks], noise_var_[ks], residual_[ks]);
  return gp::data_nll_core(system_[ks], residual_[ks]);
}

ad::Var SmootherGp::data_nll() const {
  ad::Var total = data_nll(0);
  for (int k = 1; k < sm_.state_dim(); ++k) total = total + data_nll(k);
  return total;
}

SmootherGp::SupportPosterior SmootherGp::at_support(const Eigen::MatrixXd& support_points) const {
  const SmootherFeatures f = sm_.features(params_, layout_, support_points, true);
  SupportPosterior out;
  std::vector<ad::Var> means;
  for (int k = 0; k < sm_.state_dim(); ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const ad::Var mean_dot = ad::column(f.mean_dot, k);
    const ad::Var mean = ad::column(f.mean, k);
    if (sm_.uses_rff()) {
      const FourierFeatureSpec& spec = sm_.frequencies()[ks];
      const ad::Var phi_s = rff::feature_matrix(spec, f.z[ks]);
      const ad::Var phi_dot = rff::feature_matrix_dot(spec, f.z[ks], f.z_dot[ks]);
      out.derivative.push_back(rff::derivative_posterior_core(system_[ks], phi_obs_[ks], phi_dot, noise_var_[ks],
                                                              residual_[ks], mean_dot));
      means.push_back(rff::state_posterior_core(system_[ks], phi_obs_[ks], phi_s, noise_var_[ks], residual_[ks], mean,
                                                false)
                          .mean);
    } else {
      const ad::Var kc = ad::rbf_kernel(f.z[ks], obs_features_.z[ks], inv_sq_ell_[ks]);
      const ad::Var kdot = gp::kernel_dt(f.z[ks], f.z_dot[ks], obs_features_.z[ks], inv_sq_ell_[ks], kc);
      const ad::Var kddot = gp::kernel_ddt_diag(f.z_dot[ks], inv_sq_ell_[ks]);
      out.derivative.push_back(gp::derivative_posterior_core(system_[ks], residual_[ks], kdot, kddot, mean_dot));
      means.push_back(gp::state_posterior_core(system_[ks], residual_[ks], kc, {}, mean, false).mean);
    }
  }
  out.state_mean = ad::hcat(means);
  return out;
}

std::vector<PosteriorVars> SmootherGp::state_posterior(const Eigen::MatrixXd& query_points, bool with_var) const {
  const SmootherFeatures f = sm_.features(params_, layout_, query_points, false);
  ad::Tape& t = *params_.tape();
  std::vector<PosteriorVars> out;
  for (int k = 0; k < sm_.state_dim(); ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const ad::Var mean = ad::column(f.mean, k);
    if (sm_.uses_rff()) {
      const ad::Var phi_q = rff::feature_matrix(sm_.frequencies()[ks], f.z[ks]);
      out.push_back(
          rff::state_posterior_core(system_[ks], phi_obs_[ks], phi_q, noise_var_[ks], residual_[ks], mean, with_var));
    } else {
      const ad::Var kc = ad::rbf_kernel(f.z[ks], obs_features_.z[ks], inv_sq_ell_[ks]);
      const ad::Var kdiag = t.constant(Eigen::MatrixXd::Ones(query_points.rows(), 1));
      out.push_back(gp::state_posterior_core(system_[ks], residual_[ks], kc, kdiag, mean, with_var));
    }
  }
  return out;
}

}  // namespace dgm
