#pragma once

#include <cstdint>
#include <vector>

#include "dgm/autodiff.hpp"
#include "dgm/nets.hpp"
#include "dgm/params.hpp"
#include "dgm/rff.hpp"

namespace dgm {

/// Unit-variance diagonal jitter added to every Gram matrix on top of the noise.
inline constexpr double kGramJitter = 1e-8;

/// Posterior mean and diagonal variance over a batch of points (column vectors).
struct PosteriorVars {
  ad::Var mean;
  ad::Var var;
};

namespace gp {

/// K_ij = exp(-1/2 sum_d (a_id - b_jd)^2 / l_d^2).
Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::RowVectorXd& lengthscales);

/// d/dt_a k(z_a(t_a), z_b) for every pair, given the feature velocities dz_a/dt_a.
/// k_ab is the matching Gram block; inv_sq_ell is 1 x D.
ad::Var kernel_dt(const ad::Var& z_a, const ad::Var& zdot_a, const ad::Var& z_b, const ad::Var& inv_sq_ell,
                  const ad::Var& k_ab);
/// Diagonal of d^2/dt_a dt_b k at coinciding points: zdot^T diag(inv_sq_ell) zdot, as a column.
ad::Var kernel_ddt_diag(const ad::Var& zdot, const ad::Var& inv_sq_ell);
/// Full mixed second derivative between two batches (plain values).
Eigen::MatrixXd kernel_ddt(const Eigen::MatrixXd& z_a, const Eigen::MatrixXd& zdot_a, const Eigen::MatrixXd& z_b,
                           const Eigen::MatrixXd& zdot_b, const Eigen::RowVectorXd& inv_sq_ell);

/// 1/2 r^T A^{-1} r + 1/2 log det A, with A = K + sigma^2 I.
ad::Var data_nll_core(const ad::Var& a, const ad::Var& r);
/// mu = mean_dot + kdot A^{-1} r; var = kddot_diag - diag(kdot A^{-1} kdot^T).
PosteriorVars derivative_posterior_core(const ad::Var& a, const ad::Var& r, const ad::Var& kdot,
                                        const ad::Var& kddot_diag, const ad::Var& mean_dot);
/// mu = mean + kcross A^{-1} r; var = kdiag - diag(kcross A^{-1} kcross^T) when with_var.
PosteriorVars state_posterior_core(const ad::Var& a, const ad::Var& r, const ad::Var& kcross, const ad::Var& kdiag,
                                   const ad::Var& mean, bool with_var = true);

}  // namespace gp

struct SmootherConfig {
  int state_dim = 0;
  std::vector<int> core_widths{10, 5};
  int feature_dim = 3;
  /// 0 selects the exact kernel; otherwise the even number of random Fourier features.
  int rff_features = 0;
};

/// Learned mean, features and their time derivatives at a batch of points.
struct SmootherFeatures {
  ad::Var mean;      ///< n x K
  ad::Var mean_dot;  ///< n x K, invalid when not requested
  std::vector<ad::Var> z;      ///< per dimension, n x feature_dim
  std::vector<ad::Var> z_dot;  ///< per dimension, empty when not requested
};

/// The deep-kernel GP smoother: one shared core over [x0; t], a multi-output
/// mean head, and one feature head plus kernel hyperparameters per dimension.
///
/// Segments:
///   smoother.core.*       core MLP, sigmoid on every layer
///   smoother.mean.*       linear core-out -> K
///   smoother.feat<k>.*    linear core-out -> feature_dim
///   smoother.log_ell      K x feature_dim (exact kernel only)
///   smoother.log_noise    K x 1, log observation noise std
class Smoother {
 public:
  Smoother() = default;
  explicit Smoother(SmootherConfig cfg);

  const SmootherConfig& config() const { return cfg_; }
  int state_dim() const { return cfg_.state_dim; }
  bool uses_rff() const { return cfg_.rff_features > 0; }

  MlpSpec core_spec() const;
  MlpSpec mean_spec() const;
  MlpSpec feature_spec() const;

  void add_segments(ParamLayout& layout) const;
  /// Glorot networks, unit lengthscales, noise std = noise_std per dimension.
  void init(ParamVector& p, Rng& rng, const Eigen::VectorXd& noise_std) const;

  /// Draws the fixed per-dimension Fourier frequencies (rff mode only).
  void sample_frequencies(std::uint64_t seed);
  const std::vector<FourierFeatureSpec>& frequencies() const { return freqs_; }
  void set_frequencies(std::vector<FourierFeatureSpec> f) { freqs_ = std::move(f); }

  /// points: n x (K + 1) rows [x0, t].
  SmootherFeatures features(const ad::Var& params, const ParamLayout& layout, const Eigen::MatrixXd& points,
                            bool with_dot) const;

  /// 1 x feature_dim inverse squared lengthscales of dimension k.
  ad::Var inv_sq_ell(const ad::Var& params, const ParamLayout& layout, int k) const;
  /// 1 x 1 noise variance (plus jitter) of dimension k.
  ad::Var noise_var(const ad::Var& params, const ParamLayout& layout, int k) const;

 private:
  SmootherConfig cfg_;
  std::vector<FourierFeatureSpec> freqs_;
};

/// Observations in the smoother's coordinates.
struct ObservationSet {
  Eigen::MatrixXd points;  ///< N x (K + 1)
  Eigen::MatrixXd y;       ///< N x K
};

/// Smoother conditioned on an observation set for one parameter node. Builds
/// the per-dimension Gram systems once and answers data-fit, derivative and
/// state queries against them.
class SmootherGp {
 public:
  SmootherGp(const Smoother& sm, const ad::Var& params, const ParamLayout& layout, const ObservationSet& obs);

  /// Sum over dimensions of the negative marginal log likelihood (constants dropped).
  ad::Var data_nll() const;
  ad::Var data_nll(int k) const;

  struct SupportPosterior {
    std::vector<PosteriorVars> derivative;  ///< per dimension, m x 1 mean and variance
    ad::Var state_mean;                     ///< m x K posterior state mean
  };
  SupportPosterior at_support(const Eigen::MatrixXd& support_points) const;

  /// Per-dimension latent state posterior at query points.
  std::vector<PosteriorVars> state_posterior(const Eigen::MatrixXd& query_points, bool with_var = true) const;

 private:
  const Smoother& sm_;
  ad::Var params_;
  const ParamLayout& layout_;
  SmootherFeatures obs_features_;
  std::vector<ad::Var> residual_;   ///< N x 1 per dimension
  std::vector<ad::Var> system_;     ///< exact: K + s2 I (N x N); rff: Phi Phi^T + s2 I (F x F)
  std::vector<ad::Var> phi_obs_;    ///< rff only, F x N
  std::vector<ad::Var> noise_var_;  ///< 1 x 1
  std::vector<ad::Var> inv_sq_ell_;
};

}  // namespace dgm
