#pragma once

#include <string>
#include <vector>

#include "dgm/autodiff.hpp"
#include "dgm/nets.hpp"
#include "dgm/normalizer.hpp"
#include "dgm/params.hpp"
#include "dgm/systems.hpp"

namespace dgm {

enum class DynamicsMode { Neural, Parametric, FactorizedLinear };

struct DynamicsConfig {
  DynamicsMode mode = DynamicsMode::Neural;
  /// Inner widths a_1..a_{J-1} of the factor chain B_1 (K x a_1) ... B_J (a_{J-1} x K).
  std::vector<int> factor_dims;
  /// Known vector-field form (parametric mode).
  SystemSpec system;
};

/// "neural", "parametric", or "factorized:a1,a2,...".
DynamicsConfig parse_dynamics(const std::string& s);
std::string to_string(const DynamicsConfig& c);

/// Per-dimension, per-support-point scalar Gaussians; both matrices are m x K.
struct GaussianMarginalSet {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd std;
};

/// Dynamics model x -> N(f(x), diag Sigma_D(x)) in normalized coordinates.
///
/// Segments:
///   neural:            dynamics.net  (K -> 20 -> 20 -> 2K), first K outputs mean,
///                      last K through log(1 + e^x)^2 as variances
///   parametric:        dynamics.theta (P x 1), dynamics.var (K -> 10 -> 10 -> K)
///   factorized_linear: dynamics.B<j>, dynamics.var (K -> 20 -> 20 -> K)
class Dynamics {
 public:
  Dynamics() = default;
  Dynamics(int state_dim, DynamicsConfig cfg, Normalizer norm);

  int state_dim() const { return k_; }
  const DynamicsConfig& config() const { return cfg_; }
  const Normalizer& normalizer() const { return norm_; }

  void add_segments(ParamLayout& layout) const;
  /// Glorot networks; parametric theta starts at the nominal values times
  /// independent Uniform[0.5, 1.5] factors.
  void init(ParamVector& p, Rng& rng) const;

  struct Output {
    ad::Var mean;  ///< m x K
    ad::Var var;   ///< m x K, strictly positive
  };
  /// x: m x K states.
  Output forward(const ad::Var& params, const ParamLayout& layout, const ad::Var& x) const;
  GaussianMarginalSet marginals(const ParamVector& p, const Eigen::MatrixXd& x) const;

 private:
  MlpSpec net_spec() const;
  MlpSpec var_spec() const;

  int k_ = 0;
  DynamicsConfig cfg_;
  Normalizer norm_;
};

/// Known vector field evaluated row-wise in normalized coordinates,
/// f'(x') = time_scale * f(shift + scale x'; theta) / scale, differentiable in x and theta.
ad::Var parametric_field(const SystemSpec& sys, const Normalizer& norm, const ad::Var& x, const ad::Var& theta);

/// Readout of N(f_k, Sigma_D,kk) at the smoother posterior means: std = sqrt(var).
GaussianMarginalSet dynamics_marginals(const Dynamics& dyn, const ParamVector& p, const Eigen::MatrixXd& smoother_means);

}  // namespace dgm

namespace dgm {

/// Points where smoother and dynamics derivative marginals are compared.
struct SupportSet {
  enum class Source { ObservationTimes, Equidistant30 };
  struct Entry {
    double t = 0.0;
    Eigen::VectorXd x0;
  };
  std::vector<Entry> entries;
  Source source = Source::ObservationTimes;

  std::size_t size() const { return entries.size(); }
};

}  // namespace dgm
