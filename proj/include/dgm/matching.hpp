#pragma once

#include <string>

#include "dgm/autodiff.hpp"
#include "dgm/dynamics.hpp"
#include "dgm/smoother.hpp"

namespace dgm {

class Model;
struct ParamVector;

/// Squared 2-Wasserstein distance between N(mu_a, s_a^2) and N(mu_b, s_b^2).
double w2_gaussian_1d(double mu_a, double s_a, double mu_b, double s_b);

/// Sum over dimensions and support points of W2^2(p_S, p_D). Both sets must be indexed identically.
double dynamics_loss(const GaussianMarginalSet& p_s, const GaussianMarginalSet& p_d);

/// W2 is the default; the KL variants exist for ablations only.
enum class Divergence { W2, KLForward, KLBackward, KLSymmetric };
const char* to_string(Divergence d);
Divergence divergence_from_string(const std::string& s);

/// Summed divergence between elementwise Gaussians given as matching matrices of means and stds.
/// KLForward is KL(p_S || p_D).
ad::Var marginal_divergence(const ad::Var& mu_s, const ad::Var& sd_s, const ad::Var& mu_d, const ad::Var& sd_d,
                            Divergence div = Divergence::W2);

enum class DecayMode { Decoupled, L2 };
const char* to_string(DecayMode d);
DecayMode decay_mode_from_string(const std::string& s);

struct LossBreakdown {
  double total = 0.0;
  double data_term = 0.0;
  double wasserstein_term = 0.0;
  double weight_decay_term = 0.0;
  double lambda_effective = 0.0;
};

struct LossWeights {
  double lambda = 0.0;
  double wd_s = 0.0;
  double wd_d = 0.0;
  /// Decoupled: the penalty is reported but applied by the optimizer, not differentiated.
  DecayMode decay = DecayMode::Decoupled;
  Divergence divergence = Divergence::W2;
};

struct LossEval {
  ad::Var objective;  ///< node to differentiate
  LossBreakdown breakdown;
};

/// Lower bound on dynamics and smoother standard deviations inside the matching term.
inline constexpr double kStdFloor = 1e-12;

/// wd_s |phi_net|^2 + wd_d |psi_net|^2 (kernel hyperparameters and known-form theta excluded).
double weight_decay_penalty(const ParamVector& p, double wd_s, double wd_d);

/// L_data + lambda * sum W2^2 + weight decay. The matching term is skipped when lambda == 0.
LossEval total_loss(const Model& m, const ad::Var& params, const ObservationSet& obs,
                    const Eigen::MatrixXd& support_points, const LossWeights& w);

}  // namespace dgm
