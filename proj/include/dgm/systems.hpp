#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dgm {

enum class SystemKind { LotkaVolterra, Lorenz, DoublePendulum, Quadrocopter, RandomLinear };

const char* to_string(SystemKind k);
SystemKind system_kind_from_string(const std::string& s);

/// A ground-truth ODE x' = f*(x) with its observation noise.
struct SystemSpec {
  SystemKind kind = SystemKind::LotkaVolterra;
  std::map<std::string, double> params;
  Eigen::VectorXd noise_var;  ///< per-dimension observation noise variances
  int state_dim = 0;
  Eigen::MatrixXd linear_a;   ///< RandomLinear only
  /// Lorenz only: damp z with tau*y (z' = xy - tau*y) instead of the standard tau*z.
  bool lorenz_damp_y = false;
};

/// Default parameters and noise for each named benchmark system.
SystemSpec make_system(SystemKind kind);

/// x' = A x with one stable eigenvalue in [-0.5, -0.1] and a skew-symmetric
/// 2x2 block normalized to spectral radius pi/2. Noise variance 0.1^2.
SystemSpec make_random_linear_system(std::uint64_t seed);

/// x' = A x with a caller-supplied matrix.
SystemSpec make_linear_system(const Eigen::MatrixXd& a, double noise_var = 0.01);

/// Throws std::invalid_argument when parameters are missing or noise is not positive.
void validate(const SystemSpec& spec);

Eigen::VectorXd eval_vector_field(const SystemSpec& spec, const Eigen::VectorXd& x);

/// Names of the parameters a known-form dynamics model may fit, in order.
std::vector<std::string> theta_names(const SystemSpec& spec);
/// Current values of those parameters.
Eigen::VectorXd theta_values(const SystemSpec& spec);

struct FieldJacobian {
  Eigen::VectorXd value;     ///< f(x; theta), K
  Eigen::MatrixXd d_state;   ///< K x K
  Eigen::MatrixXd d_theta;   ///< K x P
};

/// f(x; theta) and its Jacobians, theta ordered as theta_names(spec).
FieldJacobian eval_field_with_jacobian(const SystemSpec& spec, const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& theta);

/// Total mechanical energy of the double pendulum in (theta1, theta2, p1, p2) coordinates.
double double_pendulum_energy(const SystemSpec& spec, const Eigen::VectorXd& x);

}  // namespace dgm
