#pragma once

#include <Eigen/Dense>

#include "dgm/systems.hpp"

namespace dgm {

/// Production RK4 substep for a system over a horizon: 1e-3 * horizon,
/// refined 10x for the double pendulum and Lorenz.
double default_substep(const SystemSpec& spec, double horizon);

/// Classical RK4 from x(0) = x0. Every interval between consecutive query
/// times is split into ceil(dt / substep) equal steps, so states land exactly
/// on the queries. Query times must be sorted and >= 0.
/// Returns a (query count) x K matrix. substep <= 0 selects default_substep.
Eigen::MatrixXd integrate(const SystemSpec& spec, const Eigen::VectorXd& x0, const Eigen::VectorXd& query_times,
                          double substep = 0.0);

}  // namespace dgm
