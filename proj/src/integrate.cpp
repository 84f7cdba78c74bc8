#include "dgm/integrate.hpp"

#include <cmath>
#include <stdexcept>

#include "dgm/errors.hpp"

namespace dgm {

double default_substep(const SystemSpec& spec, double horizon) {
  double h = 1e-3 * horizon;
  if (spec.kind == SystemKind::DoublePendulum || spec.kind == SystemKind::Lorenz) h *= 0.1;
  return h;
}

Eigen::MatrixXd integrate(const SystemSpec& spec, const Eigen::VectorXd& x0, const Eigen::VectorXd& query_times,
                          double substep) {
  if (x0.size() != spec.state_dim) throw ShapeError("initial condition has wrong dimension");
  const Eigen::Index n = query_times.size();
  Eigen::MatrixXd out(n, spec.state_dim);
  if (n == 0) return out;
  if (!query_times.allFinite() || query_times[0] < 0.0) throw std::invalid_argument("query times must be finite and >= 0");
  for (Eigen::Index i = 1; i < n; ++i) {
    if (query_times[i] < query_times[i - 1]) throw std::invalid_argument("query times must be sorted");
  }
  if (substep <= 0.0) substep = default_substep(spec, query_times[n - 1] > 0 ? query_times[n - 1] : 1.0);

  Eigen::VectorXd x = x0;
  double t = 0.0;
  for (Eigen::Index q = 0; q < n; ++q) {
    const double span = query_times[q] - t;
    if (span > 0.0) {
      const auto steps = static_cast<long>(std::ceil(span / substep - 1e-9));
      const double h = span / static_cast<double>(steps);
      for (long s = 0; s < steps; ++s) {
        const Eigen::VectorXd k1 = eval_vector_field(spec, x);
        const Eigen::VectorXd k2 = eval_vector_field(spec, x + 0.5 * h * k1);
        const Eigen::VectorXd k3 = eval_vector_field(spec, x + 0.5 * h * k2);
        const Eigen::VectorXd k4 = eval_vector_field(spec, x + h * k3);
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!x.allFinite()) {
          const double when = t + h * static_cast<double>(s + 1);
          throw DivergenceError("integration diverged at t=" + std::to_string(when), when);
        }
      }
      t = query_times[q];
    }
    out.row(q) = x.transpose();
  }
  return out;
}

}  // namespace dgm
