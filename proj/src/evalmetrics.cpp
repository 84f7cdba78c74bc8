#include "dgm/evalmetrics.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "dgm/errors.hpp"
#include "dgm/integrate.hpp"
#include "dgm/rng.hpp"

namespace dgm {

const char* to_string(EvalMode m) { return m == EvalMode::Train ? "train" : "generalization"; }

EvalMode eval_mode_from_string(const std::string& s) {
  if (s == "train") return EvalMode::Train;
  if (s == "generalization") return EvalMode::Generalization;
  throw std::invalid_argument("unknown eval mode '" + s + "'");
}

double gaussian_log_density(double x, double mu, double sd) {
  const double z = (x - mu) / sd;
  return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(sd) - 0.5 * z * z;
}

EvalReport score_predictions(const std::vector<Eigen::MatrixXd>& truth, const std::vector<StatePrediction>& pred) {
  if (truth.empty() || truth.size() != pred.size()) throw ShapeError("truth and predictions differ in trajectory count");
  const auto k = truth[0].cols();
  EvalReport r;
  r.grid_size = static_cast<int>(truth[0].rows());
  r.per_dimension.assign(static_cast<std::size_t>(k), 0.0);
  double total = 0.0;
  long count = 0;
  for (std::size_t j = 0; j < truth.size(); ++j) {
    const Eigen::MatrixXd& x = truth[j];
    if (x.rows() != pred[j].mean.rows() || x.cols() != k || pred[j].mean.cols() != k || pred[j].std.cols() != k ||
        pred[j].std.rows() != x.rows()) {
      throw ShapeError("prediction shape differs from the truth");
    }
    double traj = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index c = 0; c < k; ++c) {
        const double ll = gaussian_log_density(x(i, c), pred[j].mean(i, c), pred[j].std(i, c));
        traj += ll;
        r.per_dimension[static_cast<std::size_t>(c)] += ll;
      }
    }
    total += traj;
    count += static_cast<long>(x.size());
    r.per_trajectory.push_back(traj / static_cast<double>(x.size()));
  }
  const double per_dim_count = static_cast<double>(count) / static_cast<double>(k);
  for (double& v : r.per_dimension) v /= per_dim_count;
  r.mean_ll = total / static_cast<double>(count);
  return r;
}

EvalReport ground_truth_ll(const Checkpoint& c, const SystemSpec& system, const std::vector<Eigen::VectorXd>& x0s,
                           double horizon, EvalMode mode) {
  if (system.state_dim != c.model.state_dim()) throw ShapeError("system and checkpoint dimensions differ");
  if (x0s.empty()) throw std::invalid_argument("no initial conditions to evaluate");
  const Eigen::VectorXd times = linspace(0.0, horizon, kEvalGridSize);
  std::vector<Eigen::MatrixXd> truth;
  for (const auto& x0 : x0s) truth.push_back(integrate(system, x0, times));
  EvalReport r = score_predictions(truth, predict_states(c.model, c.params, c.data, x0s, times));
  r.mode = mode;
  return r;
}

std::vector<Eigen::VectorXd> generalization_initial_conditions(const Dataset& d, int count, std::uint64_t seed) {
  if (d.spec.preset != Preset::Custom) return sample_test_initial_conditions(d.spec.preset, count, seed);
  const int k = d.state_dim();
  Eigen::VectorXd lo = d.trajectories[0].x0, hi = d.trajectories[0].x0;
  for (const auto& tr : d.trajectories) {
    lo = lo.cwiseMin(tr.x0);
    hi = hi.cwiseMax(tr.x0);
  }
  Rng rng(derive_seed(seed, 0xB0C5));
  std::vector<Eigen::VectorXd> out;
  for (int n = 0; n < count; ++n) {
    Eigen::VectorXd x(k);
    for (int i = 0; i < k; ++i) x[i] = rng.uniform(lo[i], hi[i]);
    out.push_back(x);
  }
  return out;
}

EvalReport evaluate(const Checkpoint& c, EvalMode mode, std::uint64_t seed) {
  std::vector<Eigen::VectorXd> x0s;
  if (mode == EvalMode::Train) {
    for (const auto& tr : c.data.trajectories) x0s.push_back(tr.x0);
  } else {
    x0s = generalization_initial_conditions(c.data, kGeneralizationTrajectories, seed);
  }
  return ground_truth_ll(c, c.data.spec.system, x0s, c.data.spec.horizon, mode);
}

nlohmann::json report_to_json(const EvalReport& r) {
  return {{"mean_ll", r.mean_ll},
          {"per_trajectory", r.per_trajectory},
          {"per_dimension", r.per_dimension},
          {"grid_size", r.grid_size},
          {"mode", to_string(r.mode)}};
}

std::string summary_line(const EvalReport& r) {
  std::ostringstream os;
  os.precision(6);
  os << "mode=" << to_string(r.mode) << " trajectories=" << r.per_trajectory.size() << " grid=" << r.grid_size
     << " mean_ll=" << r.mean_ll;
  return os.str();
}

}  // namespace dgm
