#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dgm/checkpoint.hpp"

namespace dgm {

enum class EvalMode { Train, Generalization };
const char* to_string(EvalMode m);
EvalMode eval_mode_from_string(const std::string& s);

inline constexpr int kEvalGridSize = 100;
inline constexpr int kGeneralizationTrajectories = 10;

struct EvalReport {
  double mean_ll = 0.0;
  std::vector<double> per_trajectory;  ///< mean over times and dimensions
  std::vector<double> per_dimension;   ///< mean over times and trajectories
  int grid_size = kEvalGridSize;
  EvalMode mode = EvalMode::Train;
};

/// log N(x | mu, sd^2).
double gaussian_log_density(double x, double mu, double sd);

/// Mean of pointwise Gaussian log densities of the truth under the predictions.
/// truth[j] and the prediction j share shape (times x K).
EvalReport score_predictions(const std::vector<Eigen::MatrixXd>& truth, const std::vector<StatePrediction>& pred);

/// Integrates the true system from each x0 on kEvalGridSize equidistant times over [0, horizon]
/// and scores the checkpoint's latent state posterior against it.
EvalReport ground_truth_ll(const Checkpoint& c, const SystemSpec& system, const std::vector<Eigen::VectorXd>& x0s,
                           double horizon, EvalMode mode = EvalMode::Generalization);

/// Train mode scores the training initial conditions; generalization mode
/// draws kGeneralizationTrajectories fresh ones from the preset's test box
/// (for custom data: the bounding box of the training initial conditions).
EvalReport evaluate(const Checkpoint& c, EvalMode mode, std::uint64_t seed);

std::vector<Eigen::VectorXd> generalization_initial_conditions(const Dataset& d, int count, std::uint64_t seed);

nlohmann::json report_to_json(const EvalReport& r);
std::string summary_line(const EvalReport& r);

}  // namespace dgm
