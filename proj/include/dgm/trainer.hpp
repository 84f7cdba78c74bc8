#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>

#include "dgm/dataset.hpp"
#include "dgm/matching.hpp"
#include "dgm/model.hpp"

namespace dgm {

struct TrainConfig {
  int transition_steps = 1000;
  int training_steps = 0;
  int finetune_steps = 1000;
  double lr_main = 0.05;
  double lr_finetune = 0.01;
  double wd_s = 0.1;
  /// Final dynamics weight decay; defaults to wd_s.
  std::optional<double> wd_d_final;
  /// Final lambda; defaults to |D| / |support|.
  std::optional<double> lambda;
  double schedule_power = 0.8;
  std::uint64_t seed = 0;
  DecayMode decay = DecayMode::Decoupled;
  Divergence divergence = Divergence::W2;
  ModelConfig model;
  /// Print a progress line to stderr every n steps (0 disables).
  int log_every = 0;

  int total_steps() const { return transition_steps + training_steps + finetune_steps; }
  double wd_d() const { return wd_d_final.value_or(wd_s); }
  void check() const;
};

/// Phase lengths copied per preset (transition / training / fine-tuning); the
/// Lorenz presets also standardize the network inputs.
TrainConfig default_train_config(Preset p);

nlohmann::json train_config_to_json(const TrainConfig& c);
/// Missing fields keep their defaults from `base`.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Single trajectory: the observation times. Otherwise 30 equidistant times
/// over each trajectory's observed span, paired with its initial condition.
SupportSet choose_supporting_points(const Dataset& d);

/// |D| / |support| with |D| the number of observation rows.
double default_lambda(const Dataset& d, const SupportSet& s);

struct ScheduleValues {
  double lr = 0.0;
  double lambda = 0.0;
  double wd_d = 0.0;
};
/// Transition: lambda and wd_D ramp as final * (step / transition)^power; then constant.
/// Fine-tuning (the last finetune_steps steps) uses lr_finetune.
ScheduleValues schedule(const TrainConfig& c, double lambda_final, int step);

struct OptimizerState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;

  explicit OptimizerState(Eigen::Index n = 0) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// Adam with bias correction, then decoupled decay p -= lr * wd_map .* p.
void adam_step(OptimizerState& st, Eigen::VectorXd& params, const Eigen::VectorXd& grads, double lr,
               const Eigen::VectorXd& wd_map);

struct TrainHistory {
  std::vector<LossBreakdown> loss;
  std::vector<double> lr;
  std::vector<double> lambda;
  std::vector<double> wd_d;
  std::array<double, 3> phase_seconds{0.0, 0.0, 0.0};
};

struct TrainResult {
  Model model;
  ParamVector params;
  SupportSet support;
  double lambda_final = 0.0;
  TrainHistory history;
};

/// Full-batch training. Deterministic given (dataset, config).
/// Throws NonFiniteError naming the step when the objective or its gradient stops being finite.
TrainResult train(const Dataset& d, const TrainConfig& c);

nlohmann::json history_to_json(const TrainHistory& h);

}  // namespace dgm
