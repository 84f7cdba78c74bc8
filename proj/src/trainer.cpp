#include "dgm/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "dgm/errors.hpp"
#include "dgm/rng.hpp"

namespace dgm {

void TrainConfig::check() const {
  if (transition_steps < 0 || training_steps < 0 || finetune_steps < 0) {
    throw std::invalid_argument("phase step counts must be >= 0");
  }
  if (total_steps() < 1) throw std::invalid_argument("training needs at least one step");
  if (!(lr_main > 0) || !(lr_finetune > 0)) throw std::invalid_argument("learning rates must be positive");
  if (wd_s < 0 || wd_d() < 0) throw std::invalid_argument("weight decay must be >= 0");
  if (lambda && *lambda < 0) throw std::invalid_argument("lambda must be >= 0");
  if (!(schedule_power > 0)) throw std::invalid_argument("schedule power must be positive");
}

TrainConfig default_train_config(Preset p) {
  TrainConfig c;
  switch (p) {
    case Preset::LO1:
    case Preset::LO125:
      // Lorenz states span tens of units against a unit-variance kernel.
      c.model.normalize = true;
      break;
    case Preset::DP1:
      c.training_steps = 1000;
      break;
    case Preset::QU1:
      c.training_steps = 2000;
      break;
    case Preset::DP100:
      c.transition_steps = 5000;
      c.training_steps = 4000;
      break;
    case Preset::QU64:
      c.transition_steps = 6000;
      c.training_steps = 3000;
      break;
    default:
      break;
  }
  return c;
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["transition_steps"] = c.transition_steps;
  j["training_steps"] = c.training_steps;
  j["finetune_steps"] = c.finetune_steps;
  j["lr_main"] = c.lr_main;
  j["lr_finetune"] = c.lr_finetune;
  j["wd_s"] = c.wd_s;
  j["wd_d_final"] = c.wd_d_final ? nlohmann::json(*c.wd_d_final) : nlohmann::json(nullptr);
  j["lambda"] = c.lambda ? nlohmann::json(*c.lambda) : nlohmann::json(nullptr);
  j["schedule_power"] = c.schedule_power;
  j["seed"] = c.seed;
  j["decay_mode"] = to_string(c.decay);
  j["divergence"] = to_string(c.divergence);
  j["dynamics"] = to_string(c.model.dynamics);
  j["rff_features"] = c.model.smoother.rff_features;
  j["core_widths"] = c.model.smoother.core_widths;
  j["feature_dim"] = c.model.smoother.feature_dim;
  j["normalize"] = c.model.normalize;
  j["log_every"] = c.log_every;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  static const std::vector<std::string> known = {
      "transition_steps", "training_steps", "finetune_steps", "lr_main",     "lr_finetune", "wd_s",
      "wd_d_final",       "lambda",         "schedule_power", "seed",        "decay_mode",  "divergence",
      "dynamics",         "rff_features",   "core_widths",    "feature_dim", "normalize",   "log_every"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("unknown train config field '" + key + "'");
    }
  }
  c.transition_steps = j.value("transition_steps", c.transition_steps);
  c.training_steps = j.value("training_steps", c.training_steps);
  c.finetune_steps = j.value("finetune_steps", c.finetune_steps);
  c.lr_main = j.value("lr_main", c.lr_main);
  c.lr_finetune = j.value("lr_finetune", c.lr_finetune);
  c.wd_s = j.value("wd_s", c.wd_s);
  if (j.contains("wd_d_final")) {
    c.wd_d_final = j["wd_d_final"].is_null() ? std::nullopt : std::optional<double>(j["wd_d_final"].get<double>());
  }
  if (j.contains("lambda")) {
    c.lambda = j["lambda"].is_null() ? std::nullopt : std::optional<double>(j["lambda"].get<double>());
  }
  c.schedule_power = j.value("schedule_power", c.schedule_power);
  c.seed = j.value("seed", c.seed);
  if (j.contains("decay_mode")) c.decay = decay_mode_from_string(j["decay_mode"].get<std::string>());
  if (j.contains("divergence")) c.divergence = divergence_from_string(j["divergence"].get<std::string>());
  if (j.contains("dynamics")) c.model.dynamics = parse_dynamics(j["dynamics"].get<std::string>());
  c.model.smoother.rff_features = j.value("rff_features", c.model.smoother.rff_features);
  if (j.contains("core_widths")) c.model.smoother.core_widths = j["core_widths"].get<std::vector<int>>();
  c.model.smoother.feature_dim = j.value("feature_dim", c.model.smoother.feature_dim);
  c.model.normalize = j.value("normalize", c.model.normalize);
  c.log_every = j.value("log_every", c.log_every);
  c.check();
  return c;
}

SupportSet choose_supporting_points(const Dataset& d) {
  if (d.trajectories.empty()) throw std::invalid_argument("dataset is empty");
  SupportSet s;
  if (d.trajectories.size() == 1) {
    s.source = SupportSet::Source::ObservationTimes;
    const Trajectory& tr = d.trajectories[0];
    for (Eigen::Index i = 0; i < tr.times.size(); ++i) s.entries.push_back({tr.times[i], tr.x0});
    return s;
  }
  s.source = SupportSet::Source::Equidistant30;
  for (const auto& tr : d.trajectories) {
    const Eigen::VectorXd ts = linspace(tr.times.minCoeff(), tr.times.maxCoeff(), 30);
    for (Eigen::Index i = 0; i < ts.size(); ++i) s.entries.push_back({ts[i], tr.x0});
  }
  return s;
}

double default_lambda(const Dataset& d, const SupportSet& s) {
  if (s.size() == 0) throw std::invalid_argument("support set is empty");
  return static_cast<double>(d.observation_count()) / static_cast<double>(s.size());
}

ScheduleValues schedule(const TrainConfig& c, double lambda_final, int step) {
  if (step < 0 || step > c.total_steps()) throw std::out_of_range("schedule step out of range");
  ScheduleValues v;
  double ramp = 1.0;
  if (step < c.transition_steps) {
    ramp = std::pow(static_cast<double>(step) / static_cast<double>(c.transition_steps), c.schedule_power);
  }
  v.lambda = lambda_final * ramp;
  v.wd_d = c.wd_d() * ramp;
  v.lr = step >= c.transition_steps + c.training_steps ? c.lr_finetune : c.lr_main;
  return v;
}

void adam_step(OptimizerState& st, Eigen::VectorXd& params, const Eigen::VectorXd& grads, double lr,
               const Eigen::VectorXd& wd_map) {
  if (grads.size() != params.size() || st.m.size() != params.size() || wd_map.size() != params.size()) {
    throw ShapeError("adam_step: shape mismatch");
  }
  ++st.step;
  st.m = kAdamBeta1 * st.m + (1.0 - kAdamBeta1) * grads;
  st.v = kAdamBeta2 * st.v + (1.0 - kAdamBeta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(st.step));
  const Eigen::ArrayXd mhat = st.m.array() / c1;
  const Eigen::ArrayXd vhat = st.v.array() / c2;
  params.array() -= lr * mhat / (vhat.sqrt() + kAdamEps) + lr * wd_map.array() * params.array();
}

TrainResult train(const Dataset& d, const TrainConfig& c) {
  c.check();
  using Clock = std::chrono::steady_clock;
  const int k = d.state_dim();
  TrainResult r;
  ModelConfig mc = c.model;
  if (mc.dynamics.mode == DynamicsMode::Parametric && mc.dynamics.system.state_dim == 0) mc.dynamics.system = d.spec.system;
  r.model = Model(k, mc, Model::fit_normalizer(d, mc), derive_seed(c.seed, 0xFF7));
  r.params = r.model.init_params(d, c.seed);
  r.support = choose_supporting_points(d);
  r.lambda_final = c.lambda.value_or(default_lambda(d, r.support));

  const ObservationSet obs = r.model.observations(d);
  const Eigen::MatrixXd support = r.model.support_points(r.support);
  const ParamLayout& layout = r.model.layout();
  const Eigen::VectorXd mask_s = layout.mask(ParamGroup::SmootherNet);
  const Eigen::VectorXd mask_d = layout.mask(ParamGroup::DynamicsNet);
  OptimizerState opt(layout.size());
  const Eigen::VectorXd no_decay = Eigen::VectorXd::Zero(layout.size());

  const int total = c.total_steps();
  for (int step = 0; step < total; ++step) {
    const auto t0 = Clock::now();
    const ScheduleValues sv = schedule(c, r.lambda_final, step);
    const LossWeights w{sv.lambda, c.wd_s, sv.wd_d, c.decay, c.divergence};

    ad::Tape tape;
    const ad::Var p = tape.variable(r.params.values);
    const LossEval e = total_loss(r.model, p, obs, support, w);
    const double value = e.objective.scalar();
    auto fail = [&](const std::string& what) {
      const LossBreakdown& b = e.breakdown;
      throw NonFiniteError(what + " at step " + std::to_string(step) + " (data " + std::to_string(b.data_term) +
                           ", wasserstein " + std::to_string(b.wasserstein_term) + ", lambda " +
                           std::to_string(b.lambda_effective) + ")");
    };
    if (!std::isfinite(value)) fail("non-finite objective");
    tape.backward(e.objective);
    const Eigen::VectorXd g = tape.grad(p);
    if (!g.allFinite()) fail("non-finite gradient");

    const Eigen::VectorXd wd_map = c.decay == DecayMode::Decoupled ? Eigen::VectorXd(c.wd_s * mask_s + sv.wd_d * mask_d)
                                                                   : no_decay;
    adam_step(opt, r.params.values, g, sv.lr, wd_map);

    r.history.loss.push_back(e.breakdown);
    r.history.lr.push_back(sv.lr);
    r.history.lambda.push_back(sv.lambda);
    r.history.wd_d.push_back(sv.wd_d);
    const int phase = step < c.transition_steps ? 0 : step < c.transition_steps + c.training_steps ? 1 : 2;
    r.history.phase_seconds[static_cast<std::size_t>(phase)] +=
        std::chrono::duration<double>(Clock::now() - t0).count();
    if (c.log_every > 0 && (step % c.log_every == 0 || step + 1 == total)) {
      std::cerr << "step " << step << " total " << e.breakdown.total << " data " << e.breakdown.data_term << " w2 "
                << e.breakdown.wasserstein_term << " lambda " << sv.lambda << " lr " << sv.lr << '\n';
    }
  }
  return r;
}

nlohmann::json history_to_json(const TrainHistory& h) {
  nlohmann::json j;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < h.loss.size(); ++i) {
    const LossBreakdown& b = h.loss[i];
    rows.push_back({{"step", i},
                    {"total", b.total},
                    {"data_term", b.data_term},
                    {"wasserstein_term", b.wasserstein_term},
                    {"weight_decay_term", b.weight_decay_term},
                    {"lambda_effective", b.lambda_effective},
                    {"lr", h.lr[i]},
                    {"wd_d_effective", h.wd_d[i]}});
  }
  j["steps"] = rows;
  j["phase_seconds"] = {{"transition", h.phase_seconds[0]},
                        {"training", h.phase_seconds[1]},
                        {"finetune", h.phase_seconds[2]}};
  return j;
}

}  // namespace dgm
