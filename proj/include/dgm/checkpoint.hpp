#pragma once

#include <string>

#include <json.hpp>

#include "dgm/dataset.hpp"
#include "dgm/model.hpp"
#include "dgm/trainer.hpp"

namespace dgm {

/// Everything needed to predict without retraining: the training data the
/// smoother conditions on, the model structure, and the learned parameters.
struct Checkpoint {
  Dataset data;
  TrainConfig config;
  Model model;
  ParamVector params;
  double lambda_final = 0.0;
  nlohmann::json final_metrics = nlohmann::json::object();
};

Checkpoint make_checkpoint(const Dataset& d, const TrainConfig& c, const TrainResult& r);

/// {version: "dgm-ckpt-v1", spec, layout, params, hyper, config, final_metrics, dataset}.
nlohmann::json checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dgm
