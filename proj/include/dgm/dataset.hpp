#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "dgm/systems.hpp"

namespace dgm {

enum class Preset { LV1, LV100, LO1, LO125, DP1, DP100, QU1, QU64, LV25, LIN1, Custom };

/// Lower-case CLI names: "lv1", "lv100", ..., "custom".
const char* to_string(Preset p);
Preset preset_from_string(const std::string& s);

struct DatasetSpec {
  SystemSpec system;
  std::vector<Eigen::VectorXd> initial_conditions;
  std::vector<Eigen::VectorXd> obs_times;  ///< one strictly increasing list per trajectory
  double horizon = 0.0;                    ///< evaluation interval is [0, horizon]
  std::uint64_t seed = 0;
  Preset preset = Preset::Custom;
};

struct Trajectory {
  Eigen::VectorXd x0;
  Eigen::VectorXd times;
  Eigen::MatrixXd observations;  ///< times x K
};

struct Dataset {
  DatasetSpec spec;
  std::vector<Trajectory> trajectories;

  int state_dim() const { return spec.system.state_dim; }
  /// Number of observation rows over all trajectories (|D|).
  Eigen::Index observation_count() const;
};

/// Grid, counts, horizon and noise of a named preset.
DatasetSpec preset_spec(Preset p, std::uint64_t seed);

/// Integrates every trajectory and adds noise keyed by (seed, trajectory, time index, dimension).
Dataset generate_dataset(const DatasetSpec& spec);
Dataset generate_dataset(Preset p, std::uint64_t seed);

/// Uniform draws from the preset's held-out initial-condition box.
std::vector<Eigen::VectorXd> sample_test_initial_conditions(Preset p, int count, std::uint64_t seed);

/// Equidistant grid on [lo, hi] including both ends.
Eigen::VectorXd linspace(double lo, double hi, int n);

nlohmann::json system_to_json(const SystemSpec& s);
SystemSpec system_from_json(const nlohmann::json& j);
nlohmann::json dataset_to_json(const Dataset& d);
Dataset dataset_from_json(const nlohmann::json& j);
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);
/// Row-major nested arrays.
nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

}  // namespace dgm
