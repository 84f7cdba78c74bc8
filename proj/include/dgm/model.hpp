#pragma once

#include <cstdint>
#include <vector>

#include "dgm/dataset.hpp"
#include "dgm/dynamics.hpp"
#include "dgm/normalizer.hpp"
#include "dgm/params.hpp"
#include "dgm/smoother.hpp"

namespace dgm {

struct ModelConfig {
  SmootherConfig smoother;  ///< state_dim is taken from the data
  DynamicsConfig dynamics;
  /// Standardize states per dimension and scale time to [0, 1] before the networks see them.
  bool normalize = false;
};

/// Smoother + dynamics sharing one flat parameter layout and one coordinate system.
class Model {
 public:
  Model() = default;
  Model(int state_dim, ModelConfig cfg, Normalizer norm, std::uint64_t rff_seed);

  /// Normalizer from the observation statistics of `d` (identity when cfg.normalize is false).
  static Normalizer fit_normalizer(const Dataset& d, const ModelConfig& cfg);

  int state_dim() const { return k_; }
  const ModelConfig& config() const { return cfg_; }
  const Normalizer& normalizer() const { return norm_; }
  const ParamLayout& layout() const { return layout_; }
  const Smoother& smoother() const { return smoother_; }
  Smoother& smoother() { return smoother_; }
  const Dynamics& dynamics() const { return dynamics_; }

  /// Fresh parameters; smoother noise std starts at 0.1 x the per-dimension observation std.
  ParamVector init_params(const Dataset& d, std::uint64_t seed) const;

  ObservationSet observations(const Dataset& d) const;
  Eigen::MatrixXd support_points(const SupportSet& s) const;

 private:
  int k_ = 0;
  ModelConfig cfg_;
  Normalizer norm_;
  Smoother smoother_;
  Dynamics dynamics_;
  ParamLayout layout_;
};

/// Latent state posterior for one trajectory, in original units.
struct StatePrediction {
  Eigen::VectorXd times;
  Eigen::MatrixXd mean;  ///< times x K
  Eigen::MatrixXd std;   ///< times x K
};

/// Conditions the smoother on `d` once and predicts every initial condition at `times`.
/// Variances below -1e-8 are reported on stderr; all negatives are clamped to 0.
std::vector<StatePrediction> predict_states(const Model& m, const ParamVector& p, const Dataset& d,
                                            const std::vector<Eigen::VectorXd>& x0s, const Eigen::VectorXd& times);

}  // namespace dgm
