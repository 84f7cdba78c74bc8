#include "dgm/model.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

#include "dgm/errors.hpp"
#include "dgm/rng.hpp"

namespace dgm {

Model::Model(int state_dim, ModelConfig cfg, Normalizer norm, std::uint64_t rff_seed)
    : k_(state_dim), cfg_(std::move(cfg)), norm_(std::move(norm)) {
  cfg_.smoother.state_dim = k_;
  smoother_ = Smoother(cfg_.smoother);
  smoother_.sample_frequencies(rff_seed);
  dynamics_ = Dynamics(k_, cfg_.dynamics, norm_);
  smoother_.add_segments(layout_);
  dynamics_.add_segments(layout_);
}

Normalizer Model::fit_normalizer(const Dataset& d, const ModelConfig& cfg) {
  const int k = d.state_dim();
  if (!cfg.normalize) return Normalizer::identity(k);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(k), sq = Eigen::VectorXd::Zero(k);
  double t_max = 0.0;
  const auto n = static_cast<double>(d.observation_count());
  for (const auto& tr : d.trajectories) {
    sum += tr.observations.colwise().sum().transpose();
    sq += tr.observations.array().square().colwise().sum().matrix().transpose();
    t_max = std::max(t_max, tr.times.maxCoeff());
  }
  Normalizer nz;
  nz.shift = sum / n;
  const Eigen::VectorXd var = (sq / n - nz.shift.cwiseAbs2()).cwiseMax(0.0);
  nz.scale = var.cwiseSqrt().cwiseMax(1e-6);
  // A linear model x' = A x must stay linear after the change of variables.
  if (cfg.dynamics.mode == DynamicsMode::FactorizedLinear) nz.shift.setZero();
  nz.time_scale = t_max > 0 ? t_max : 1.0;
  return nz;
}

ParamVector Model::init_params(const Dataset& d, std::uint64_t seed) const {
  ParamVector p{Eigen::VectorXd::Zero(layout_.size()), layout_};
  Rng rng(derive_seed(seed, 0x1A17));
  const ObservationSet obs = observations(d);
  const Eigen::RowVectorXd mean = obs.y.colwise().mean();
  Eigen::VectorXd sd =
      ((obs.y.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(obs.y.rows())).sqrt().transpose();
  sd = sd.cwiseMax(1e-3);
  smoother_.init(p, rng, 0.1 * sd);
  dynamics_.init(p, rng);
  return p;
}

ObservationSet Model::observations(const Dataset& d) const {
  if (d.state_dim() != k_) throw ShapeError("dataset dimension differs from the model");
  ObservationSet o;
  const auto n = d.observation_count();
  o.points.resize(n, k_ + 1);
  o.y.resize(n, k_);
  Eigen::Index row = 0;
  for (const auto& tr : d.trajectories) {
    const auto m = tr.times.size();
    o.points.middleRows(row, m) = norm_.points(tr.x0, tr.times);
    for (Eigen::Index i = 0; i < m; ++i) o.y.row(row + i) = norm_.state_in(tr.observations.row(i).transpose()).transpose();
    row += m;
  }
  return o;
}

Eigen::MatrixXd Model::support_points(const SupportSet& s) const {
  if (s.entries.empty()) throw std::invalid_argument("support set is empty");
  Eigen::MatrixXd p(static_cast<Eigen::Index>(s.size()), k_ + 1);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto& e = s.entries[i];
    p.row(static_cast<Eigen::Index>(i)) = norm_.points(e.x0, Eigen::VectorXd::Constant(1, e.t));
  }
  return p;
}

std::vector<StatePrediction> predict_states(const Model& m, const ParamVector& p, const Dataset& d,
                                            const std::vector<Eigen::VectorXd>& x0s, const Eigen::VectorXd& times) {
  const Normalizer& nz = m.normalizer();
  const int k = m.state_dim();
  Eigen::MatrixXd queries(static_cast<Eigen::Index>(x0s.size()) * times.size(), k + 1);
  for (std::size_t j = 0; j < x0s.size(); ++j) {
    queries.middleRows(static_cast<Eigen::Index>(j) * times.size(), times.size()) = nz.points(x0s[j], times);
  }
  ad::Tape tape;
  const ad::Var params = tape.constant(p.values);
  const SmootherGp gp(m.smoother(), params, p.layout, m.observations(d));
  const std::vector<PosteriorVars> post = gp.state_posterior(queries, true);

  std::vector<StatePrediction> out(x0s.size());
  double worst = 0.0;
  for (std::size_t j = 0; j < x0s.size(); ++j) {
    StatePrediction& sp = out[j];
    sp.times = times;
    sp.mean.resize(times.size(), k);
    sp.std.resize(times.size(), k);
    for (int c = 0; c < k; ++c) {
      const auto cs = static_cast<std::size_t>(c);
      for (Eigen::Index i = 0; i < times.size(); ++i) {
        const Eigen::Index row = static_cast<Eigen::Index>(j) * times.size() + i;
        double var = post[cs].var.value()(row, 0);
        worst = std::min(worst, var);
        var = std::max(var, 0.0);
        sp.mean(i, c) = nz.shift[c] + nz.scale[c] * post[cs].mean.value()(row, 0);
        sp.std(i, c) = nz.scale[c] * std::sqrt(var);
      }
    }
  }
  if (worst < -1e-8) std::cerr << "warning: posterior variance " << worst << " clamped to 0\n";
  return out;
}

}  // namespace dgm
