#include "dgm/dynamics.hpp"

#include <memory>
#include <sstream>
#include <stdexcept>

#include "dgm/errors.hpp"

namespace dgm {

DynamicsConfig parse_dynamics(const std::string& s) {
  DynamicsConfig c;
  if (s == "neural") return c;
  if (s == "parametric") {
    c.mode = DynamicsMode::Parametric;
    return c;
  }
  const std::string prefix = "factorized:";
  if (s.rfind(prefix, 0) == 0) {
    c.mode = DynamicsMode::FactorizedLinear;
    std::stringstream ss(s.substr(prefix.size()));
    std::string item;
    while (std::getline(ss, item, ',')) {
      std::size_t used = 0;
      int v = 0;
      try {
        v = std::stoi(item, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != item.size() || v < 1) throw std::invalid_argument("bad factor width '" + item + "' in '" + s + "'");
      c.factor_dims.push_back(v);
    }
    return c;
  }
  if (s == "factorized") {
    c.mode = DynamicsMode::FactorizedLinear;
    return c;
  }
  throw std::invalid_argument("unknown dynamics '" + s + "'");
}

std::string to_string(const DynamicsConfig& c) {
  switch (c.mode) {
    case DynamicsMode::Neural: return "neural";
    case DynamicsMode::Parametric: return "parametric";
    case DynamicsMode::FactorizedLinear: {
      std::string s = "factorized:";
      for (std::size_t i = 0; i < c.factor_dims.size(); ++i) s += (i ? "," : "") + std::to_string(c.factor_dims[i]);
      return c.factor_dims.empty() ? std::string("factorized") : s;
    }
  }
  return "neural";
}

Dynamics::Dynamics(int state_dim, DynamicsConfig cfg, Normalizer norm)
    : k_(state_dim), cfg_(std::move(cfg)), norm_(std::move(norm)) {
  if (k_ < 1) throw std::invalid_argument("dynamics needs a positive state dimension");
  if (cfg_.mode == DynamicsMode::Parametric) {
    validate(cfg_.system);
    if (cfg_.system.state_dim != k_) throw ShapeError("parametric system dimension differs from the data");
  }
  if (norm_.shift.size() != k_ || norm_.scale.size() != k_) throw ShapeError("normalizer dimension mismatch");
}

MlpSpec Dynamics::net_spec() const { return {k_, {20, 20, 2 * k_}, OutputActivation::Identity}; }

MlpSpec Dynamics::var_spec() const {
  if (cfg_.mode == DynamicsMode::Parametric) return {k_, {10, 10, k_}, OutputActivation::SoftplusSquare};
  return {k_, {20, 20, k_}, OutputActivation::SoftplusSquare};
}

void Dynamics::add_segments(ParamLayout& layout) const {
  switch (cfg_.mode) {
    case DynamicsMode::Neural:
      add_mlp_segments(layout, "dynamics.net", net_spec(), ParamGroup::DynamicsNet);
      return;
    case DynamicsMode::Parametric:
      layout.add("dynamics.theta", static_cast<Eigen::Index>(theta_names(cfg_.system).size()), 1,
                 ParamGroup::DynamicsTheta);
      add_mlp_segments(layout, "dynamics.var", var_spec(), ParamGroup::DynamicsNet);
      return;
    case DynamicsMode::FactorizedLinear: {
      int rows = k_;
      for (std::size_t j = 0; j <= cfg_.factor_dims.size(); ++j) {
        const int cols = j < cfg_.factor_dims.size() ? cfg_.factor_dims[j] : k_;
        layout.add("dynamics.B" + std::to_string(j), rows, cols, ParamGroup::DynamicsNet);
        rows = cols;
      }
      add_mlp_segments(layout, "dynamics.var", var_spec(), ParamGroup::DynamicsNet);
      return;
    }
  }
}

void Dynamics::init(ParamVector& p, Rng& rng) const {
  switch (cfg_.mode) {
    case DynamicsMode::Neural:
      init_mlp(p, "dynamics.net", net_spec(), rng);
      return;
    case DynamicsMode::Parametric: {
      const Eigen::VectorXd nominal = theta_values(cfg_.system);
      auto th = p.view("dynamics.theta");
      for (Eigen::Index i = 0; i < nominal.size(); ++i) th(i, 0) = nominal[i] * rng.uniform(0.5, 1.5);
      init_mlp(p, "dynamics.var", var_spec(), rng);
      return;
    }
    case DynamicsMode::FactorizedLinear:
      for (std::size_t j = 0; j <= cfg_.factor_dims.size(); ++j) init_glorot(p.view("dynamics.B" + std::to_string(j)), rng);
      init_mlp(p, "dynamics.var", var_spec(), rng);
      return;
  }
}

ad::Var parametric_field(const SystemSpec& sys, const Normalizer& norm, const ad::Var& x, const ad::Var& theta) {
  ad::Tape& t = *x.tape();
  const int k = sys.state_dim;
  const Eigen::MatrixXd& xv = x.value();
  const Eigen::VectorXd th = Eigen::Map<const Eigen::VectorXd>(theta.value().data(), theta.value().size());
  if (xv.cols() != k) throw ShapeError("parametric_field: state width mismatch");
  const Eigen::VectorXd out_scale = norm.time_scale * norm.scale.cwiseInverse();
  auto jac_x = std::make_shared<std::vector<Eigen::MatrixXd>>();
  auto jac_th = std::make_shared<std::vector<Eigen::MatrixXd>>();
  Eigen::MatrixXd out(xv.rows(), k);
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const Eigen::VectorXd xo = norm.state_out(xv.row(i).transpose());
    FieldJacobian j = eval_field_with_jacobian(sys, xo, th);
    out.row(i) = j.value.cwiseProduct(out_scale).transpose();
    jac_x->push_back(out_scale.asDiagonal() * j.d_state * norm.scale.asDiagonal());
    jac_th->push_back(out_scale.asDiagonal() * j.d_theta);
  }
  const int ix = x.id(), ith = theta.id();
  const bool need = t.requires_grad(x) || t.requires_grad(theta);
  return t.push(std::move(out), need, [ix, ith, jac_x, jac_th](ad::Tape& tp, const Eigen::MatrixXd& g) {
    const auto rows = static_cast<Eigen::Index>(jac_x->size());
    if (tp.requires_grad(ix)) {
      Eigen::MatrixXd gx(rows, g.cols());
      for (Eigen::Index i = 0; i < rows; ++i) gx.row(i) = g.row(i) * (*jac_x)[static_cast<std::size_t>(i)];
      tp.accumulate(ix, std::move(gx));
    }
    if (tp.requires_grad(ith)) {
      Eigen::MatrixXd gt = Eigen::MatrixXd::Zero((*jac_th)[0].cols(), 1);
      for (Eigen::Index i = 0; i < rows; ++i) gt += (*jac_th)[static_cast<std::size_t>(i)].transpose() * g.row(i).transpose();
      tp.accumulate(ith, std::move(gt));
    }
  });
}

Dynamics::Output Dynamics::forward(const ad::Var& params, const ParamLayout& layout, const ad::Var& x) const {
  if (x.cols() != k_) throw ShapeError("dynamics input width mismatch");
  switch (cfg_.mode) {
    case DynamicsMode::Neural: {
      const ad::Var out = mlp_forward(params, layout, "dynamics.net", net_spec(), x);
      return {ad::block(out, 0, 0, x.rows(), k_), ad::softplus_square(ad::block(out, 0, k_, x.rows(), k_))};
    }
    case DynamicsMode::Parametric:
      return {parametric_field(cfg_.system, norm_, x, segment(params, layout, "dynamics.theta")),
              mlp_forward(params, layout, "dynamics.var", var_spec(), x)};
    case DynamicsMode::FactorizedLinear: {
      ad::Var mean = x;
      for (std::size_t j = 0; j <= cfg_.factor_dims.size(); ++j) {
        mean = ad::matmul(mean, segment(params, layout, "dynamics.B" + std::to_string(j)));
      }
      return {mean, mlp_forward(params, layout, "dynamics.var", var_spec(), x)};
    }
  }
  throw std::logic_error("unreachable dynamics mode");
}

GaussianMarginalSet Dynamics::marginals(const ParamVector& p, const Eigen::MatrixXd& x) const {
  ad::Tape tape;
  const Output o = forward(tape.constant(p.values), p.layout, tape.constant(x));
  return {o.mean.value(), o.var.value().array().sqrt().matrix()};
}

GaussianMarginalSet dynamics_marginals(const Dynamics& dyn, const ParamVector& p, const Eigen::MatrixXd& smoother_means) {
  return dyn.marginals(p, smoother_means);
}

}  // namespace dgm
