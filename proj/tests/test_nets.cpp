#include <doctest.h>

#include <cmath>

#include "dgm/dynamics.hpp"
#include "dgm/gradcheck.hpp"
#include "dgm/nets.hpp"
#include "dgm/smoother.hpp"

using namespace dgm;
using Matrix = Eigen::MatrixXd;

namespace {

const double kLog2Sq = std::log(2.0) * std::log(2.0);

ParamVector make_params(const ParamLayout& layout) { return {Eigen::VectorXd::Zero(layout.size()), layout}; }

struct SmootherFixture {
  Smoother sm;
  ParamVector p;
  explicit SmootherFixture(int k, std::uint64_t seed = 1) : sm(SmootherConfig{k, {10, 5}, 3, 0}) {
    ParamLayout layout;
    sm.add_segments(layout);
    p = make_params(layout);
    Rng rng(seed);
    sm.init(p, rng, Eigen::VectorXd::Constant(k, 0.1));
    // Nonzero biases so the tests do not sit on a symmetric point.
    for (auto& v : p.values) v += 0.05 * rng.normal();
  }
  Matrix eval(const Matrix& pts, bool dot, int k, bool mean) const {
    ad::Tape t;
    const SmootherFeatures f = sm.features(t.constant(p.values), p.layout, pts, dot);
    const auto ks = static_cast<std::size_t>(k);
    if (mean) return dot ? f.mean_dot.value() : f.mean.value();
    return dot ? f.z_dot[ks].value() : f.z[ks].value();
  }
};

Matrix points_at(const Eigen::VectorXd& x0, double t) {
  Matrix p(1, x0.size() + 1);
  p.row(0).head(x0.size()) = x0.transpose();
  p(0, x0.size()) = t;
  return p;
}

}  // namespace

TEST_CASE("zero network is the zero map") {
  const MlpSpec spec{3, {4, 2}, OutputActivation::Identity};
  ParamLayout layout;
  add_mlp_segments(layout, "n", spec, ParamGroup::SmootherNet);
  const Matrix out = mlp_forward(make_params(layout), "n", spec, Matrix::Ones(5, 3));
  CHECK(out.rows() == 5);
  CHECK(out.cols() == 2);
  CHECK(out.norm() == 0.0);
}

TEST_CASE("output activations at zero pre-activation") {
  ParamLayout layout;
  add_mlp_segments(layout, "s", MlpSpec{1, {1}, OutputActivation::Sigmoid}, ParamGroup::SmootherNet);
  add_mlp_segments(layout, "q", MlpSpec{1, {1}, OutputActivation::SoftplusSquare}, ParamGroup::SmootherNet);
  const ParamVector p = make_params(layout);
  CHECK(mlp_forward(p, "s", MlpSpec{1, {1}, OutputActivation::Sigmoid}, Matrix::Ones(1, 1))(0, 0) == 0.5);
  CHECK(mlp_forward(p, "q", MlpSpec{1, {1}, OutputActivation::SoftplusSquare}, Matrix::Ones(1, 1))(0, 0) ==
        doctest::Approx(0.480453).epsilon(1e-6));
}

TEST_CASE("shape errors are reported") {
  const MlpSpec spec{3, {2}, OutputActivation::Identity};
  ParamLayout layout;
  add_mlp_segments(layout, "n", spec, ParamGroup::SmootherNet);
  CHECK_THROWS(mlp_forward(make_params(layout), "n", spec, Matrix::Ones(2, 4)));
  CHECK_THROWS((MlpSpec{0, {2}, OutputActivation::Identity}.check()));
  CHECK_THROWS((MlpSpec{2, {}, OutputActivation::Identity}.check()));
}

TEST_CASE("glorot initialization is bounded with zero biases") {
  const MlpSpec spec{6, {10, 4}, OutputActivation::Identity};
  ParamLayout layout;
  add_mlp_segments(layout, "n", spec, ParamGroup::SmootherNet);
  ParamVector p = make_params(layout);
  Rng rng(3);
  init_mlp(p, "n", spec, rng);
  CHECK(p.view("n.W0").cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 16.0));
  CHECK(p.view("n.W1").cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 14.0));
  CHECK(p.view("n.W0").cwiseAbs().maxCoeff() > 0.0);
  CHECK(p.view("n.b0").norm() == 0.0);
  CHECK(p.view("n.b1").norm() == 0.0);
}

TEST_CASE("network gradients agree with finite differences") {
  for (OutputActivation act : {OutputActivation::Identity, OutputActivation::Sigmoid, OutputActivation::SoftplusSquare}) {
    const MlpSpec spec{3, {5, 4, 2}, act};
    ParamLayout layout;
    add_mlp_segments(layout, "n", spec, ParamGroup::SmootherNet);
    ParamVector p = make_params(layout);
    Rng rng(5);
    init_mlp(p, "n", spec, rng);
    for (auto& v : p.values) v += 0.1 * rng.normal();
    Matrix x(4, 3);
    for (auto& v : x.reshaped()) v = rng.normal();
    const LossFn f = [&](ad::Tape& t, const ad::Var& v) {
      const ad::Var out = mlp_forward(v, layout, "n", spec, t.constant(x));
      return ad::sum(ad::hadamard(out, ad::add_scalar(out, 0.3)));
    };
    CHECK(finite_diff_check(f, p.values, 1e-6) < 1e-6);
  }
}

TEST_CASE("input tangents agree with finite differences of the value") {
  const MlpSpec spec{3, {5, 4}, OutputActivation::Sigmoid};
  ParamLayout layout;
  add_mlp_segments(layout, "n", spec, ParamGroup::SmootherNet);
  ParamVector p = make_params(layout);
  Rng rng(6);
  init_mlp(p, "n", spec, rng);
  Matrix x(2, 3);
  x << 0.1, -0.4, 0.7, 1.2, 0.3, -0.2;
  Matrix e(2, 3);
  e << 0.2, -1.0, 0.5, 0.0, 0.0, 1.0;
  ad::Tape t;
  const Tangent tg = mlp_forward_tangent(t.constant(p.values), layout, "n", spec, t.constant(x), t.constant(e));
  const double h = 1e-6;
  const Matrix fd = (mlp_forward(p, "n", spec, x + h * e) - mlp_forward(p, "n", spec, x - h * e)) / (2 * h);
  CHECK((fd - tg.dot.value()).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("smoother feature map and mean") {
  SmootherFixture fx(2);
  const Eigen::Vector2d x0(1.0, 2.0);
  SUBCASE("shapes") {
    CHECK(fx.eval(points_at(x0, 0.5), false, 0, false).cols() == 3);
    CHECK(fx.eval(points_at(x0, 0.5), false, 1, false).cols() == 3);
    CHECK(fx.eval(points_at(x0, 0.5), false, 0, true).cols() == 2);
    SmootherFixture fx3(3);
    CHECK(fx3.eval(points_at(Eigen::Vector3d(1, 2, 3), 0.5), false, 2, false).cols() == 3);
  }
  SUBCASE("time derivatives match finite differences") {
    const double t = 0.7, h = 1e-6;
    for (bool mean : {false, true}) {
      for (int k = 0; k < 2; ++k) {
        const Matrix fd =
            (fx.eval(points_at(x0, t + h), false, k, mean) - fx.eval(points_at(x0, t - h), false, k, mean)) / (2 * h);
        const Matrix ad = fx.eval(points_at(x0, t), true, k, mean);
        CHECK((fd - ad).norm() <= 1e-5 * std::max(1e-3, ad.norm()));
      }
    }
  }
  SUBCASE("zero core weights leave only the head bias") {
    ParamVector& p = fx.p;
    for (const Segment& s : p.layout.segments()) {
      if (s.name.rfind("smoother.core.W", 0) == 0) p.view(s.name).setZero();
    }
    const Matrix a = fx.eval(points_at(x0, 0.1), false, 0, false);
    const Matrix b = fx.eval(points_at(Eigen::Vector2d(-3, 5), 4.0), false, 0, false);
    CHECK((a - b).norm() == 0.0);
    CHECK(fx.eval(points_at(x0, 0.1), true, 0, false).norm() == 0.0);
    p.view("smoother.feat0.b0").array() += 1.0;
    CHECK((fx.eval(points_at(x0, 0.1), false, 0, false) - a).norm() > 0.5);
  }
  SUBCASE("zero mean head gives zero mean") {
    fx.p.view("smoother.mean.W0").setZero();
    fx.p.view("smoother.mean.b0").setZero();
    CHECK(fx.eval(points_at(x0, 0.3), false, 0, true).norm() == 0.0);
  }
  SUBCASE("feature heads are per dimension, the core is shared") {
    const Matrix pts = points_at(x0, 0.4);
    const Matrix z0 = fx.eval(pts, false, 0, false), z1 = fx.eval(pts, false, 1, false);
    fx.p.view("smoother.feat0.W0")(0, 0) += 0.5;
    CHECK((fx.eval(pts, false, 0, false) - z0).norm() > 0.0);
    CHECK((fx.eval(pts, false, 1, false) - z1).norm() == 0.0);
    fx.p.view("smoother.core.W0")(0, 0) += 0.5;
    CHECK((fx.eval(pts, false, 1, false) - z1).norm() > 0.0);
  }
}

TEST_CASE("dynamics forward") {
  const Normalizer id = Normalizer::identity(2);
  SUBCASE("neural variances are positive and log(2)^2 at zero pre-activation") {
    const Dynamics dyn(2, DynamicsConfig{}, id);
    ParamLayout layout;
    dyn.add_segments(layout);
    ParamVector p = make_params(layout);
    Rng rng(2);
    dyn.init(p, rng);
    Matrix x(3, 2);
    x << 1, 2, -5, 7, 100, -100;
    const GaussianMarginalSet m = dyn.marginals(p, x);
    CHECK(m.std.minCoeff() > 0.0);
    p.view("dynamics.net.W2").setZero();
    p.view("dynamics.net.b2").setZero();
    const GaussianMarginalSet z = dyn.marginals(p, x);
    for (double s : z.std.reshaped()) CHECK(s * s == doctest::Approx(kLog2Sq));
    CHECK(z.mean.norm() == 0.0);
  }
  SUBCASE("parametric lotka-volterra at nominal parameters") {
    DynamicsConfig cfg;
    cfg.mode = DynamicsMode::Parametric;
    cfg.system = make_system(SystemKind::LotkaVolterra);
    const Dynamics dyn(2, cfg, id);
    ParamLayout layout;
    dyn.add_segments(layout);
    ParamVector p = make_params(layout);
    Rng rng(2);
    dyn.init(p, rng);
    const Eigen::VectorXd th = p.view("dynamics.theta");
    for (Eigen::Index i = 0; i < th.size(); ++i) {
      CHECK(th[i] >= 0.5);
      CHECK(th[i] <= 1.5);
    }
    p.view("dynamics.theta").setOnes();
    const GaussianMarginalSet m = dyn.marginals(p, Matrix{{1.0, 2.0}});
    CHECK(m.mean(0, 0) == doctest::Approx(-1.0));
    CHECK(m.mean(0, 1) == doctest::Approx(0.0));
    CHECK(m.std.minCoeff() > 0.0);
  }
  SUBCASE("factorized linear mean is the product of the factors") {
    const Dynamics dyn(2, parse_dynamics("factorized:3,4"), id);
    ParamLayout layout;
    dyn.add_segments(layout);
    ParamVector p = make_params(layout);
    Rng rng(2);
    dyn.init(p, rng);
    CHECK(p.view("dynamics.B0").rows() == 2);
    CHECK(p.view("dynamics.B0").cols() == 3);
    CHECK(p.view("dynamics.B2").cols() == 2);
    const Matrix b = Matrix(p.view("dynamics.B0")) * Matrix(p.view("dynamics.B1")) * Matrix(p.view("dynamics.B2"));
    const Matrix x{{0.3, -1.1}};
    CHECK((dyn.marginals(p, x).mean - x * b).norm() < 1e-12);
  }
  SUBCASE("dynamics gradients agree with finite differences in every mode") {
    for (const char* mode : {"neural", "parametric", "factorized:3"}) {
      INFO(mode);
      DynamicsConfig cfg = parse_dynamics(mode);
      cfg.system = make_system(SystemKind::LotkaVolterra);
      const Dynamics dyn(2, cfg, Normalizer{Eigen::Vector2d(0.5, 0.2), Eigen::Vector2d(2.0, 0.5), 3.0});
      ParamLayout layout;
      dyn.add_segments(layout);
      ParamVector p = make_params(layout);
      Rng rng(4);
      dyn.init(p, rng);
      const Matrix x{{0.3, -1.1}, {1.2, 0.4}};
      const LossFn f = [&](ad::Tape& t, const ad::Var& v) {
        const Dynamics::Output o = dyn.forward(v, layout, t.constant(x));
        return ad::sum(ad::square(o.mean)) + ad::sum(ad::log(o.var));
      };
      CHECK(finite_diff_check(f, p.values, 1e-6) < 1e-5);
    }
  }
}
