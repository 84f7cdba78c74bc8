#include <doctest.h>

#include <cmath>

#include "dgm/dataset.hpp"
#include "dgm/gradcheck.hpp"
#include "dgm/model.hpp"
#include "dgm/smoother.hpp"
#include "dgm/trainer.hpp"

using namespace dgm;
using Matrix = Eigen::MatrixXd;

namespace {

Matrix m11(double v) { return Matrix::Constant(1, 1, v); }

// A small two-trajectory LV set and a randomly initialized smoother.
struct Fixture {
  Smoother sm{SmootherConfig{2, {10, 5}, 3, 0}};
  ParamVector p;
  ObservationSet obs;
  Eigen::Vector2d x0{1.0, 2.0};

  explicit Fixture(int n_obs = 12, std::uint64_t seed = 3) {
    ParamLayout layout;
    sm.add_segments(layout);
    p = ParamVector{Eigen::VectorXd::Zero(layout.size()), layout};
    Rng rng(seed);
    sm.init(p, rng, Eigen::Vector2d(0.1, 0.1));
    DatasetSpec spec = preset_spec(Preset::LV1, seed);
    spec.initial_conditions = {x0, Eigen::Vector2d(0.8, 1.1)};
    spec.obs_times = {linspace(0, 4, n_obs), linspace(0, 4, n_obs)};
    const Dataset d = generate_dataset(spec);
    obs.points.resize(2 * n_obs, 3);
    obs.y.resize(2 * n_obs, 2);
    const Normalizer id = Normalizer::identity(2);
    for (int m = 0; m < 2; ++m) {
      const auto& tr = d.trajectories[static_cast<std::size_t>(m)];
      obs.points.middleRows(m * n_obs, n_obs) = id.points(tr.x0, tr.times);
      obs.y.middleRows(m * n_obs, n_obs) = tr.observations;
    }
  }

  Matrix support(const Eigen::VectorXd& times) const { return Normalizer::identity(2).points(x0, times); }

  std::vector<PosteriorVars> state(const Matrix& q, ad::Tape& t) const {
    SmootherGp gp(sm, t.constant(p.values), p.layout, obs);
    return gp.state_posterior(q);
  }
};

}  // namespace

TEST_CASE("kernel matrix values") {
  const Matrix a = Matrix::Zero(1, 3);
  CHECK(gp::kernel_matrix(a, a, Eigen::RowVector3d(1, 1, 1))(0, 0) == 1.0);
  // squared scaled distance (1/1)^2 + (2/2)^2 = 2
  const Matrix b{{1.0, 2.0, 0.0}};
  CHECK(gp::kernel_matrix(a, b, Eigen::RowVector3d(1, 2, 1))(0, 0) == doctest::Approx(std::exp(-1.0)));
  Matrix z(4, 3);
  z << 0.1, 0.2, 0.3, -1, 0.5, 2, 0.3, 0.3, 0.3, 1, 1, 1;
  const Matrix k = gp::kernel_matrix(z, z, Eigen::RowVector3d(0.5, 1, 2));
  CHECK((k - k.transpose()).norm() == 0.0);
  const Eigen::SelfAdjointEigenSolver<Matrix> es(k);
  CHECK(es.eigenvalues().maxCoeff() <= k.trace());
}

TEST_CASE("marginal likelihood of one observation") {
  ad::Tape t;
  CHECK(gp::data_nll_core(t.constant(m11(1.0)), t.constant(m11(0.0))).scalar() == 0.0);
  CHECK(gp::data_nll_core(t.constant(m11(1.0)), t.constant(m11(1.0))).scalar() == doctest::Approx(0.5));
  // zero residual: value is 1/2 log(k + s2), strictly increasing in s2
  const double a = gp::data_nll_core(t.constant(m11(1.0 + 0.01)), t.constant(m11(0.0))).scalar();
  const double b = gp::data_nll_core(t.constant(m11(1.0 + 0.04)), t.constant(m11(0.0))).scalar();
  CHECK(b > a);
}

TEST_CASE("scalar derivative posterior") {
  // k = 1, kdot = 0.5, kddot = 1, s2 = 1, residual 2, zero mean derivative
  ad::Tape t;
  const PosteriorVars pv = gp::derivative_posterior_core(t.constant(m11(2.0)), t.constant(m11(2.0)),
                                                         t.constant(m11(0.5)), t.constant(m11(1.0)),
                                                         t.constant(m11(0.0)));
  CHECK(pv.mean.scalar() == doctest::Approx(0.5));
  CHECK(pv.var.scalar() == doctest::Approx(0.875));
}

TEST_CASE("scalar state posterior") {
  ad::Tape t;
  SUBCASE("query on the observation") {
    const PosteriorVars pv = gp::state_posterior_core(t.constant(m11(2.0)), t.constant(m11(2.0)),
                                                      t.constant(m11(1.0)), t.constant(m11(1.0)),
                                                      t.constant(m11(0.0)));
    CHECK(pv.mean.scalar() == doctest::Approx(1.0));
    CHECK(pv.var.scalar() == doctest::Approx(0.5));
  }
  SUBCASE("noiseless limit interpolates") {
    const PosteriorVars pv = gp::state_posterior_core(t.constant(m11(1.0 + 1e-10)), t.constant(m11(2.0)),
                                                      t.constant(m11(1.0)), t.constant(m11(1.0)),
                                                      t.constant(m11(0.0)));
    CHECK(pv.mean.scalar() == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(std::abs(pv.var.scalar()) < 1e-8);
  }
  SUBCASE("far query reverts to the prior") {
    const PosteriorVars pv = gp::state_posterior_core(t.constant(m11(2.0)), t.constant(m11(2.0)),
                                                      t.constant(m11(0.0)), t.constant(m11(1.0)),
                                                      t.constant(m11(0.3)));
    CHECK(pv.mean.scalar() == 0.3);
    CHECK(pv.var.scalar() == 1.0);
  }
}

TEST_CASE("two-point conditioning matches dense algebra") {
  // K = [[1, e^-1/2], [e^-1/2, 1]], s2 = 0.5, query at the first point
  const double c = std::exp(-0.5);
  Matrix k{{1.0, c}, {c, 1.0}};
  const Matrix a = k + 0.5 * Matrix::Identity(2, 2);
  const Eigen::Vector2d r(1.0, -0.5);
  ad::Tape t;
  const PosteriorVars pv = gp::state_posterior_core(t.constant(a), t.constant(r), t.constant(k.row(0)),
                                                    t.constant(m11(1.0)), t.constant(m11(0.0)));
  const double det = a.determinant();
  const Matrix ainv = Matrix{{a(1, 1), -a(0, 1)}, {-a(1, 0), a(0, 0)}} / det;
  CHECK(pv.mean.scalar() == doctest::Approx((k.row(0) * ainv * r)(0, 0)).epsilon(1e-12));
  CHECK(pv.var.scalar() == doctest::Approx(1.0 - (k.row(0) * ainv * k.row(0).transpose())(0, 0)).epsilon(1e-12));
  CHECK(gp::data_nll_core(t.constant(a), t.constant(r)).scalar() ==
        doctest::Approx(0.5 * r.dot(ainv * r) + 0.5 * std::log(det)).epsilon(1e-12));
}

TEST_CASE("kernel time derivatives through the feature map") {
  Fixture fx;
  const double t0 = 1.3, h = 1e-6;
  const auto features = [&](double t, bool dot, ad::Tape& tape) {
    return fx.sm.features(tape.constant(fx.p.values), fx.p.layout, fx.support(Eigen::VectorXd::Constant(1, t)), dot);
  };
  ad::Tape tape;
  const ad::Var params = tape.constant(fx.p.values);
  const SmootherFeatures fo = fx.sm.features(params, fx.p.layout, fx.obs.points, false);
  for (int k = 0; k < 2; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const ad::Var w = fx.sm.inv_sq_ell(params, fx.p.layout, k);
    const SmootherFeatures fs = features(t0, true, tape);
    const ad::Var kc = ad::rbf_kernel(fs.z[ks], fo.z[ks], w);
    const Matrix kdot = gp::kernel_dt(fs.z[ks], fs.z_dot[ks], fo.z[ks], w, kc).value();
    const Matrix up = ad::rbf_kernel(features(t0 + h, false, tape).z[ks], fo.z[ks], w).value();
    const Matrix dn = ad::rbf_kernel(features(t0 - h, false, tape).z[ks], fo.z[ks], w).value();
    const Matrix fd = (up - dn) / (2 * h);
    CHECK((fd - kdot).cwiseAbs().maxCoeff() <= 1e-5 * std::max(1e-3, kdot.cwiseAbs().maxCoeff()));
    const Matrix kdd = gp::kernel_ddt_diag(fs.z_dot[ks], w).value();
    CHECK(kdd(0, 0) >= 0.0);
    const Matrix full = gp::kernel_ddt(fs.z[ks].value(), fs.z_dot[ks].value(), fs.z[ks].value(),
                                       fs.z_dot[ks].value(), w.value());
    CHECK(full(0, 0) == doctest::Approx(kdd(0, 0)).epsilon(1e-12));
  }
}

TEST_CASE("constant-in-time features give zero kernel derivatives") {
  Fixture fx;
  fx.p.view("smoother.core.W0").row(2).setZero();  // the time input row
  ad::Tape t;
  const ad::Var params = t.constant(fx.p.values);
  const SmootherFeatures fs = fx.sm.features(params, fx.p.layout, fx.support(linspace(0, 3, 4)), true);
  const SmootherFeatures fo = fx.sm.features(params, fx.p.layout, fx.obs.points, false);
  const ad::Var w = fx.sm.inv_sq_ell(params, fx.p.layout, 0);
  const ad::Var kc = ad::rbf_kernel(fs.z[0], fo.z[0], w);
  CHECK(gp::kernel_dt(fs.z[0], fs.z_dot[0], fo.z[0], w, kc).value().norm() == 0.0);
  CHECK(gp::kernel_ddt_diag(fs.z_dot[0], w).value().norm() == 0.0);
}

TEST_CASE("derivative posterior is the time derivative of the state posterior") {
  const auto check_model = [](const Fixture& fx) {
    const Eigen::VectorXd times = linspace(0.3, 3.7, 7);
    ad::Tape t;
    SmootherGp gp(fx.sm, t.constant(fx.p.values), fx.p.layout, fx.obs);
    const auto sup = gp.at_support(fx.support(times));
    const double h = 1e-5;
    const auto up = gp.state_posterior(fx.support(times.array() + h), false);
    const auto dn = gp.state_posterior(fx.support(times.array() - h), false);
    for (std::size_t k = 0; k < 2; ++k) {
      const Matrix fd = (up[k].mean.value() - dn[k].mean.value()) / (2 * h);
      const Matrix mu = sup.derivative[k].mean.value();
      for (Eigen::Index i = 0; i < mu.rows(); ++i) {
        CHECK(std::abs(fd(i, 0) - mu(i, 0)) <= 1e-3 * std::max(1.0, std::abs(mu(i, 0))));
      }
      CHECK(sup.derivative[k].var.value().minCoeff() >= -1e-8);
    }
  };
  SUBCASE("untrained") { check_model(Fixture{}); }
  SUBCASE("trained") {
    // A few hundred smoothing steps on LV1 move the features away from initialization.
    TrainConfig c = default_train_config(Preset::LV1);
    c.transition_steps = 150;
    c.finetune_steps = 50;
    c.lambda = 0.0;
    const Dataset d = generate_dataset(Preset::LV1, 0);
    const TrainResult r = train(d, c);
    Fixture fx;
    fx.sm = r.model.smoother();
    fx.p = r.params;
    fx.obs = r.model.observations(d);
    check_model(fx);
  }
}

TEST_CASE("derivative posterior structure") {
  Fixture fx;
  const Matrix sp = fx.support(linspace(0, 4, 9));
  SUBCASE("conditioning reduces the derivative variance") {
    ad::Tape t;
    const ad::Var params = t.constant(fx.p.values);
    SmootherGp gp(fx.sm, params, fx.p.layout, fx.obs);
    const auto sup = gp.at_support(sp);
    const SmootherFeatures fs = fx.sm.features(params, fx.p.layout, sp, true);
    for (int k = 0; k < 2; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      const Matrix prior = gp::kernel_ddt_diag(fs.z_dot[ks], fx.sm.inv_sq_ell(params, fx.p.layout, k)).value();
      CHECK((prior - sup.derivative[ks].var.value()).minCoeff() >= -1e-12);
    }
  }
  SUBCASE("zero residual leaves the mean derivative") {
    ad::Tape t;
    const ad::Var params = t.constant(fx.p.values);
    fx.obs.y = fx.sm.features(params, fx.p.layout, fx.obs.points, false).mean.value();
    SmootherGp gp(fx.sm, params, fx.p.layout, fx.obs);
    const auto sup = gp.at_support(sp);
    const Matrix mdot = fx.sm.features(params, fx.p.layout, sp, true).mean_dot.value();
    for (int k = 0; k < 2; ++k) {
      CHECK((sup.derivative[static_cast<std::size_t>(k)].mean.value() - mdot.col(k)).norm() < 1e-12);
    }
  }
  SUBCASE("dimensions are independent") {
    ad::Tape t;
    const auto before = fx.state(sp, t);
    fx.obs.y.col(1).array() += 0.7;
    const auto after = fx.state(sp, t);
    CHECK(before[0].mean.value() == after[0].mean.value());
    CHECK(before[0].var.value() == after[0].var.value());
    CHECK((before[1].mean.value() - after[1].mean.value()).norm() > 0.0);
  }
  SUBCASE("state variances lie in [0, 1 + jitter]") {
    ad::Tape t;
    for (const auto& pv : fx.state(fx.support(linspace(-2, 8, 21)), t)) {
      CHECK(pv.var.value().minCoeff() >= -1e-8);
      CHECK(pv.var.value().maxCoeff() <= 1.0 + 1e-8);
    }
  }
}

TEST_CASE("marginal likelihood gradients agree with finite differences") {
  Fixture fx(3);
  const LossFn f = [&](ad::Tape&, const ad::Var& v) { return SmootherGp(fx.sm, v, fx.p.layout, fx.obs).data_nll(); };
  CHECK(finite_diff_check(f, fx.p.values, 1e-5) < 1e-4);
  const Matrix sp = fx.support(linspace(0.5, 3.5, 4));
  const LossFn g = [&](ad::Tape&, const ad::Var& v) {
    const auto sup = SmootherGp(fx.sm, v, fx.p.layout, fx.obs).at_support(sp);
    return ad::sum(ad::square(sup.derivative[0].mean)) + ad::sum(sup.derivative[1].var) + ad::sum(sup.state_mean);
  };
  CHECK(finite_diff_check(g, fx.p.values, 1e-5) < 1e-4);
}

TEST_CASE("duplicated observations with tiny noise still factorize") {
  Fixture fx(4);
  fx.obs.points.bottomRows(4) = fx.obs.points.topRows(4);
  fx.p.view("smoother.log_noise").setConstant(std::log(1e-7));
  ad::Tape t;
  CHECK(std::isfinite(SmootherGp(fx.sm, t.constant(fx.p.values), fx.p.layout, fx.obs).data_nll().scalar()));
}
