#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dgm/errors.hpp"
#include "dgm/gradcheck.hpp"
#include "dgm/matching.hpp"
#include "dgm/model.hpp"
#include "dgm/trainer.hpp"

using namespace dgm;
using Matrix = Eigen::MatrixXd;

namespace {

// Empirical squared W2 between two 1-D sample sets: in one dimension the
// optimal coupling pairs order statistics.
double empirical_w2(double mu_a, double s_a, double mu_b, double s_b, int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n));
  for (auto& x : a) x = mu_a + s_a * rng.normal();
  for (auto& x : b) x = mu_b + s_b * rng.normal();
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc / n;
}

// Two observations of LV1 and a randomly initialized model.
struct Toy {
  Dataset d;
  Model model;
  ParamVector p;
  ObservationSet obs;
  Matrix support;

  explicit Toy(const std::string& dynamics = "neural", int n_obs = 2, DecayMode = DecayMode::Decoupled) {
    DatasetSpec spec = preset_spec(Preset::LV1, 0);
    spec.obs_times = {linspace(0, 2, n_obs)};
    d = generate_dataset(spec);
    ModelConfig mc;
    mc.smoother.state_dim = 2;
    mc.dynamics = parse_dynamics(dynamics);
    mc.dynamics.system = d.spec.system;
    model = Model(2, mc, Model::fit_normalizer(d, mc), 7);
    p = model.init_params(d, 1);
    Rng rng(9);
    for (auto& v : p.values) v += 0.05 * rng.normal();
    obs = model.observations(d);
    support = model.support_points(choose_supporting_points(d));
  }
};

}  // namespace

TEST_CASE("closed-form W2 values") {
  CHECK(w2_gaussian_1d(0, 1, 0, 1) == 0.0);
  CHECK(w2_gaussian_1d(1, 2, 0, 1) == doctest::Approx(2.0));
  CHECK(w2_gaussian_1d(3, 0.5, 3, 2) == doctest::Approx(2.25));
}

TEST_CASE("closed-form W2 matches a Monte-Carlo estimate") {
  struct Case {
    double ma, sa, mb, sb;
  };
  std::uint64_t seed = 0;
  for (const Case& c : {Case{1, 2, 0, 1}, Case{-0.5, 0.3, 2, 1.5}, Case{0, 3, 0.2, 0.5}}) {
    const double exact = w2_gaussian_1d(c.ma, c.sa, c.mb, c.sb);
    const double mc = empirical_w2(c.ma, c.sa, c.mb, c.sb, 100000, ++seed);
    CHECK(std::abs(mc - exact) / exact < 0.01);
  }
}

TEST_CASE("dynamics loss sums the marginal distances") {
  GaussianMarginalSet a{Matrix{{1, 0}}, Matrix{{2, 1}}};
  GaussianMarginalSet b{Matrix{{0, 1}}, Matrix{{1, 2}}};
  CHECK(dynamics_loss(a, a) == 0.0);
  CHECK(dynamics_loss(a, b) == doctest::Approx(4.0));
  GaussianMarginalSet a3{Matrix{{1, 0}, {0.5, 0.2}, {-1, 3}}, Matrix{{2, 1}, {0.1, 0.4}, {1, 1}}};
  GaussianMarginalSet b3{Matrix{{0, 1}, {0.7, 0.1}, {2, 2}}, Matrix{{1, 2}, {0.3, 0.3}, {0.5, 3}}};
  const double base = dynamics_loss(a3, b3);
  CHECK(base > 0.0);
  const Eigen::Vector3i perm(2, 0, 1);
  GaussianMarginalSet pa{perm.asPermutation() * a3.mean, perm.asPermutation() * a3.std};
  GaussianMarginalSet pb{perm.asPermutation() * b3.mean, perm.asPermutation() * b3.std};
  CHECK(dynamics_loss(pa, pb) == doctest::Approx(base));
  CHECK_THROWS_AS(dynamics_loss(a, a3), ShapeError);
}

TEST_CASE("divergence switch") {
  ad::Tape t;
  const ad::Var ms = t.constant(Matrix{{0.0}}), ss = t.constant(Matrix{{1.0}});
  const ad::Var md = t.constant(Matrix{{1.0}}), sd = t.constant(Matrix{{2.0}});
  CHECK(marginal_divergence(ms, ss, md, sd).scalar() == doctest::Approx(2.0));
  // KL(N(0,1) || N(1,4)) = log 2 + (1 + 1) / 8 - 1/2
  const double kl_f = std::log(2.0) + 2.0 / 8.0 - 0.5;
  const double kl_b = std::log(0.5) + (4.0 + 1.0) / 2.0 - 0.5;
  CHECK(marginal_divergence(ms, ss, md, sd, Divergence::KLForward).scalar() == doctest::Approx(kl_f));
  CHECK(marginal_divergence(ms, ss, md, sd, Divergence::KLBackward).scalar() == doctest::Approx(kl_b));
  CHECK(marginal_divergence(ms, ss, md, sd, Divergence::KLSymmetric).scalar() == doctest::Approx(kl_f + kl_b));
  CHECK(divergence_from_string("kl_forward") == Divergence::KLForward);
  CHECK(std::string(to_string(Divergence::W2)) == "w2");
}

TEST_CASE("objective assembly") {
  Toy toy;
  ad::Tape t;
  const ad::Var params = t.constant(toy.p.values);
  SUBCASE("no matching and no decay is the marginal likelihood") {
    const LossEval e = total_loss(toy.model, params, toy.obs, toy.support, LossWeights{});
    const double data = SmootherGp(toy.model.smoother(), params, toy.model.layout(), toy.obs).data_nll().scalar();
    CHECK(e.breakdown.total == data);
    CHECK(e.objective.scalar() == data);
    CHECK(e.breakdown.wasserstein_term == 0.0);
  }
  SUBCASE("breakdown identity and linearity in lambda") {
    LossWeights w{0.7, 0.1, 0.2, DecayMode::L2, Divergence::W2};
    const LossBreakdown b1 = total_loss(toy.model, params, toy.obs, toy.support, w).breakdown;
    CHECK(b1.total == doctest::Approx(b1.data_term + 0.7 * b1.wasserstein_term + b1.weight_decay_term));
    CHECK(b1.weight_decay_term == doctest::Approx(weight_decay_penalty(toy.p, 0.1, 0.2)));
    CHECK(b1.wasserstein_term >= 0.0);
    w.lambda = 1.4;
    const LossBreakdown b2 = total_loss(toy.model, params, toy.obs, toy.support, w).breakdown;
    CHECK(b2.wasserstein_term == doctest::Approx(b1.wasserstein_term));
    CHECK(b2.total - b1.total == doctest::Approx(0.7 * b1.wasserstein_term));
    w.lambda = 1e-12;
    const LossBreakdown b3 = total_loss(toy.model, params, toy.obs, toy.support, w).breakdown;
    w.lambda = 0.0;
    const LossBreakdown b4 = total_loss(toy.model, params, toy.obs, toy.support, w).breakdown;
    CHECK(b3.total == doctest::Approx(b4.total).epsilon(1e-9));
  }
  SUBCASE("decoupled decay is reported but not differentiated") {
    const LossWeights w{0.5, 0.3, 0.3, DecayMode::Decoupled, Divergence::W2};
    const LossEval e = total_loss(toy.model, params, toy.obs, toy.support, w);
    CHECK(e.objective.scalar() == doctest::Approx(e.breakdown.data_term + 0.5 * e.breakdown.wasserstein_term));
    CHECK(e.breakdown.weight_decay_term > 0.0);
  }
  CHECK_THROWS(total_loss(toy.model, params, toy.obs, toy.support, LossWeights{-1.0}));
}

TEST_CASE("hyperparameters and known-form parameters are excluded from decay") {
  Toy toy("parametric");
  ParamVector q = toy.p;
  const double base = weight_decay_penalty(q, 1.0, 1.0);
  q.view("smoother.log_ell").array() += 3.0;
  q.view("smoother.log_noise").array() += 3.0;
  q.view("dynamics.theta").array() += 3.0;
  CHECK(weight_decay_penalty(q, 1.0, 1.0) == base);
}

TEST_CASE("objective gradients agree with finite differences") {
  for (const char* dyn : {"neural", "parametric", "factorized:3"}) {
    for (Divergence div : {Divergence::W2, Divergence::KLSymmetric}) {
      INFO(dyn << " " << to_string(div));
      Toy toy(dyn);
      const LossWeights w{0.8, 0.01, 0.02, DecayMode::L2, div};
      const LossFn f = [&](ad::Tape&, const ad::Var& v) {
        return total_loss(toy.model, v, toy.obs, toy.support, w).objective;
      };
      CHECK(finite_diff_check(f, toy.p.values, 1e-5) < 1e-4);
    }
  }
  SUBCASE("matching term alone on two support points") {
    Toy toy;
    const LossFn f = [&](ad::Tape&, const ad::Var& v) {
      const LossWeights w{1.0};
      return total_loss(toy.model, v, toy.obs, toy.support, w).objective -
             SmootherGp(toy.model.smoother(), v, toy.model.layout(), toy.obs).data_nll();
    };
    CHECK(toy.support.rows() == 2);
    CHECK(finite_diff_check(f, toy.p.values, 1e-5) < 1e-4);
  }
}

TEST_CASE("optimizing the dynamics alone never increases the matching term") {
  Toy toy("neural", 12);
  const LossWeights w{1.0};
  const Eigen::VectorXd mask = toy.model.layout().mask(ParamGroup::DynamicsNet);
  const LossFn f = [&](ad::Tape&, const ad::Var& v) {
    return total_loss(toy.model, v, toy.obs, toy.support, w).objective;
  };
  Eigen::VectorXd p = toy.p.values;
  OptimizerState st(p.size());
  const double start = value_and_grad(f, p).value;
  double best = start;
  for (int i = 0; i < 60; ++i) {
    const GradResult g = value_and_grad(f, p);
    best = std::min(best, g.value);
    adam_step(st, p, g.gradient.cwiseProduct(mask), 0.01, Eigen::VectorXd::Zero(p.size()));
  }
  ad::Tape t;
  const double end = total_loss(toy.model, t.constant(p), toy.obs, toy.support, w).breakdown.wasserstein_term;
  ad::Tape t0;
  const double begin =
      total_loss(toy.model, t0.constant(toy.p.values), toy.obs, toy.support, w).breakdown.wasserstein_term;
  CHECK(end < begin);
  CHECK(best <= start);
}

TEST_CASE("default lambda is observations per supporting point") {
  const Dataset d = generate_dataset(Preset::LV100, 0);
  CHECK(default_lambda(d, choose_supporting_points(d)) == doctest::Approx(1.0 / 6.0));
  const Dataset one = generate_dataset(Preset::LV1, 0);
  CHECK(default_lambda(one, choose_supporting_points(one)) == 1.0);
}
