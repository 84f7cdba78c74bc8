#include <doctest.h>

#include <cmath>
#include <functional>
#include <thread>
#include <vector>

#include "dgm/autodiff.hpp"
#include "dgm/errors.hpp"
#include "dgm/gradcheck.hpp"
#include "dgm/params.hpp"
#include "dgm/rng.hpp"

using namespace dgm;
using Matrix = Eigen::MatrixXd;

namespace {

Eigen::VectorXd random_vector(Eigen::Index n, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

// sum(weights .* out) with fixed random weights, so every output entry
// receives a distinct upstream gradient.
ad::Var weighted(ad::Tape& t, const ad::Var& out, std::uint64_t seed) {
  const Eigen::VectorXd w = random_vector(out.rows() * out.cols(), seed);
  const Matrix wm = Eigen::Map<const Matrix>(w.data(), out.rows(), out.cols());
  return ad::sum(ad::hadamard(out, t.constant(wm)));
}

Matrix spd(Eigen::Index n, std::uint64_t seed) {
  const Eigen::VectorXd v = random_vector(n * n, seed);
  const Matrix b = Eigen::Map<const Matrix>(v.data(), n, n);
  return b * b.transpose() + Matrix::Identity(n, n) * static_cast<double>(n);
}

}  // namespace

TEST_CASE("flatten of an empty parameter set is empty") {
  const ParamVector p = flatten_params({}, ParamLayout{});
  CHECK(p.values.size() == 0);
  CHECK(p.layout.segments().empty());
}

TEST_CASE("two segments concatenate with consecutive offsets") {
  ParamLayout layout;
  layout.add("a", 3, 1, ParamGroup::SmootherNet);
  layout.add("b", 1, 2, ParamGroup::DynamicsNet);
  StructuredParams sp{{"a", Matrix::Constant(3, 1, 1.0)}, {"b", Matrix::Constant(1, 2, 2.0)}};
  const ParamVector p = flatten_params(sp, layout);
  CHECK(p.values.size() == 5);
  CHECK(layout.at("a").offset == 0);
  CHECK(layout.at("b").offset == 3);
  CHECK(p.values[4] == 2.0);
}

TEST_CASE("structured round trip is bitwise identity") {
  ParamLayout layout;
  layout.add("core.W0", 3, 4, ParamGroup::SmootherNet);
  layout.add("core.b0", 1, 4, ParamGroup::SmootherNet);
  layout.add("log_ell", 2, 3, ParamGroup::SmootherHyper);
  StructuredParams sp;
  std::uint64_t seed = 1;
  for (const Segment& s : layout.segments()) {
    const Eigen::VectorXd v = random_vector(s.size(), seed++);
    sp[s.name] = Eigen::Map<const Matrix>(v.data(), s.rows, s.cols);
  }
  const StructuredParams back = unflatten_params(flatten_params(sp, layout));
  REQUIRE(back.size() == sp.size());
  for (const auto& [name, m] : sp) CHECK(back.at(name) == m);
}

TEST_CASE("layout rejects duplicate names and masks groups") {
  ParamLayout layout;
  layout.add("a", 2, 1, ParamGroup::SmootherNet);
  layout.add("h", 1, 1, ParamGroup::SmootherHyper);
  CHECK_THROWS(layout.add("a", 1, 1, ParamGroup::SmootherNet));
  const Eigen::VectorXd m = layout.mask(ParamGroup::SmootherHyper);
  CHECK(m == Eigen::Vector3d(0, 0, 1));
}

TEST_CASE("quadratic value and gradient") {
  const LossFn f = [](ad::Tape&, const ad::Var& p) { return ad::sum(ad::square(p)); };
  const GradResult r = value_and_grad(f, Eigen::Vector2d(1, 2));
  CHECK(r.value == doctest::Approx(5.0));
  CHECK(r.gradient[0] == doctest::Approx(2.0));
  CHECK(r.gradient[1] == doctest::Approx(4.0));
  CHECK(finite_diff_check(f, Eigen::Vector2d(1, 2), 1e-6) < 1e-8);
}

TEST_CASE("sigmoid at zero") {
  const LossFn f = [](ad::Tape&, const ad::Var& p) { return ad::sigmoid(p); };
  const GradResult r = value_and_grad(f, Eigen::VectorXd::Zero(1));
  CHECK(r.value == doctest::Approx(0.5));
  CHECK(r.gradient[0] == doctest::Approx(0.25));
}

TEST_CASE("non-finite loss is reported, not propagated") {
  const LossFn f = [](ad::Tape&, const ad::Var& p) { return ad::log(ad::sum(p)); };
  CHECK_THROWS_AS(value_and_grad(f, Eigen::Vector2d(-1, -1)), NonFiniteError);
}

TEST_CASE("unused parameters receive exactly zero gradient") {
  const LossFn f = [](ad::Tape&, const ad::Var& p) {
    return ad::sum(ad::exp(ad::block(p, 0, 0, 2, 1)));
  };
  const GradResult r = value_and_grad(f, Eigen::Vector4d(0.1, 0.2, 0.3, 0.4));
  CHECK(r.gradient[2] == 0.0);
  CHECK(r.gradient[3] == 0.0);
}

TEST_CASE("elementwise and structural primitives agree with finite differences") {
  const Eigen::VectorXd p = random_vector(12, 7, 0.5);
  const auto check = [&](const char* name, const std::function<ad::Var(ad::Tape&, const ad::Var&)>& body) {
    INFO(name);
    const LossFn f = [&](ad::Tape& t, const ad::Var& v) { return weighted(t, body(t, v), 99); };
    CHECK(finite_diff_check(f, p, 1e-6) < 1e-6);
  };
  const auto a = [](const ad::Var& v) { return ad::reshape_segment(v, 0, 3, 2); };
  const auto b = [](const ad::Var& v) { return ad::reshape_segment(v, 6, 3, 2); };
  check("add", [&](ad::Tape&, const ad::Var& v) { return a(v) + b(v); });
  check("sub broadcast row", [&](ad::Tape&, const ad::Var& v) { return a(v) - ad::block(b(v), 0, 0, 1, 2); });
  check("hadamard broadcast col", [&](ad::Tape&, const ad::Var& v) { return ad::hadamard(a(v), ad::column(b(v), 1)); });
  check("divide", [&](ad::Tape&, const ad::Var& v) { return ad::divide(a(v), ad::add_scalar(ad::square(b(v)), 1.0)); });
  check("matmul", [&](ad::Tape&, const ad::Var& v) { return ad::matmul(a(v), ad::transpose(b(v))); });
  check("sums", [&](ad::Tape&, const ad::Var& v) {
    return ad::hcat({ad::transpose(ad::row_sum(a(v))), ad::col_sum(b(v)) + ad::sum(a(v))});
  });
  check("sigmoid", [&](ad::Tape&, const ad::Var& v) { return ad::sigmoid(a(v)); });
  check("softplus_square", [&](ad::Tape&, const ad::Var& v) { return ad::softplus_square(a(v)); });
  check("exp log", [&](ad::Tape&, const ad::Var& v) { return ad::log(ad::add_scalar(ad::exp(a(v)), 0.5)); });
  check("sqrt_floor", [&](ad::Tape&, const ad::Var& v) { return ad::sqrt_floor(ad::add_scalar(ad::square(a(v)), 0.1), 1e-12); });
  check("cos sin", [&](ad::Tape&, const ad::Var& v) { return ad::hcat({ad::cos(a(v)), ad::sin(b(v))}); });
  check("scale neg", [&](ad::Tape&, const ad::Var& v) { return -(3.0 * a(v)) + 2.0; });
}

TEST_CASE("rbf kernel and its time derivative agree with finite differences") {
  const Eigen::VectorXd p = random_vector(4 * 3 + 4 * 3 + 5 * 3 + 3, 11, 0.7);
  const LossFn f = [](ad::Tape& t, const ad::Var& v) {
    const ad::Var za = ad::reshape_segment(v, 0, 4, 3);
    const ad::Var zd = ad::reshape_segment(v, 12, 4, 3);
    const ad::Var zb = ad::reshape_segment(v, 24, 5, 3);
    const ad::Var w = ad::exp(ad::reshape_segment(v, 39, 1, 3));
    const ad::Var k = ad::rbf_kernel(za, zb, w);
    return weighted(t, k, 3) + weighted(t, ad::rbf_kernel_dt(za, zd, zb, w, k), 4);
  };
  CHECK(finite_diff_check(f, p, 1e-6) < 1e-6);
}

TEST_CASE("rbf kernel values") {
  ad::Tape t;
  const ad::Var a = t.constant(Matrix::Zero(1, 3));
  Matrix b(2, 3);
  b << 0, 0, 0, 1, 1, 0;
  const ad::Var k = ad::rbf_kernel(a, t.constant(b), t.constant(Matrix::Ones(1, 3)));
  CHECK(k.value()(0, 0) == doctest::Approx(1.0));
  CHECK(k.value()(0, 1) == doctest::Approx(std::exp(-1.0)));
}

TEST_CASE("spd primitives agree with finite differences") {
  const Eigen::Index n = 4;
  const Eigen::VectorXd p = random_vector(n * n + n * 3, 21, 0.5);
  const Matrix base = spd(n, 5);
  const LossFn f = [&](ad::Tape& t, const ad::Var& v) {
    const ad::Var m = ad::reshape_segment(v, 0, n, n);
    // a = base + m m^T keeps the argument symmetric positive definite
    const ad::Var a = t.constant(base) + ad::matmul(m, ad::transpose(m));
    const ad::Var b = ad::reshape_segment(v, n * n, n, 3);
    return weighted(t, ad::solve_spd(a, b), 1) + ad::logdet_spd(a) + weighted(t, ad::quad_diag_spd(a, b), 2) +
           weighted(t, ad::quad_diag_rows_spd(a, ad::transpose(b)), 3) +
           weighted(t, ad::add_diag(a, ad::exp(ad::block(b, 0, 0, 1, 1))), 4);
  };
  CHECK(finite_diff_check(f, p, 1e-6) < 1e-6);
}

TEST_CASE("spd primitive values match dense algebra") {
  ad::Tape t;
  const Matrix a = spd(5, 8);
  const Matrix b = Eigen::Map<const Matrix>(random_vector(10, 9).data(), 5, 2);
  const ad::Var av = t.constant(a), bv = t.constant(b);
  const Matrix inv = a.inverse();
  CHECK((ad::solve_spd(av, bv).value() - inv * b).norm() < 1e-12);
  CHECK(ad::logdet_spd(av).scalar() == doctest::Approx(std::log(a.determinant())).epsilon(1e-12));
  const Matrix q = ad::quad_diag_spd(av, bv).value();
  const Matrix qr = ad::quad_diag_rows_spd(av, t.constant(b.transpose())).value();
  for (int j = 0; j < 2; ++j) {
    const double want = b.col(j).dot(inv * b.col(j));
    CHECK(q(j, 0) == doctest::Approx(want).epsilon(1e-12));
    CHECK(qr(j, 0) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("factorization escalates jitter and finally fails") {
  Matrix singular = Matrix::Ones(3, 3);  // rank one, PSD
  const auto f = ad::factorize_spd(singular);
  CHECK(f->extra_jitter >= 1e-8);
  CHECK(f->extra_jitter <= 1e-4);
  Matrix indefinite = Matrix::Identity(2, 2);
  indefinite(1, 1) = -1.0;
  CHECK_THROWS_AS(ad::factorize_spd(indefinite), ConditioningError);
}

TEST_CASE("shape mismatches throw") {
  ad::Tape t;
  const ad::Var a = t.constant(Matrix::Zero(2, 3));
  const ad::Var b = t.constant(Matrix::Zero(2, 3));
  CHECK_THROWS_AS(ad::matmul(a, b), ShapeError);
  CHECK_THROWS_AS(ad::add(a, t.constant(Matrix::Zero(3, 2))), ShapeError);
  CHECK_THROWS_AS(ad::solve_spd(a, b), ShapeError);
}

TEST_CASE("concurrent evaluation on distinct tapes is consistent") {
  const LossFn f = [](ad::Tape&, const ad::Var& p) { return ad::sum(ad::sigmoid(ad::square(p))); };
  const Eigen::VectorXd p = random_vector(50, 3);
  const GradResult ref = value_and_grad(f, p);
  std::vector<GradResult> out(4);
  std::vector<std::thread> th;
  for (int i = 0; i < 4; ++i) th.emplace_back([&, i] { out[static_cast<std::size_t>(i)] = value_and_grad(f, p); });
  for (auto& x : th) x.join();
  for (const auto& r : out) {
    CHECK(r.value == ref.value);
    CHECK(r.gradient == ref.gradient);
  }
}
