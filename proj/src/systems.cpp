#include "dgm/systems.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "dgm/errors.hpp"
#include "dgm/rng.hpp"

namespace dgm {

namespace {

// Forward-mode dual number with a fixed-capacity tangent; enough for the
// largest (state + theta) count among the benchmark systems.
constexpr int kMaxTangents = 32;

struct Dual {
  double v = 0.0;
  std::array<double, kMaxTangents> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT(google-explicit-constructor)
};

Dual operator+(const Dual& a, const Dual& b) {
  Dual r(a.v + b.v);
  for (int i = 0; i < kMaxTangents; ++i) r.d[i] = a.d[i] + b.d[i];
  return r;
}
Dual operator-(const Dual& a, const Dual& b) {
  Dual r(a.v - b.v);
  for (int i = 0; i < kMaxTangents; ++i) r.d[i] = a.d[i] - b.d[i];
  return r;
}
Dual operator-(const Dual& a) {
  Dual r(-a.v);
  for (int i = 0; i < kMaxTangents; ++i) r.d[i] = -a.d[i];
  return r;
}
Dual operator*(const Dual& a, const Dual& b) {
  Dual r(a.v * b.v);
  for (int i = 0; i < kMaxTangents; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return r;
}
Dual operator/(const Dual& a, const Dual& b) {
  Dual r(a.v / b.v);
  const double inv2 = 1.0 / (b.v * b.v);
  for (int i = 0; i < kMaxTangents; ++i) r.d[i] = (a.d[i] * b.v - a.v * b.d[i]) * inv2;
  return r;
}
Dual chain(const Dual& a, double value, double deriv) {
  Dual r(value);
  for (int i = 0; i < kMaxTangents; ++i) r.d[i] = deriv * a.d[i];
  return r;
}
Dual sin(const Dual& a) { return chain(a, std::sin(a.v), std::cos(a.v)); }
Dual cos(const Dual& a) { return chain(a, std::cos(a.v), -std::sin(a.v)); }
Dual tan(const Dual& a) {
  const double c = std::cos(a.v);
  return chain(a, std::tan(a.v), 1.0 / (c * c));
}
double value_of(double x) { return x; }
double value_of(const Dual& x) { return x.v; }

using std::cos;
using std::sin;
using std::tan;

double param(const SystemSpec& spec, const char* name) {
  auto it = spec.params.find(name);
  if (it == spec.params.end()) throw std::invalid_argument(std::string("missing system parameter '") + name + "'");
  return it->second;
}

// theta follows theta_names(spec); everything else is read from spec.params.
template <class T>
void field(const SystemSpec& spec, const T* x, const T* th, T* out) {
  switch (spec.kind) {
    case SystemKind::LotkaVolterra: {
      const T &alpha = th[0], &beta = th[1], &gamma = th[2], &delta = th[3];
      out[0] = alpha * x[0] - beta * x[0] * x[1];
      out[1] = delta * x[0] * x[1] - gamma * x[1];
      return;
    }
    case SystemKind::Lorenz: {
      const T &sigma = th[0], &rho = th[1], &tau = th[2];
      out[0] = sigma * (x[1] - x[0]);
      out[1] = x[0] * (rho - x[2]) - x[1];
      out[2] = x[0] * x[1] - tau * (spec.lorenz_damp_y ? x[1] : x[2]);
      return;
    }
    case SystemKind::DoublePendulum: {
      const T &g = th[0], &m = th[1], &l = th[2];
      const T delta = x[0] - x[1];
      const T c = cos(delta);
      const T den = T(16.0) - T(9.0) * c * c;
      const T k = T(6.0) / (m * l * l);
      const T dth1 = k * (T(2.0) * x[2] - T(3.0) * c * x[3]) / den;
      const T dth2 = k * (T(8.0) * x[3] - T(3.0) * c * x[2]) / den;
      const T half_ml2 = T(0.5) * m * l * l;
      out[0] = dth1;
      out[1] = dth2;
      out[2] = -half_ml2 * (dth1 * dth2 * sin(delta) + T(3.0) * (g / l) * sin(x[0]));
      out[3] = -half_ml2 * (-(dth1 * dth2 * sin(delta)) + (g / l) * sin(x[1]));
      return;
    }
    case SystemKind::Quadrocopter: {
      const T &m = th[0], &ixx = th[1], &iyy = th[2], &izz = th[3], &dx = th[4], &dy = th[5], &g = th[6];
      const T f1 = param(spec, "F1"), f2 = param(spec, "F2"), f3 = param(spec, "F3"), f4 = param(spec, "F4");
      const T &u = x[0], &v = x[1], &w = x[2], &p = x[3], &q = x[4], &r = x[5];
      const T &phi = x[6], &theta = x[7], &psi = x[8];
      if (std::abs(std::cos(value_of(theta))) < 1e-12) {
        throw DomainError("quadrocopter pitch at +-pi/2: sec(theta) is singular");
      }
      const T fz = f1 + f2 + f3 + f4;
      const T torque_l = (f2 + f3) * dy - (f1 + f4) * dx;
      const T torque_m = (f1 + f3) * dx - (f2 + f4) * dx;
      const T sphi = sin(phi), cphi = cos(phi), sth = sin(theta), cth = cos(theta);
      const T spsi = sin(psi), cpsi = cos(psi);
      out[0] = -g * sth + r * v - q * w;
      out[1] = g * sphi * cth - r * u + p * w;
      out[2] = -fz / m + g * cphi * cth + q * u - p * v;
      out[3] = (torque_l + (iyy - izz) * q * r) / ixx;
      out[4] = (torque_m + (izz - ixx) * p * r) / iyy;
      out[5] = (ixx - iyy) * p * q / izz;
      out[6] = p + (q * sphi + r * cphi) * tan(theta);
      out[7] = q * cphi - r * sphi;
      out[8] = (q * sphi + r * cphi) / cth;
      out[9] = cth * cpsi * u + (-(cphi * spsi) + sphi * sth * cpsi) * v + (sphi * spsi + cphi * sth * cpsi) * w;
      out[10] = cth * spsi * u + (cphi * cpsi + sphi * sth * spsi) * v + (-(sphi * cpsi) + cphi * sth * spsi) * w;
      out[11] = sth * u - sphi * cth * v - cphi * cth * w;
      return;
    }
    case SystemKind::RandomLinear: {
      const int n = spec.state_dim;
      for (int i = 0; i < n; ++i) {
        T acc(0.0);
        for (int j = 0; j < n; ++j) acc = acc + th[i + j * n] * x[j];
        out[i] = acc;
      }
      return;
    }
  }
}

}  // namespace

const char* to_string(SystemKind k) {
  switch (k) {
    case SystemKind::LotkaVolterra: return "LV";
    case SystemKind::Lorenz: return "Lorenz";
    case SystemKind::DoublePendulum: return "DoublePendulum";
    case SystemKind::Quadrocopter: return "Quadrocopter";
    case SystemKind::RandomLinear: return "RandomLinear";
  }
  return "?";
}

SystemKind system_kind_from_string(const std::string& s) {
  if (s == "LV") return SystemKind::LotkaVolterra;
  if (s == "Lorenz") return SystemKind::Lorenz;
  if (s == "DoublePendulum") return SystemKind::DoublePendulum;
  if (s == "Quadrocopter") return SystemKind::Quadrocopter;
  if (s == "RandomLinear") return SystemKind::RandomLinear;
  throw std::invalid_argument("unknown system '" + s + "'");
}

SystemSpec make_system(SystemKind kind) {
  SystemSpec s;
  s.kind = kind;
  switch (kind) {
    case SystemKind::LotkaVolterra:
      s.state_dim = 2;
      s.params = {{"alpha", 1.0}, {"beta", 1.0}, {"gamma", 1.0}, {"delta", 1.0}};
      s.noise_var = Eigen::VectorXd::Constant(2, 0.01);
      break;
    case SystemKind::Lorenz:
      s.state_dim = 3;
      s.params = {{"sigma", 10.0}, {"rho", 28.0}, {"tau", 8.0 / 3.0}};
      s.noise_var = Eigen::VectorXd::Constant(3, 1.0);
      break;
    case SystemKind::DoublePendulum:
      s.state_dim = 4;
      s.params = {{"g", 9.81}, {"m", 1.0}, {"l", 1.0}};
      s.noise_var = Eigen::VectorXd::Constant(4, 0.01);
      break;
    case SystemKind::Quadrocopter:
      s.state_dim = 12;
      s.params = {{"m", 0.1},     {"Ixx", 0.62},    {"Iyy", 1.13},    {"Izz", 0.9},
                  {"dx", 0.114},  {"dy", 0.0825},   {"g", 9.85},      {"F1", 0.496},
                  {"F2", 0.495},  {"F3", 0.4955},   {"F4", 0.4955}};
      s.noise_var.resize(12);
      s.noise_var << 1, 1, 1, 0.1, 0.1, 0.1, 1, 0.1, 0.1, 5, 5, 5;
      break;
    case SystemKind::RandomLinear:
      return make_random_linear_system(0);
  }
  return s;
}

SystemSpec make_linear_system(const Eigen::MatrixXd& a, double noise_var) {
  if (a.rows() != a.cols() || a.rows() == 0) throw ShapeError("linear system matrix must be square");
  SystemSpec s;
  s.kind = SystemKind::RandomLinear;
  s.state_dim = static_cast<int>(a.rows());
  s.linear_a = a;
  s.noise_var = Eigen::VectorXd::Constant(a.rows(), noise_var);
  return s;
}

SystemSpec make_random_linear_system(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xA11CE));
  const double stable = rng.uniform(-0.5, -0.1);
  Eigen::Matrix2d c;
  Eigen::Matrix2d skew;
  do {
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) c(i, j) = rng.uniform();
    skew = c - c.transpose();
  } while (std::abs(skew(0, 1)) < 1e-12);
  // For a 2x2 skew matrix the spectral radius is |skew(0, 1)|.
  const double radius = std::abs(skew(0, 1));
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3, 3);
  a(0, 0) = stable;
  a.block<2, 2>(1, 1) = (std::numbers::pi / (2.0 * radius)) * skew;
  return make_linear_system(a, 0.01);
}

void validate(const SystemSpec& spec) {
  if (spec.state_dim <= 0) throw std::invalid_argument("state dimension must be positive");
  if (spec.noise_var.size() != spec.state_dim) throw std::invalid_argument("noise variance length must equal state dimension");
  if ((spec.noise_var.array() <= 0).any()) throw std::invalid_argument("noise variances must be positive");
  if (spec.kind == SystemKind::RandomLinear) {
    if (spec.linear_a.rows() != spec.state_dim || spec.linear_a.cols() != spec.state_dim) {
      throw std::invalid_argument("linear system matrix does not match state dimension");
    }
    return;
  }
  const int expected = spec.kind == SystemKind::LotkaVolterra ? 2
                       : spec.kind == SystemKind::Lorenz      ? 3
                       : spec.kind == SystemKind::DoublePendulum ? 4
                                                                 : 12;
  if (spec.state_dim != expected) throw std::invalid_argument("state dimension does not match system");
  for (const auto& n : theta_names(spec)) param(spec, n.c_str());
  if (spec.kind == SystemKind::Quadrocopter) {
    for (const char* f : {"F1", "F2", "F3", "F4"}) param(spec, f);
  }
}

std::vector<std::string> theta_names(const SystemSpec& spec) {
  switch (spec.kind) {
    case SystemKind::LotkaVolterra: return {"alpha", "beta", "gamma", "delta"};
    case SystemKind::Lorenz: return {"sigma", "rho", "tau"};
    case SystemKind::DoublePendulum: return {"g", "m", "l"};
    case SystemKind::Quadrocopter: return {"m", "Ixx", "Iyy", "Izz", "dx", "dy", "g"};
    case SystemKind::RandomLinear: {
      std::vector<std::string> names;
      for (int j = 0; j < spec.state_dim; ++j)
        for (int i = 0; i < spec.state_dim; ++i) names.push_back("A" + std::to_string(i) + std::to_string(j));
      return names;
    }
  }
  return {};
}

Eigen::VectorXd theta_values(const SystemSpec& spec) {
  if (spec.kind == SystemKind::RandomLinear) {
    return Eigen::Map<const Eigen::VectorXd>(spec.linear_a.data(), spec.linear_a.size());
  }
  const auto names = theta_names(spec);
  Eigen::VectorXd th(static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) th[static_cast<Eigen::Index>(i)] = param(spec, names[i].c_str());
  return th;
}

Eigen::VectorXd eval_vector_field(const SystemSpec& spec, const Eigen::VectorXd& x) {
  if (x.size() != spec.state_dim) throw ShapeError("state has wrong dimension for system");
  const Eigen::VectorXd th = theta_values(spec);
  Eigen::VectorXd out(spec.state_dim);
  field<double>(spec, x.data(), th.data(), out.data());
  return out;
}

FieldJacobian eval_field_with_jacobian(const SystemSpec& spec, const Eigen::VectorXd& x, const Eigen::VectorXd& theta) {
  const int k = spec.state_dim;
  const auto p = static_cast<int>(theta.size());
  if (x.size() != k) throw ShapeError("state has wrong dimension for system");
  if (theta.size() != static_cast<Eigen::Index>(theta_names(spec).size())) throw ShapeError("theta has wrong length");
  if (k + p > kMaxTangents) throw std::invalid_argument("too many tangents for the dual-number Jacobian");
  std::vector<Dual> xd(static_cast<std::size_t>(k)), td(static_cast<std::size_t>(p)), out(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    xd[static_cast<std::size_t>(i)].v = x[i];
    xd[static_cast<std::size_t>(i)].d[static_cast<std::size_t>(i)] = 1.0;
  }
  for (int i = 0; i < p; ++i) {
    td[static_cast<std::size_t>(i)].v = theta[i];
    td[static_cast<std::size_t>(i)].d[static_cast<std::size_t>(k + i)] = 1.0;
  }
  field<Dual>(spec, xd.data(), td.data(), out.data());
  FieldJacobian j{Eigen::VectorXd(k), Eigen::MatrixXd(k, k), Eigen::MatrixXd(k, p)};
  for (int i = 0; i < k; ++i) {
    const Dual& o = out[static_cast<std::size_t>(i)];
    j.value[i] = o.v;
    for (int c = 0; c < k; ++c) j.d_state(i, c) = o.d[static_cast<std::size_t>(c)];
    for (int c = 0; c < p; ++c) j.d_theta(i, c) = o.d[static_cast<std::size_t>(k + c)];
  }
  return j;
}

double double_pendulum_energy(const SystemSpec& spec, const Eigen::VectorXd& x) {
  const double g = param(spec, "g"), m = param(spec, "m"), l = param(spec, "l");
  const Eigen::VectorXd f = eval_vector_field(spec, x);
  const double w1 = f[0], w2 = f[1];
  const double kinetic = m * l * l / 6.0 * (w2 * w2 + 4.0 * w1 * w1 + 3.0 * w1 * w2 * std::cos(x[0] - x[1]));
  const double potential = -0.5 * m * g * l * (3.0 * std::cos(x[0]) + std::cos(x[1]));
  return kinetic + potential;
}

}  // namespace dgm
