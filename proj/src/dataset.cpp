#include "dgm/dataset.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "dgm/errors.hpp"
#include "dgm/integrate.hpp"
#include "dgm/rng.hpp"

namespace dgm {

namespace {

constexpr std::uint64_t kNoiseLabel = 0x4E6F697365ULL;
constexpr std::uint64_t kTestLabel = 0x5465737449ULL;
constexpr std::uint64_t kSphereLabel = 0x5370686572ULL;

struct PresetInfo {
  Preset preset;
  const char* name;
};

constexpr PresetInfo kPresets[] = {
    {Preset::LV1, "lv1"},     {Preset::LV100, "lv100"}, {Preset::LO1, "lo1"},   {Preset::LO125, "lo125"},
    {Preset::DP1, "dp1"},     {Preset::DP100, "dp100"}, {Preset::QU1, "qu1"},   {Preset::QU64, "qu64"},
    {Preset::LV25, "lv25"},   {Preset::LIN1, "lin1"},   {Preset::Custom, "custom"},
};

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Eigen::VectorXd unit_sphere_point(Rng& rng, int dim) {
  Eigen::VectorXd v(dim);
  double n2 = 0.0;
  do {
    for (int i = 0; i < dim; ++i) v[i] = rng.normal();
    n2 = v.squaredNorm();
  } while (n2 < 1e-24);
  return v / std::sqrt(n2);
}

DatasetSpec grid_spec(SystemKind kind, double horizon, int obs, std::vector<Eigen::VectorXd> ics) {
  DatasetSpec s;
  s.system = make_system(kind);
  s.horizon = horizon;
  s.initial_conditions = std::move(ics);
  for (std::size_t i = 0; i < s.initial_conditions.size(); ++i) s.obs_times.push_back(linspace(0.0, horizon, obs));
  return s;
}

}  // namespace

const char* to_string(Preset p) {
  for (const auto& info : kPresets)
    if (info.preset == p) return info.name;
  return "custom";
}

Preset preset_from_string(const std::string& s) {
  std::string lower;
  for (char c : s) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  for (const auto& info : kPresets)
    if (lower == info.name) return info.preset;
  throw std::invalid_argument("unknown preset '" + s + "'");
}

Eigen::Index Dataset::observation_count() const {
  Eigen::Index n = 0;
  for (const auto& tr : trajectories) n += tr.times.size();
  return n;
}

Eigen::VectorXd linspace(double lo, double hi, int n) {
  if (n < 1) throw std::invalid_argument("linspace needs at least one point");
  if (n == 1) return Eigen::VectorXd::Constant(1, lo);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  v[n - 1] = hi;
  return v;
}

DatasetSpec preset_spec(Preset p, std::uint64_t seed) {
  using std::numbers::pi;
  DatasetSpec s;
  switch (p) {
    case Preset::LV1:
      s = grid_spec(SystemKind::LotkaVolterra, 10.0, 100, {vec({1.0, 2.0})});
      break;
    case Preset::LV100: {
      std::vector<Eigen::VectorXd> ics;
      for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j) ics.push_back(vec({0.5 + i / 9.0, 0.5 + j / 9.0}));
      s = grid_spec(SystemKind::LotkaVolterra, 10.0, 5, std::move(ics));
      break;
    }
    case Preset::LV25: {
      std::vector<Eigen::VectorXd> ics;
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) ics.push_back(vec({0.5 + i / 4.0, 0.5 + j / 4.0}));
      s = grid_spec(SystemKind::LotkaVolterra, 10.0, 5, std::move(ics));
      break;
    }
    case Preset::LO1:
      s = grid_spec(SystemKind::Lorenz, 1.0, 100, {vec({-2.5, 2.5, 2.5})});
      break;
    case Preset::LO125: {
      std::vector<Eigen::VectorXd> ics;
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
          for (int k = 0; k < 5; ++k) ics.push_back(vec({-5.0 + 2.5 * i, -5.0 + 2.5 * j, -5.0 + 2.5 * k}));
      s = grid_spec(SystemKind::Lorenz, 1.0, 10, std::move(ics));
      break;
    }
    case Preset::DP1:
      s = grid_spec(SystemKind::DoublePendulum, 1.0, 100, {vec({-pi / 6, -pi / 6, 0.0, 0.0})});
      break;
    case Preset::DP100: {
      std::vector<Eigen::VectorXd> ics;
      for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j) ics.push_back(vec({-pi / 6 + pi * i / 27.0, -pi / 6 + pi * j / 27.0, 0.0, 0.0}));
      s = grid_spec(SystemKind::DoublePendulum, 1.0, 5, std::move(ics));
      break;
    }
    case Preset::QU1:
      s = grid_spec(SystemKind::Quadrocopter, 10.0, 100, {Eigen::VectorXd::Zero(12)});
      break;
    case Preset::QU64: {
      std::vector<Eigen::VectorXd> ics;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
          for (int k = 0; k < 4; ++k) {
            Eigen::VectorXd x = Eigen::VectorXd::Zero(12);
            x[6] = -pi / 18 + pi * i / 27.0;
            x[7] = -pi / 18 + pi * j / 27.0;
            x[8] = -pi / 18 + pi * k / 27.0;
            ics.push_back(x);
          }
      s = grid_spec(SystemKind::Quadrocopter, 10.0, 15, std::move(ics));
      break;
    }
    case Preset::LIN1: {
      s.system = make_random_linear_system(seed);
      s.horizon = 10.0;
      Rng rng(derive_seed(seed, kSphereLabel));
      s.initial_conditions.push_back(unit_sphere_point(rng, 3));
      s.obs_times.push_back(linspace(0.0, 10.0, 100));
      break;
    }
    case Preset::Custom:
      throw std::invalid_argument("the custom preset has no built-in grid; supply a DatasetSpec");
  }
  s.seed = seed;
  s.preset = p;
  return s;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  validate(spec.system);
  if (spec.initial_conditions.empty()) throw std::invalid_argument("dataset needs at least one trajectory");
  if (spec.initial_conditions.size() != spec.obs_times.size()) {
    throw ShapeError("initial conditions and observation-time lists differ in count");
  }
  const int k = spec.system.state_dim;
  const std::uint64_t noise_seed = derive_seed(spec.seed, kNoiseLabel);
  Dataset d;
  d.spec = spec;
  for (std::size_t m = 0; m < spec.initial_conditions.size(); ++m) {
    const Eigen::VectorXd& times = spec.obs_times[m];
    if (times.size() == 0) throw std::invalid_argument("trajectory has no observation times");
    for (Eigen::Index i = 1; i < times.size(); ++i) {
      if (!(times[i] > times[i - 1])) throw std::invalid_argument("observation times must be strictly increasing");
    }
    Trajectory tr;
    tr.x0 = spec.initial_conditions[m];
    tr.times = times;
    tr.observations = integrate(spec.system, tr.x0, times);
    for (Eigen::Index i = 0; i < times.size(); ++i) {
      for (int c = 0; c < k; ++c) {
        tr.observations(i, c) += std::sqrt(spec.system.noise_var[c]) *
                                 keyed_normal(noise_seed, m, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(c));
      }
    }
    d.trajectories.push_back(std::move(tr));
  }
  return d;
}

Dataset generate_dataset(Preset p, std::uint64_t seed) { return generate_dataset(preset_spec(p, seed)); }

std::vector<Eigen::VectorXd> sample_test_initial_conditions(Preset p, int count, std::uint64_t seed) {
  using std::numbers::pi;
  if (count < 1) throw std::invalid_argument("count must be >= 1");
  Rng rng(derive_seed(seed, kTestLabel));
  std::vector<Eigen::VectorXd> out;
  for (int n = 0; n < count; ++n) {
    switch (p) {
      case Preset::LV1:
      case Preset::LV100:
      case Preset::LV25: {
        const double a = rng.uniform(0.5, 1.5);
        out.push_back(vec({a, rng.uniform(0.5, 1.5)}));
        break;
      }
      case Preset::LO1:
      case Preset::LO125: {
        Eigen::VectorXd x(3);
        for (int i = 0; i < 3; ++i) x[i] = rng.uniform(-5.0, 5.0);
        out.push_back(x);
        break;
      }
      case Preset::DP1:
      case Preset::DP100: {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(4);
        x[0] = rng.uniform(-pi / 6, pi / 6);
        x[1] = rng.uniform(-pi / 6, pi / 6);
        out.push_back(x);
        break;
      }
      case Preset::QU1:
      case Preset::QU64: {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(12);
        x[6] = rng.uniform(-pi / 18, pi / 18);
        x[7] = rng.uniform(-pi / 18, pi / 18);
        out.push_back(x);
        break;
      }
      case Preset::LIN1:
        out.push_back(unit_sphere_point(rng, 3));
        break;
      case Preset::Custom:
        throw std::invalid_argument("the custom preset has no test box");
    }
  }
  return out;
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw std::invalid_argument("expected a JSON array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) j.push_back(vector_to_json(m.row(r).transpose()));
  return j;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw std::invalid_argument("expected a JSON array of rows");
  if (j.empty()) return Eigen::MatrixXd(0, 0);
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (static_cast<Eigen::Index>(j[r].size()) != cols) throw ShapeError("ragged matrix in JSON");
    m.row(static_cast<Eigen::Index>(r)) = vector_from_json(j[r]).transpose();
  }
  return m;
}

nlohmann::json system_to_json(const SystemSpec& s) {
  nlohmann::json j;
  j["name"] = to_string(s.kind);
  j["params"] = s.params;
  j["noise_cov_diag"] = vector_to_json(s.noise_var);
  j["state_dim"] = s.state_dim;
  if (s.kind == SystemKind::RandomLinear) j["A"] = matrix_to_json(s.linear_a);
  if (s.kind == SystemKind::Lorenz) j["lorenz_damp_y"] = s.lorenz_damp_y;
  return j;
}

SystemSpec system_from_json(const nlohmann::json& j) {
  SystemSpec s;
  s.kind = system_kind_from_string(j.at("name").get<std::string>());
  s.params = j.at("params").get<std::map<std::string, double>>();
  s.noise_var = vector_from_json(j.at("noise_cov_diag"));
  s.state_dim = j.at("state_dim").get<int>();
  if (j.contains("A")) s.linear_a = matrix_from_json(j.at("A"));
  s.lorenz_damp_y = j.value("lorenz_damp_y", false);
  validate(s);
  return s;
}

nlohmann::json dataset_to_json(const Dataset& d) {
  nlohmann::json j;
  j["schema"] = "dgm-dataset-v1";
  nlohmann::json spec;
  spec["system"] = system_to_json(d.spec.system);
  spec["preset"] = to_string(d.spec.preset);
  spec["seed"] = d.spec.seed;
  spec["horizon"] = d.spec.horizon;
  j["spec"] = spec;
  nlohmann::json trajs = nlohmann::json::array();
  for (const auto& tr : d.trajectories) {
    trajs.push_back({{"x0", vector_to_json(tr.x0)},
                     {"times", vector_to_json(tr.times)},
                     {"observations", matrix_to_json(tr.observations)}});
  }
  j["trajectories"] = trajs;
  return j;
}

Dataset dataset_from_json(const nlohmann::json& j) {
  if (j.value("schema", std::string()) != "dgm-dataset-v1") throw std::invalid_argument("not a dgm-dataset-v1 document");
  Dataset d;
  const auto& spec = j.at("spec");
  d.spec.system = system_from_json(spec.at("system"));
  d.spec.preset = preset_from_string(spec.value("preset", std::string("custom")));
  d.spec.seed = spec.value("seed", std::uint64_t{0});
  d.spec.horizon = spec.at("horizon").get<double>();
  for (const auto& t : j.at("trajectories")) {
    Trajectory tr;
    tr.x0 = vector_from_json(t.at("x0"));
    tr.times = vector_from_json(t.at("times"));
    tr.observations = matrix_from_json(t.at("observations"));
    if (tr.x0.size() != d.spec.system.state_dim || tr.observations.rows() != tr.times.size() ||
        tr.observations.cols() != d.spec.system.state_dim) {
      throw ShapeError("trajectory shapes do not match the system");
    }
    d.spec.initial_conditions.push_back(tr.x0);
    d.spec.obs_times.push_back(tr.times);
    d.trajectories.push_back(std::move(tr));
  }
  if (d.trajectories.empty()) throw std::invalid_argument("dataset has no trajectories");
  return d;
}

void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << dataset_to_json(d).dump(1) << '\n';
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  return dataset_from_json(nlohmann::json::parse(f));
}

}  // namespace dgm
