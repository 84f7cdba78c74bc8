#include "dgm/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include "dgm/errors.hpp"
#include "dgm/rng.hpp"

namespace dgm {

namespace {
constexpr const char* kVersion = "dgm-ckpt-v1";
constexpr std::uint64_t kRffLabel = 0xFF7;
}  // namespace

Checkpoint make_checkpoint(const Dataset& d, const TrainConfig& c, const TrainResult& r) {
  return {d, c, r.model, r.params, r.lambda_final, nlohmann::json::object()};
}

nlohmann::json checkpoint_to_json(const Checkpoint& c) {
  nlohmann::json j;
  j["version"] = kVersion;
  j["spec"] = system_to_json(c.data.spec.system);
  nlohmann::json layout = nlohmann::json::array();
  for (const Segment& s : c.params.layout.segments()) {
    layout.push_back({{"name", s.name}, {"offset", s.offset}, {"rows", s.rows}, {"cols", s.cols},
                      {"group", to_string(s.group)}});
  }
  j["layout"] = layout;
  j["params"] = vector_to_json(c.params.values);
  const Normalizer& nz = c.model.normalizer();
  nlohmann::json freqs = nlohmann::json::array();
  for (const auto& f : c.model.smoother().frequencies()) freqs.push_back({{"features", f.features}, {"omega", matrix_to_json(f.omega)}});
  j["hyper"] = {{"lambda_final", c.lambda_final},
                {"state_shift", vector_to_json(nz.shift)},
                {"state_scale", vector_to_json(nz.scale)},
                {"time_scale", nz.time_scale},
                {"rff_frequencies", freqs}};
  j["config"] = train_config_to_json(c.config);
  j["final_metrics"] = c.final_metrics;
  j["dataset"] = dataset_to_json(c.data);
  return j;
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("version", std::string()) != kVersion) throw std::invalid_argument("not a dgm-ckpt-v1 checkpoint");
  Checkpoint c;
  c.data = dataset_from_json(j.at("dataset"));
  c.config = train_config_from_json(j.at("config"));
  const auto& h = j.at("hyper");
  Normalizer nz{vector_from_json(h.at("state_shift")), vector_from_json(h.at("state_scale")),
                h.at("time_scale").get<double>()};
  if (c.config.model.dynamics.mode == DynamicsMode::Parametric) c.config.model.dynamics.system = c.data.spec.system;
  c.model = Model(c.data.state_dim(), c.config.model, nz, derive_seed(c.config.seed, kRffLabel));
  std::vector<FourierFeatureSpec> freqs;
  for (const auto& f : h.at("rff_frequencies")) freqs.push_back({f.at("features").get<int>(), matrix_from_json(f.at("omega"))});
  if (freqs.size() != c.model.smoother().frequencies().size()) throw ShapeError("checkpoint frequency count mismatch");
  c.model.smoother().set_frequencies(std::move(freqs));
  c.lambda_final = h.at("lambda_final").get<double>();

  ParamLayout stored;
  for (const auto& s : j.at("layout")) {
    stored.add(s.at("name").get<std::string>(), s.at("rows").get<Eigen::Index>(), s.at("cols").get<Eigen::Index>(),
               param_group_from_string(s.at("group").get<std::string>()));
  }
  if (!(stored == c.model.layout())) throw ShapeError("checkpoint layout does not match its configuration");
  c.params = ParamVector{vector_from_json(j.at("params")), c.model.layout()};
  if (c.params.values.size() != c.model.layout().size()) throw ShapeError("checkpoint parameter count mismatch");
  c.final_metrics = j.value("final_metrics", nlohmann::json::object());
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << checkpoint_to_json(c).dump(1) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  return checkpoint_from_json(nlohmann::json::parse(f));
}

}  // namespace dgm
