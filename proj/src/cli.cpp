#include "dgm/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dgm/checkpoint.hpp"
#include "dgm/dataset.hpp"
#include "dgm/evalmetrics.hpp"
#include "dgm/integrate.hpp"
#include "dgm/trainer.hpp"

namespace dgm {

namespace {

using nlohmann::json;

// Raised for flag combinations CLI11 cannot express; maps to exit status 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::string preset;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out;
  std::string data;
  std::string config;
  std::string ckpt;
  std::string mode = "generalization";
  std::string lambda_grid = "0.00390625,0.0625,1,16";
  int features = 0;
  std::string dynamics;
};

json echo_flags(const std::string& verb, const Flags& f) {
  json j;
  j["command"] = verb;
  if (!f.preset.empty()) j["preset"] = f.preset;
  j["seed"] = f.seed;
  if (!f.out.empty()) j["out"] = f.out;
  if (!f.data.empty()) j["data"] = f.data;
  if (!f.config.empty()) j["config"] = f.config;
  if (!f.ckpt.empty()) j["ckpt"] = f.ckpt;
  j["mode"] = f.mode;
  if (verb == "ablate-lambda") j["lambda_grid"] = f.lambda_grid;
  if (f.features > 0) j["features"] = f.features;
  if (!f.dynamics.empty()) j["dynamics"] = f.dynamics;
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(1) + "\n"); }

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return json::parse(in);
}

// "a/b.json" -> "a/b.<suffix>"
std::string sibling_path(const std::string& path, const std::string& suffix) {
  std::filesystem::path p(path);
  p.replace_extension();
  return p.string() + "." + suffix;
}

Dataset dataset_from_flags(const Flags& f) {
  if (!f.data.empty() && !f.preset.empty()) throw UsageError("--data and --preset are mutually exclusive");
  if (!f.data.empty()) return load_dataset(f.data);
  if (!f.preset.empty()) return generate_dataset(preset_from_string(f.preset), f.seed);
  throw UsageError("one of --data or --preset is required");
}

TrainConfig config_from_flags(const Flags& f, const Dataset& d) {
  TrainConfig c = default_train_config(d.spec.preset);
  if (!f.config.empty()) c = train_config_from_json(read_json(f.config), c);
  if (f.seed_given) c.seed = f.seed;
  if (f.features > 0) c.model.smoother.rff_features = f.features;
  if (!f.dynamics.empty()) c.model.dynamics = parse_dynamics(f.dynamics);
  c.check();
  return c;
}

int thread_cap() {
  const char* env = std::getenv("DGM_THREADS");
  if (env == nullptr) return 1;
  const int n = std::atoi(env);
  return n > 0 ? n : 1;
}

// Runs jobs[0..n) on at most thread_cap() workers; each job owns its state.
void run_parallel(std::size_t n, const std::function<void(std::size_t)>& job) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(thread_cap()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::mutex mu;
  std::size_t next = 0;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i;
        {
          std::lock_guard<std::mutex> lock(mu);
          if (next >= n) return;
          i = next++;
        }
        job(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(17);
  s << x;
  return s.str();
}

// One trained-and-evaluated cell of an ablation.
struct Cell {
  double multiplier = 0.0;
  double lambda = 0.0;
  double mean_ll = std::nan("");
  double std_ll = std::nan("");
  std::string error;
};

void train_and_score(const Dataset& d, TrainConfig c, EvalMode mode, std::uint64_t eval_seed, Cell& cell) {
  try {
    c.lambda = cell.lambda;
    const TrainResult r = train(d, c);
    const EvalReport rep = evaluate(make_checkpoint(d, c, r), mode, eval_seed);
    cell.mean_ll = rep.mean_ll;
    cell.std_ll = stddev(rep.per_trajectory);
  } catch (const std::exception& e) {
    cell.error = e.what();
  }
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw UsageError("--lambda-grid: cannot parse '" + item + "'");
    }
    if (used != item.size() || !std::isfinite(v) || v < 0.0) {
      throw UsageError("--lambda-grid: '" + item + "' is not a non-negative number");
    }
    if (std::find(grid.begin(), grid.end(), v) != grid.end()) {
      std::cerr << "warning: duplicate lambda multiplier " << item << " dropped\n";
      continue;
    }
    grid.push_back(v);
  }
  if (grid.empty()) throw UsageError("--lambda-grid is empty");
  return grid;
}

std::string cells_csv(const std::vector<Cell>& cells, const std::string& first_col,
                      const std::vector<std::string>& labels) {
  std::ostringstream s;
  s << first_col << ",lambda,mean_ll,std,error\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Cell& c = cells[i];
    std::string err = c.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    s << labels[i] << ',' << fmt(c.lambda) << ',' << fmt(c.mean_ll) << ',' << fmt(c.std_ll) << ',' << err << '\n';
  }
  return s.str();
}

// Rejects unknown preset, mode and dynamics names before any work starts.
void validate_names(const Flags& f) {
  try {
    if (!f.preset.empty()) preset_from_string(f.preset);
    if (!f.dynamics.empty()) parse_dynamics(f.dynamics);
    eval_mode_from_string(f.mode);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

// ------------------------------------------------------------------ verbs

int cmd_gen_data(const Flags& f) {
  if (f.preset.empty()) throw UsageError("gen-data requires --preset");
  const Dataset d = generate_dataset(preset_from_string(f.preset), f.seed);
  json j = dataset_to_json(d);
  j["meta"] = echo_flags("gen-data", f);
  write_json(f.out, j);
  std::cout << "wrote " << d.trajectories.size() << " trajectories, " << d.observation_count() << " observations to "
            << f.out << '\n';
  return 0;
}

int cmd_train(const Flags& f) {
  const Dataset d = dataset_from_flags(f);
  const TrainConfig c = config_from_flags(f, d);
  const TrainResult r = train(d, c);
  Checkpoint ck = make_checkpoint(d, c, r);
  const EvalReport train_rep = evaluate(ck, EvalMode::Train, c.seed);
  const LossBreakdown& last = r.history.loss.back();
  ck.final_metrics = {{"objective", last.total},
                      {"data_term", last.data_term},
                      {"wasserstein_term", last.wasserstein_term},
                      {"weight_decay_term", last.weight_decay_term},
                      {"train_mean_ll", train_rep.mean_ll}};
  json j = checkpoint_to_json(ck);
  j["meta"] = echo_flags("train", f);
  write_json(f.out, j);
  json h = history_to_json(r.history);
  h["meta"] = echo_flags("train", f);
  const std::string hist_path = sibling_path(f.out, "history.json");
  write_json(hist_path, h);
  std::cout << "train " << summary_line(train_rep) << " steps=" << c.total_steps() << " ckpt=" << f.out
            << " history=" << hist_path << '\n';
  return 0;
}

int cmd_eval(const Flags& f) {
  const Checkpoint ck = load_checkpoint(f.ckpt);
  const EvalReport rep = evaluate(ck, eval_mode_from_string(f.mode), f.seed);
  json j = report_to_json(rep);
  j["meta"] = echo_flags("eval", f);
  if (!f.out.empty()) {
    write_json(f.out, j);
  } else {
    std::cout << j.dump() << '\n';
  }
  std::cout << summary_line(rep) << '\n';
  return 0;
}

std::vector<Eigen::VectorXd> initial_conditions_for(const Checkpoint& ck, EvalMode mode, std::uint64_t seed) {
  if (mode == EvalMode::Generalization) {
    return generalization_initial_conditions(ck.data, kGeneralizationTrajectories, seed);
  }
  std::vector<Eigen::VectorXd> x0s;
  for (const Trajectory& t : ck.data.trajectories) x0s.push_back(t.x0);
  return x0s;
}

int cmd_predict(const Flags& f) {
  const Checkpoint ck = load_checkpoint(f.ckpt);
  const EvalMode mode = eval_mode_from_string(f.mode);
  const auto x0s = initial_conditions_for(ck, mode, f.seed);
  const Eigen::VectorXd grid = linspace(0.0, ck.data.spec.horizon, kEvalGridSize);
  const auto preds = predict_states(ck.model, ck.params, ck.data, x0s, grid);
  json j;
  j["meta"] = echo_flags("predict", f);
  j["trajectories"] = json::array();
  for (std::size_t i = 0; i < preds.size(); ++i) {
    j["trajectories"].push_back({{"x0", vector_to_json(x0s[i])},
                                 {"times", vector_to_json(preds[i].times)},
                                 {"mean", matrix_to_json(preds[i].mean)},
                                 {"std", matrix_to_json(preds[i].std)}});
  }
  write_json(f.out, j);
  std::cout << "wrote predictions for " << preds.size() << " trajectories to " << f.out << '\n';
  return 0;
}

int cmd_ablate_lambda(const Flags& f) {
  const std::vector<double> grid = parse_grid(f.lambda_grid);
  const Dataset d = dataset_from_flags(f);
  const TrainConfig c = config_from_flags(f, d);
  const double base = default_lambda(d, choose_supporting_points(d));
  std::vector<Cell> cells(grid.size());
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    cells[i].multiplier = grid[i];
    cells[i].lambda = grid[i] * base;
    labels.push_back(fmt(grid[i]));
  }
  const EvalMode mode = eval_mode_from_string(f.mode);
  run_parallel(cells.size(), [&](std::size_t i) { train_and_score(d, c, mode, f.seed, cells[i]); });
  write_text(f.out, cells_csv(cells, "multiplier", labels));
  json meta = echo_flags("ablate-lambda", f);
  meta["default_lambda"] = base;
  write_json(sibling_path(f.out, "meta.json"), meta);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    std::cout << "multiplier=" << labels[i] << " lambda=" << cells[i].lambda << " mean_ll=" << cells[i].mean_ll
              << (cells[i].error.empty() ? "" : " error=" + cells[i].error) << '\n';
  }
  return 0;
}

int cmd_ablate_joint(const Flags& f) {
  const Dataset d = dataset_from_flags(f);
  const TrainConfig c = config_from_flags(f, d);
  const double base = c.lambda.value_or(default_lambda(d, choose_supporting_points(d)));
  std::vector<Cell> cells(2);
  cells[0].lambda = 0.0;
  cells[1].lambda = base;
  const std::vector<std::string> labels{"sequential", "joint"};
  const EvalMode mode = eval_mode_from_string(f.mode);
  run_parallel(cells.size(), [&](std::size_t i) { train_and_score(d, c, mode, f.seed, cells[i]); });
  write_text(f.out, cells_csv(cells, "setting", labels));
  json meta = echo_flags("ablate-joint", f);
  meta["margin"] = cells[1].mean_ll - cells[0].mean_ll;
  write_json(sibling_path(f.out, "meta.json"), meta);
  std::cout << "sequential mean_ll=" << cells[0].mean_ll << " joint mean_ll=" << cells[1].mean_ll
            << " margin=" << cells[1].mean_ll - cells[0].mean_ll << '\n';
  return 0;
}

int cmd_export_plot(const Flags& f) {
  const Checkpoint ck = load_checkpoint(f.ckpt);
  const Dataset d = f.data.empty() ? ck.data : load_dataset(f.data);
  if (d.state_dim() != ck.data.state_dim()) throw std::runtime_error("dataset and checkpoint state dimensions differ");
  std::filesystem::create_directories(f.out);
  std::vector<Eigen::VectorXd> x0s;
  for (const Trajectory& t : d.trajectories) x0s.push_back(t.x0);
  const Eigen::VectorXd grid = linspace(0.0, d.spec.horizon, kEvalGridSize);
  const auto preds = predict_states(ck.model, ck.params, ck.data, x0s, grid);

  std::ostringstream bands;
  bands << "traj,t,dim,mean,lower2sigma,upper2sigma,truth\n";
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Eigen::MatrixXd truth = integrate(d.spec.system, x0s[i], grid);
    for (Eigen::Index r = 0; r < grid.size(); ++r) {
      for (Eigen::Index k = 0; k < truth.cols(); ++k) {
        const double mu = preds[i].mean(r, k), sd = preds[i].std(r, k);
        bands << i << ',' << fmt(grid(r)) << ',' << k << ',' << fmt(mu) << ',' << fmt(mu - 2.0 * sd) << ','
              << fmt(mu + 2.0 * sd) << ',' << fmt(truth(r, k)) << '\n';
      }
    }
  }
  std::ostringstream obs;
  obs << "traj,t,dim,y_obs\n";
  for (std::size_t i = 0; i < d.trajectories.size(); ++i) {
    const Trajectory& t = d.trajectories[i];
    for (Eigen::Index r = 0; r < t.times.size(); ++r) {
      for (Eigen::Index k = 0; k < t.observations.cols(); ++k) {
        obs << i << ',' << fmt(t.times(r)) << ',' << k << ',' << fmt(t.observations(r, k)) << '\n';
      }
    }
  }
  const std::filesystem::path dir(f.out);
  write_text((dir / "bands.csv").string(), bands.str());
  write_text((dir / "observations.csv").string(), obs.str());
  write_json((dir / "meta.json").string(), echo_flags("export-plot", f));
  std::cout << "wrote bands.csv and observations.csv to " << f.out << '\n';
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Gradient-matching system identification with deep-kernel GP smoothers"};
  app.require_subcommand(1);
  Flags f;

  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", f.seed, "Random seed")->each([&](const std::string&) { f.seed_given = true; });
  };
  auto add_model_flags = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "TrainConfig JSON");
    sub->add_option("--features", f.features, "Random Fourier feature count (enables the approximate kernel)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--dynamics", f.dynamics, "neural | parametric | factorized:a1,a2,...");
  };
  auto add_mode = [&](CLI::App* sub) {
    sub->add_option("--mode", f.mode, "train | generalization")
        ->check(CLI::IsMember({"train", "generalization"}));
  };

  CLI::App* gen = app.add_subcommand("gen-data", "Generate a noisy benchmark dataset");
  gen->add_option("--preset", f.preset, "Benchmark preset")->required();
  add_seed(gen);
  gen->add_option("--out", f.out, "Output dataset JSON")->required();

  CLI::App* tr = app.add_subcommand("train", "Train a model and write a checkpoint plus history");
  tr->add_option("--data", f.data, "Dataset JSON");
  tr->add_option("--preset", f.preset, "Generate the preset dataset instead of reading --data");
  add_seed(tr);
  add_model_flags(tr);
  tr->add_option("--out", f.out, "Output checkpoint JSON")->required();

  CLI::App* ev = app.add_subcommand("eval", "Ground-truth log-likelihood of a checkpoint");
  ev->add_option("--ckpt", f.ckpt, "Checkpoint JSON")->required();
  add_mode(ev);
  add_seed(ev);
  ev->add_option("--out", f.out, "Report JSON (default: standard output)");

  CLI::App* pr = app.add_subcommand("predict", "Posterior state means and standard deviations on the evaluation grid");
  pr->add_option("--ckpt", f.ckpt, "Checkpoint JSON")->required();
  add_mode(pr);
  add_seed(pr);
  pr->add_option("--out", f.out, "Prediction JSON")->required();

  CLI::App* al = app.add_subcommand("ablate-lambda", "Train one model per lambda multiplier");
  al->add_option("--data", f.data, "Dataset JSON");
  al->add_option("--preset", f.preset, "Generate the preset dataset instead of reading --data");
  al->add_option("--lambda-grid", f.lambda_grid, "Comma-separated multipliers of |D|/|support|");
  add_seed(al);
  add_model_flags(al);
  add_mode(al);
  al->add_option("--out", f.out, "Output CSV")->required();

  CLI::App* aj = app.add_subcommand("ablate-joint", "Compare sequential smoothing (lambda = 0) with joint training");
  aj->add_option("--data", f.data, "Dataset JSON");
  aj->add_option("--preset", f.preset, "Generate the preset dataset instead of reading --data");
  add_seed(aj);
  add_model_flags(aj);
  add_mode(aj);
  aj->add_option("--out", f.out, "Output CSV")->required();

  CLI::App* ex = app.add_subcommand("export-plot", "Write band and observation CSVs for plotting");
  ex->add_option("--ckpt", f.ckpt, "Checkpoint JSON")->required();
  ex->add_option("--data", f.data, "Dataset to overlay (default: the checkpoint's training data)");
  ex->add_option("--out", f.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    validate_names(f);
    if (*gen) return cmd_gen_data(f);
    if (*tr) return cmd_train(f);
    if (*ev) return cmd_eval(f);
    if (*pr) return cmd_predict(f);
    if (*al) return cmd_ablate_lambda(f);
    if (*aj) return cmd_ablate_joint(f);
    if (*ex) return cmd_export_plot(f);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace dgm
