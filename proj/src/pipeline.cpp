#include "postfault/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "postfault/error.hpp"

namespace postfault {

GridModel grid_model(const RunConfig& cfg) {
  WsccOptions o;
  o.load_scale = cfg.number("grid.load_scale");
  o.damping = cfg.number("grid.damping");
  o.monitor_bus = cfg.count("grid.monitor_bus");
  if (!(o.load_scale > 0.0)) throw ConfigError("grid.load_scale must be positive");
  if (!(o.damping >= 0.0)) throw ConfigError("grid.damping must be >= 0");
  return wscc9(o);
}

SimOptions sim_options(const RunConfig& cfg) {
  SimOptions s;
  s.step = cfg.number("grid.step");
  s.max_angle = cfg.number("grid.max_angle");
  if (!(s.step > 0.0)) throw ConfigError("grid.step must be positive");
  if (!(s.max_angle > 0.0)) throw ConfigError("grid.max_angle must be positive");
  return s;
}

ScenarioOptions scenario_options(const RunConfig& cfg) {
  ScenarioOptions s;
  s.t_cl = cfg.number("scenario.t_cl");
  s.dtf_min = cfg.number("scenario.dtf_min");
  s.dtf_max = cfg.number("scenario.dtf_max");
  s.T = cfg.number("scenario.T");
  s.sample_rate = cfg.number("scenario.sample_rate");
  if (!(s.dtf_min > 0.0 && s.dtf_max >= s.dtf_min && s.dtf_max <= s.t_cl)) {
    throw ConfigError("need 0 < dtf_min <= dtf_max <= t_cl");
  }
  if (!(s.T > s.t_cl)) throw ConfigError("scenario.T must exceed t_cl");
  if (!(s.sample_rate > 0.0)) throw ConfigError("scenario.sample_rate must be positive");
  return s;
}

SplitSpec split_spec(const RunConfig& cfg) {
  SplitSpec s;
  s.t_cl = cfg.number("scenario.t_cl");
  s.T = cfg.number("scenario.T");
  s.m = cfg.count("dataset.m");
  s.Q = cfg.count("dataset.Q");
  s.train_frac = cfg.number("dataset.train_frac");
  s.mesh_points = cfg.count("dataset.mesh_points");
  s.validate();
  return s;
}

DeepOnetConfig net_config(const RunConfig& cfg) {
  DeepOnetConfig c;
  c.m = cfg.count("dataset.m");
  c.q = cfg.count("net.q");
  c.branch_width = cfg.count("net.branch_width");
  c.branch_depth = cfg.count("net.branch_depth");
  c.trunk_width = cfg.count("net.trunk_width");
  c.trunk_depth = cfg.count("net.trunk_depth");
  c.validate();
  return c;
}

TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.epochs = cfg.count("train.epochs");
  t.batch_size = cfg.count("train.batch");
  t.lr = cfg.number("train.lr");
  t.patience = cfg.count("train.patience");
  t.factor = cfg.number("train.factor");
  t.min_lr = cfg.number("train.min_lr");
  t.threshold = cfg.number("train.threshold");
  t.val_frac = cfg.number("train.val_frac");
  t.seed = cfg.seed("train.seed");
  t.validate();
  return t;
}

BayesConfig bayes_config(const RunConfig& cfg) {
  BayesConfig b;
  b.prior_precision = cfg.number("sghmc.prior_precision");
  b.sigma_l = cfg.number("sghmc.sigma_l");
  b.step = cfg.number("sghmc.step");
  b.friction = cfg.number("sghmc.friction");
  b.bhat = cfg.number("sghmc.bhat");
  b.inner = cfg.count("sghmc.inner");
  b.outer = cfg.count("sghmc.outer");
  b.burn_in = cfg.count("sghmc.burn_in");
  b.thinning = cfg.count("sghmc.thinning");
  b.ensemble = cfg.count("sghmc.ensemble");
  b.batch = cfg.count("sghmc.batch");
  b.seed = cfg.seed("sghmc.seed");
  b.validate();
  return b;
}

std::vector<double> EvalConfig::chis() const {
  std::vector<double> out(chi_points);
  for (std::size_t i = 0; i < chi_points; ++i) {
    out[i] = chi_points == 1 ? chi_max
                             : chi_max * static_cast<double>(i) / static_cast<double>(chi_points - 1);
  }
  return out;
}

EvalConfig eval_config(const RunConfig& cfg) {
  EvalConfig e;
  e.level = cfg.number("eval.level");
  e.n_test = cfg.count("eval.n_test");
  e.seed = cfg.seed("eval.seed");
  e.noise = cfg.number("eval.noise");
  e.noise_seed = cfg.seed("eval.noise_seed");
  e.y_star = cfg.number("eval.y_star");
  e.profile.t_cl = cfg.number("scenario.t_cl");
  e.profile.early = cfg.number("eval.profile_early");
  e.profile.late = cfg.number("eval.profile_late");
  e.profile.window = cfg.number("eval.profile_window");
  e.bands = cfg.count("eval.bands");
  e.chi_max = cfg.number("eval.chi_max");
  e.chi_points = cfg.count("eval.chi_points");
  e.residual_epochs = cfg.count("eval.residual_epochs");
  if (!(e.level > 0.0 && e.level < 1.0)) throw ConfigError("eval.level must be in (0, 1)");
  if (e.n_test < 1) throw ConfigError("eval.n_test must be >= 1");
  if (!(e.noise >= 0.0)) throw ConfigError("eval.noise must be >= 0");
  if (!(e.chi_max >= 0.0) || e.chi_points < 1) throw ConfigError("bad chi grid");
  if (e.residual_epochs < 1) throw ConfigError("eval.residual_epochs must be >= 1");
  return e;
}

Pools simulate_pools(const RunConfig& cfg) {
  const GridModel grid = grid_model(cfg);
  const auto so = scenario_options(cfg);
  const auto sim = sim_options(cfg);
  const std::size_t n1 = cfg.count("scenario.n1");
  const std::size_t n2 = cfg.count("scenario.n2");
  const std::uint64_t seed = cfg.seed("scenario.seed");
  const std::size_t budget = cfg.count("scenario.retry_budget");
  if (n1 < 1 || n2 < 1) throw ConfigError("both pools need at least one trajectory");
  Pools p;
  p.n1 = generate_pool(grid, n1, FaultKind::N1, seed, budget, &p.n1_stats, so, sim, 0);
  p.n2 = generate_pool(grid, n2, FaultKind::N2, seed, budget, &p.n2_stats, so, sim, n1);
  return p;
}

DatasetBundle build_dataset(const std::vector<Trajectory>& n1, const std::vector<Trajectory>& n2,
                            const RunConfig& cfg) {
  const SplitSpec spec = split_spec(cfg);
  const std::uint64_t seed = cfg.seed("dataset.seed");
  PoolSplit split = split_pools(n1, n2, spec.train_frac, seed);
  DatasetBundle b;
  b.train = build_train(split.train, spec, seed);
  b.test = build_test(split.test, spec);
  b.train_pool = std::move(split.train);
  b.test_pool = std::move(split.test);
  return b;
}

std::vector<TestCase> with_input_noise(const std::vector<TestCase>& cases, double sigma,
                                       std::uint64_t seed) {
  std::vector<TestCase> out = cases;
  if (sigma == 0.0) return out;
  for (auto& tc : out) tc.u = add_input_noise(tc.u, sigma, seed, tc.trajectory_id);
  return out;
}

void require_compatible(const DeepOnetConfig& net, const std::vector<TestCase>& cases) {
  for (const auto& tc : cases) {
    if (tc.u.size() != net.m) {
      throw DimensionError("model expects m=" + std::to_string(net.m) + " sensors, dataset has " +
                           std::to_string(tc.u.size()));
    }
  }
}

std::string to_string(Which w) {
  switch (w) {
    case Which::vanilla: return "vanilla";
    case Which::prob: return "prob";
    case Which::bayes: return "bayes";
  }
  return "?";
}

Which which_from_string(const std::string& s) {
  if (s == "vanilla") return Which::vanilla;
  if (s == "prob") return Which::prob;
  if (s == "bayes") return Which::bayes;
  throw ConfigError("unknown model '" + s + "' (expected vanilla, prob or bayes)");
}

DeepOnetConfig Predictor::config() const {
  return which == Which::bayes ? ensemble.config : checkpoint.config;
}

TrajectoryReport Predictor::predict(const TestCase& tc) const {
  TrajectoryReport r;
  r.trajectory_id = tc.trajectory_id;
  r.kind = tc.kind;
  r.y = tc.y_mesh;
  r.targets = tc.targets;
  switch (which) {
    case Which::vanilla:
      r.mean = postfault::predict(vanilla_params(checkpoint), tc.u, tc.y_mesh);
      break;
    case Which::prob: {
      for (const auto& g : predict_prob(prob_params(checkpoint), tc.u, tc.y_mesh)) {
        r.mean.push_back(g.mu);
        r.std.push_back(g.sigma);
      }
      break;
    }
    case Which::bayes: {
      auto e = ensemble_predict(ensemble, tc.u, tc.y_mesh);
      r.mean = std::move(e.mean);
      r.std = std::move(e.std);
      break;
    }
  }
  return r;
}

PredictionReport evaluate(const Predictor& model, const std::vector<TestCase>& cases,
                          const EvalConfig& ev) {
  require_compatible(model.config(), cases);
  const std::size_t k = std::min(ev.n_test, cases.size());
  std::vector<TrajectoryReport> rows;
  for (std::size_t i : select_subset(cases.size(), k, ev.seed)) rows.push_back(model.predict(cases[i]));
  return summarize(to_string(model.which), std::move(rows), ev.level, ev.seed);
}

std::vector<double> training_residuals(const DeepOnetParams& params,
                                       const std::vector<OperatorSample>& data) {
  std::vector<double> out;
  out.reserve(data.size());
  constexpr std::size_t chunk = 1024;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t end = std::min(data.size(), start + chunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    Batch b = collate(data, idx);
    Tape tape;
    Var pred = pointwise(bind(tape, params, false), tape.constant(b.u), tape.constant(b.y));
    for (std::size_t i = 0; i < idx.size(); ++i) out.push_back(pred.value()[i] - b.target[i]);
  }
  return out;
}

void save_ensemble(const std::filesystem::path& dir, const BayesRun& run, const BayesConfig& cfg,
                   const nlohmann::json& run_config) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["kind"] = "bayes-ensemble";
  manifest["config_hash"] = run.ensemble.config_hash;
  manifest["net"] = to_json(run.ensemble.config);
  manifest["sghmc"] = to_json(cfg);
  manifest["run_config"] = run_config;
  manifest["members"] = nlohmann::json::array();
  for (std::size_t i = 0; i < run.ensemble.members.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "member_%03zu.ckpt", i);
    Checkpoint c{"vanilla", run.ensemble.config, run.ensemble.members[i],
                 {{"iteration", run.ensemble.iterations[i]}}};
    const std::string bytes = encode_checkpoint(c);
    write_file(dir / name, bytes);
    manifest["members"].push_back(
        {{"file", name}, {"iteration", run.ensemble.iterations[i]}, {"hash", content_hash(bytes)}});
  }
  write_file(dir / "ensemble.json", manifest.dump(1) + "\n");
}

PosteriorEnsemble load_ensemble(const std::filesystem::path& manifest_path) {
  if (!std::filesystem::exists(manifest_path)) {
    throw DataError("ensemble manifest " + manifest_path.string() + " not found");
  }
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad ensemble manifest: ") + e.what());
  }
  PosteriorEnsemble ens;
  try {
    if (m.at("kind") != "bayes-ensemble") throw DataError("not an ensemble manifest");
    ens.config = deeponet_config_from_json(m.at("net"));
    ens.config_hash = m.at("config_hash").get<std::string>();
    const auto dir = manifest_path.parent_path();
    for (const auto& e : m.at("members")) {
      const std::string bytes = read_file(dir / e.at("file").get<std::string>());
      if (content_hash(bytes) != e.at("hash").get<std::string>()) {
        throw DataError("ensemble member " + e.at("file").get<std::string>() + " fails its hash");
      }
      Checkpoint c = decode_checkpoint(bytes);
      if (c.kind != "vanilla") throw DataError("ensemble member is not a vanilla checkpoint");
      ens.members.push_back(c.params);
      ens.iterations.push_back(e.at("iteration").get<std::size_t>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad ensemble manifest: ") + e.what());
  }
  if (ens.members.empty()) throw DataError("ensemble has no members");
  return ens;
}

std::string emit(const std::filesystem::path& path, const std::string& text) {
  write_file(path, text);
  return content_hash(text);
}

}  // namespace postfault
