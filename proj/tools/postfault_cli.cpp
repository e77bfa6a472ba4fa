// postfault: command-line front end for the post-fault DeepONet pipeline.
//
// Every subcommand reads one RunConfig (built-in defaults, then --config,
// then --set key=value, then the subcommand's own flags) and writes into
// paths.out. Each stage leaves a JSON manifest holding the merged config and
// the hash of every file it wrote.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "postfault/error.hpp"
#include "postfault/pipeline.hpp"
#include "postfault/pool.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace postfault;

namespace {

struct Options {
  std::string config_file;
  std::string out;
  std::vector<std::string> sets;
  std::map<std::string, std::string> raw;
  bool quiet = false;
};

std::string& flag(Options& o, const std::string& key) { return o.raw[key]; }

RunConfig resolve(const Options& o) {
  RunConfig cfg = o.config_file.empty() ? RunConfig::defaults() : RunConfig::load(o.config_file);
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& [key, value] : o.raw) {
    if (!value.empty()) cfg.set(key, value);
  }
  if (!o.out.empty()) cfg.set("paths.out", o.out);
  return cfg;
}

fs::path out_dir(const RunConfig& cfg) { return cfg.get("paths.out"); }

void log(const Options& o, const std::string& msg) {
  if (!o.quiet) std::cerr << msg << "\n";
}

// Collects written files and their hashes, then writes the manifest.
class Stage {
 public:
  Stage(std::string command, const RunConfig& cfg, fs::path dir)
      : command_(std::move(command)), cfg_(cfg), dir_(std::move(dir)) {
    fs::create_directories(dir_);
  }

  void text(const std::string& name, const std::string& content) {
    files_[name] = emit(dir_ / name, content);
  }
  void record(const std::string& name) { files_[name] = file_hash(dir_ / name); }
  json& extra() { return extra_; }

  // Re-hashes every output before declaring the stage complete.
  void finish(const std::string& manifest_name, const std::string& status = "complete") {
    for (const auto& [name, hash] : files_.items()) {
      if (file_hash(dir_ / name) != hash.get<std::string>()) {
        throw DataError(name + " changed after it was written");
      }
    }
    json m = extra_;
    m["command"] = command_;
    m["status"] = status;
    m["config"] = cfg_.to_json();
    m["files"] = files_;
    write_file(dir_ / manifest_name, m.dump(1) + "\n");
  }

 private:
  std::string command_;
  const RunConfig& cfg_;
  fs::path dir_;
  json files_ = json::object();
  json extra_ = json::object();
};

Pools load_pools(const RunConfig& cfg) {
  const fs::path dir = out_dir(cfg) / "pools";
  const fs::path manifest = dir / "manifest.json";
  if (!fs::exists(manifest)) throw DataError("no pools under " + dir.string() + "; run simulate first");
  const json m = json::parse(read_file(manifest));
  for (const auto& [name, hash] : m.at("files").items()) {
    if (file_hash(dir / name) != hash.get<std::string>()) {
      throw DataError(name + " does not match its manifest");
    }
  }
  Pools p;
  p.n1 = read_pool(dir / "n1.jsonl");
  p.n2 = read_pool(dir / "n2.jsonl");
  return p;
}

DatasetBundle load_dataset(const RunConfig& cfg) {
  Pools p = load_pools(cfg);
  return build_dataset(p.n1, p.n2, cfg);
}

int cmd_simulate(const Options& o) {
  const RunConfig cfg = resolve(o);
  Pools p = simulate_pools(cfg);
  Stage st("simulate", cfg, out_dir(cfg) / "pools");
  st.text("n1.jsonl", encode_pool(p.n1));
  st.text("n2.jsonl", encode_pool(p.n2));
  st.extra()["accepted"] = {{"n1", p.n1_stats.accepted}, {"n2", p.n2_stats.accepted}};
  st.extra()["rejected"] = {{"n1", p.n1_stats.rejected}, {"n2", p.n2_stats.rejected}};
  st.finish("manifest.json");
  std::printf("N-1: %zu accepted, %zu rejected\nN-2: %zu accepted, %zu rejected\n",
              p.n1_stats.accepted, p.n1_stats.rejected, p.n2_stats.accepted, p.n2_stats.rejected);
  return 0;
}

int cmd_dataset(const Options& o) {
  const RunConfig cfg = resolve(o);
  DatasetBundle d = load_dataset(cfg);
  Stage st("dataset", cfg, out_dir(cfg) / "dataset");
  std::string train = "trajectory_id,query_index,y,target\n";
  char line[128];
  for (const auto& s : d.train) {
    std::snprintf(line, sizeof line, "%zu,%zu,%.17g,%.17g\n", s.trajectory_id, s.query_index, s.y,
                  s.target);
    train += line;
  }
  st.text("train_samples.csv", train);
  std::string test = "trajectory_id,kind\n";
  for (const auto& tc : d.test) test += std::to_string(tc.trajectory_id) + "," + to_string(tc.kind) + "\n";
  st.text("test_trajectories.csv", test);
  st.extra()["train_trajectories"] = d.train_pool.size();
  st.extra()["test_trajectories"] = d.test.size();
  st.extra()["train_samples"] = d.train.size();
  st.finish("manifest.json");
  std::printf("train: %zu trajectories, %zu samples\ntest: %zu trajectories\n", d.train_pool.size(),
              d.train.size(), d.test.size());
  return 0;
}

int cmd_train(const Options& o, const std::string& model) {
  const RunConfig cfg = resolve(o);
  const ModelKind kind = model_kind_from_string(model);
  const TrainConfig tc = train_config(cfg);
  const DeepOnetConfig net = net_config(cfg);
  DatasetBundle d = load_dataset(cfg);
  Stage st("train", cfg, out_dir(cfg));
  const std::size_t every = std::max<std::size_t>(1, tc.epochs / 20);
  auto progress = [&](const EpochRecord& r) {
    if (r.epoch % every == 0 || r.epoch == tc.epochs) {
      char msg[160];
      std::snprintf(msg, sizeof msg, "epoch %zu  loss %.6g  val %.6g  lr %.3g", r.epoch, r.train_loss,
                    r.val_loss, r.lr);
      log(o, msg);
    }
  };
  FitResult res;
  try {
    res = fit(kind, d.train, net, tc, progress);
  } catch (const TrainingDiverged& e) {
    st.text(model + "_loss.csv", history_csv(e.history()));
    st.extra()["error"] = e.what();
    st.finish(model + ".json", "failed");
    throw;
  }
  const std::string ckpt = encode_checkpoint(res.best);
  st.text(model + ".ckpt", ckpt);
  st.text(model + "_loss.csv", history_csv(res.history));
  st.extra()["best_epoch"] = res.best_epoch;
  st.extra()["best_loss"] = res.best_loss;
  st.finish(model + ".json");
  std::printf("%s: best epoch %zu, loss %.6g, checkpoint %s\n", model.c_str(), res.best_epoch,
              res.best_loss, (out_dir(cfg) / (model + ".ckpt")).string().c_str());
  return 0;
}

int cmd_sghmc(const Options& o, const std::string& init) {
  const RunConfig cfg = resolve(o);
  const BayesConfig bc = bayes_config(cfg);
  const fs::path init_path = init.empty() ? out_dir(cfg) / "vanilla.ckpt" : fs::path(init);
  if (!fs::exists(init_path)) throw DataError("initial checkpoint " + init_path.string() + " not found");
  const Checkpoint start = load_checkpoint(init_path);
  DatasetBundle d = load_dataset(cfg);
  const std::size_t every = std::max<std::size_t>(1, bc.outer / 20);
  BayesRun run = sghmc_run(d.train, start, bc, [&](std::size_t it, double u) {
    if ((it + 1) % every == 0) log(o, "outer " + std::to_string(it + 1) + "  U " + std::to_string(u));
  });
  const fs::path dir = out_dir(cfg) / "bayes";
  save_ensemble(dir, run, bc, cfg.to_json());
  Stage st("sghmc", cfg, dir);
  st.text("u_trace.csv", u_trace_csv(run.u_trace));
  st.record("ensemble.json");
  for (std::size_t i = 0; i < run.ensemble.members.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "member_%03zu.ckpt", i);
    st.record(name);
  }
  st.extra()["init"] = init_path.string();
  st.extra()["init_hash"] = file_hash(init_path);
  st.finish("sghmc.json");
  std::printf("bayes: %zu members, manifest %s\n", run.ensemble.members.size(),
              (dir / "ensemble.json").string().c_str());
  return 0;
}

Predictor load_predictor(const RunConfig& cfg, const std::string& which_s, const std::string& path) {
  Predictor p;
  p.which = which_from_string(which_s);
  if (p.which == Which::bayes) {
    const fs::path manifest = path.empty() ? out_dir(cfg) / "bayes" / "ensemble.json" : fs::path(path);
    p.ensemble = load_ensemble(manifest);
    return p;
  }
  const fs::path ckpt = path.empty() ? out_dir(cfg) / (which_s + ".ckpt") : fs::path(path);
  if (!fs::exists(ckpt)) throw DataError("checkpoint " + ckpt.string() + " not found");
  p.checkpoint = load_checkpoint(ckpt);
  if (p.checkpoint.kind != which_s) {
    throw ConfigError(ckpt.string() + " holds a " + p.checkpoint.kind + " model, not " + which_s);
  }
  return p;
}

// Loads the model and the test set, checks they fit together.
struct EvalInputs {
  RunConfig cfg;
  EvalConfig ev;
  Predictor model;
  std::vector<TestCase> cases;
};

EvalInputs eval_inputs(const Options& o, const std::string& which, const std::string& path) {
  EvalInputs in{resolve(o), {}, {}, {}};
  in.ev = eval_config(in.cfg);
  in.model = load_predictor(in.cfg, which, path);
  const DeepOnetConfig net = in.model.config();
  if (net.m != in.cfg.count("dataset.m")) {
    throw DimensionError("model has m=" + std::to_string(net.m) + " but dataset.m=" +
                         in.cfg.get("dataset.m"));
  }
  if (net.q != in.cfg.count("net.q")) {
    throw DimensionError("model has q=" + std::to_string(net.q) + " but net.q=" + in.cfg.get("net.q"));
  }
  DatasetBundle d = load_dataset(in.cfg);
  in.cases = with_input_noise(d.test, in.ev.noise, in.ev.noise_seed);
  require_compatible(net, in.cases);
  return in;
}

std::string run_name(const std::string& which, const EvalConfig& ev) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s_l%g", which.c_str(), 100.0 * ev.level);
  std::string s = buf;
  if (ev.noise > 0.0) {
    std::snprintf(buf, sizeof buf, "_noise%g", ev.noise);
    s += buf;
  }
  return s;
}

std::string band_name(const TrajectoryReport& r) {
  return "band_" + std::to_string(r.trajectory_id) + ".csv";
}

int cmd_predict(const Options& o, const std::string& which, const std::string& path) {
  EvalInputs in = eval_inputs(o, which, path);
  PredictionReport rep = evaluate(in.model, in.cases, in.ev);
  Stage st("predict", in.cfg, out_dir(in.cfg) / "predict" / run_name(which, in.ev));
  for (const auto& r : rep.rows) st.text(band_name(r), band_csv(r, in.ev.level));
  st.finish("manifest.json");
  std::printf("%zu trajectories predicted\n", rep.rows.size());
  return 0;
}

int cmd_evaluate(const Options& o, const std::string& which, const std::string& path) {
  EvalInputs in = eval_inputs(o, which, path);
  PredictionReport rep = evaluate(in.model, in.cases, in.ev);
  Stage st("evaluate", in.cfg, out_dir(in.cfg) / "eval" / run_name(which, in.ev));
  st.text("summary.csv", summary_csv({rep}));
  st.text("trajectories.csv", trajectory_csv(rep));
  if (in.model.which != Which::vanilla) {
    const auto chis = in.ev.chis();
    st.text("chi.csv", chi_csv(chis, chi_coverage_curve(rep.rows, chis)));
  }
  for (std::size_t i = 0; i < std::min(in.ev.bands, rep.rows.size()); ++i) {
    st.text(band_name(rep.rows[i]), band_csv(rep.rows[i], in.ev.level));
  }
  st.finish("manifest.json");
  std::printf("%s", summary_csv({rep}).c_str());
  return 0;
}

int cmd_alarms(const Options& o, const std::string& which, const std::string& path) {
  EvalInputs in = eval_inputs(o, which, path);
  if (in.model.which == Which::vanilla) throw ConfigError("alarms need a model with uncertainty");
  PredictionReport rep = evaluate(in.model, in.cases, in.ev);
  AlarmReport ar = alarm_analysis(rep.rows, in.ev.profile, in.ev.y_star, in.ev.level);
  Stage st("alarms", in.cfg, out_dir(in.cfg) / "alarms" / run_name(which, in.ev));
  st.text("alarms.csv", alarm_csv(ar));
  const std::string summary = alarm_summary_csv({{which, ar}});
  st.text("summary.csv", summary);
  st.finish("manifest.json");
  std::printf("%s", summary.c_str());
  return 0;
}

int cmd_residuals(const Options& o) {
  const RunConfig cfg = resolve(o);
  const EvalConfig ev = eval_config(cfg);
  TrainConfig tc = train_config(cfg);
  tc.epochs = ev.residual_epochs;
  DatasetBundle d = load_dataset(cfg);
  FitResult res = fit(ModelKind::vanilla, d.train, net_config(cfg), tc);
  const auto r = training_residuals(vanilla_params(res.best), d.train);
  NormalityResult nr = residual_normality(r);
  Stage st("residuals", cfg, out_dir(cfg) / "residuals");
  st.text("normality.csv", normality_csv(nr));
  st.extra()["skewness"] = nr.skewness;
  st.extra()["excess_kurtosis"] = nr.excess_kurtosis;
  st.extra()["normal"] = nr.normal;
  st.finish("manifest.json");
  std::printf("skewness %.4f  excess kurtosis %.4f  verdict %s\n", nr.skewness, nr.excess_kurtosis,
              nr.normal ? "normal" : "not normal");
  return 0;
}

// Flags shared by every subcommand.
void common(CLI::App* sub, Options& o) {
  sub->add_option("-c,--config", o.config_file, "INI config file")->check(CLI::ExistingFile);
  sub->add_option("-o,--out", o.out, "Output directory (paths.out)");
  sub->add_option("--set", o.sets, "Override a config key, e.g. --set train.lr=3e-4");
  sub->add_flag("-q,--quiet", o.quiet, "No progress output");
}

void keyed(CLI::App* sub, Options& o, const std::string& name, const std::string& key,
           const std::string& help) {
  sub->add_option(name, flag(o, key), help + " (" + key + ")");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DeepONet toolkit for post-fault power-grid trajectories"};
  app.require_subcommand(1);
  Options o;
  std::string model = "vanilla", which = "vanilla", init, path;

  auto* sim = app.add_subcommand("simulate", "Simulate the N-1 and N-2 trajectory pools");
  common(sim, o);
  keyed(sim, o, "--n1", "scenario.n1", "N-1 pool size");
  keyed(sim, o, "--n2", "scenario.n2", "N-2 pool size");
  keyed(sim, o, "--seed", "scenario.seed", "Scenario seed");

  auto* ds = app.add_subcommand("dataset", "Split the pools and build operator samples");
  common(ds, o);
  keyed(ds, o, "--seed", "dataset.seed", "Split and query seed");

  auto* tr = app.add_subcommand("train", "Train a vanilla or probabilistic DeepONet");
  common(tr, o);
  tr->add_option("--model", model, "vanilla or prob")->check(CLI::IsMember({"vanilla", "prob"}));
  keyed(tr, o, "--epochs", "train.epochs", "Training epochs");
  keyed(tr, o, "--lr", "train.lr", "Initial learning rate");
  keyed(tr, o, "--seed", "train.seed", "Training seed");

  auto* sg = app.add_subcommand("sghmc", "Sample a Bayesian DeepONet ensemble with SGHMC");
  common(sg, o);
  sg->add_option("--init", init, "Starting checkpoint (default <out>/vanilla.ckpt)");
  keyed(sg, o, "--seed", "sghmc.seed", "Sampler seed");
  keyed(sg, o, "--step", "sghmc.step", "Step size");
  keyed(sg, o, "--outer", "sghmc.outer", "Outer iterations");

  const std::vector<std::string> kinds = {"vanilla", "prob", "bayes"};
  auto model_flags = [&](CLI::App* sub) {
    common(sub, o);
    sub->add_option("--which", which, "vanilla, prob or bayes")->check(CLI::IsMember(kinds));
    sub->add_option("--model-path", path,
                    "Checkpoint or ensemble manifest (default under <out>)");
    keyed(sub, o, "--noise", "eval.noise", "Input noise sigma");
    keyed(sub, o, "--level", "eval.level", "Confidence level");
    keyed(sub, o, "--n-test", "eval.n_test", "Test trajectories scored");
  };
  auto* pr = app.add_subcommand("predict", "Write prediction bands for the scored test trajectories");
  model_flags(pr);
  auto* ev = app.add_subcommand("evaluate", "Error, coverage and chi-curve reports");
  model_flags(ev);
  auto* al = app.add_subcommand("alarms", "Under-voltage alarm analysis");
  model_flags(al);
  keyed(al, o, "--y-star", "eval.y_star", "Time at which the profile is checked");
  auto* rs = app.add_subcommand("residuals", "Normality check of vanilla training residuals");
  common(rs, o);
  keyed(rs, o, "--epochs", "eval.residual_epochs", "Training epochs before the check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(o);
    if (ds->parsed()) return cmd_dataset(o);
    if (tr->parsed()) return cmd_train(o, model);
    if (sg->parsed()) return cmd_sghmc(o, init);
    if (pr->parsed()) return cmd_predict(o, which, path);
    if (ev->parsed()) return cmd_evaluate(o, which, path);
    if (al->parsed()) return cmd_alarms(o, which, path);
    if (rs->parsed()) return cmd_residuals(o);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
