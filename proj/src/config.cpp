#include "postfault/config.hpp"

#include <sstream>

#include <CLI11.hpp>

#include "postfault/checkpoint.hpp"
#include "postfault/error.hpp"

namespace postfault {

namespace {

// Keep in sync with the typed views in pipeline.cpp.
const std::map<std::string, std::string>& builtin() {
  static const std::map<std::string, std::string> d = {
      {"grid.load_scale", "2.2"},
      {"grid.damping", "0.01"},
      {"grid.monitor_bus", "4"},
      {"grid.step", "0.001"},
      {"grid.max_angle", "3.141592653589793"},

      {"scenario.n1", "300"},
      {"scenario.n2", "300"},
      {"scenario.seed", "7"},
      {"scenario.t_cl", "2.0"},
      {"scenario.dtf_min", "0.2"},
      {"scenario.dtf_max", "0.5"},
      {"scenario.T", "9.0"},
      {"scenario.sample_rate", "100"},
      {"scenario.retry_budget", "100"},

      {"dataset.m", "200"},
      {"dataset.Q", "10"},
      {"dataset.train_frac", "0.7"},
      {"dataset.mesh_points", "500"},
      {"dataset.seed", "7"},

      {"net.q", "100"},
      {"net.branch_width", "100"},
      {"net.branch_depth", "3"},
      {"net.trunk_width", "100"},
      {"net.trunk_depth", "3"},

      {"train.epochs", "10000"},
      {"train.batch", "256"},
      {"train.lr", "1e-4"},
      {"train.patience", "200"},
      {"train.factor", "0.5"},
      {"train.min_lr", "1e-6"},
      {"train.threshold", "1e-4"},
      {"train.val_frac", "0.1"},
      {"train.seed", "7"},

      {"sghmc.prior_precision", "1.0"},
      {"sghmc.sigma_l", "0.01"},
      {"sghmc.step", "1e-5"},
      {"sghmc.friction", "10"},
      {"sghmc.bhat", "0"},
      {"sghmc.inner", "50"},
      {"sghmc.outer", "2000"},
      {"sghmc.burn_in", "1000"},
      {"sghmc.thinning", "5"},
      {"sghmc.ensemble", "100"},
      {"sghmc.batch", "256"},
      {"sghmc.seed", "7"},

      {"eval.level", "0.95"},
      {"eval.n_test", "100"},
      {"eval.seed", "7"},
      {"eval.noise", "0"},
      {"eval.noise_seed", "11"},
      {"eval.y_star", "2.2"},
      {"eval.profile_early", "0.70"},
      {"eval.profile_late", "0.90"},
      {"eval.profile_window", "0.5"},
      {"eval.bands", "5"},
      {"eval.chi_max", "3.0"},
      {"eval.chi_points", "61"},
      {"eval.residual_epochs", "200"},

      {"paths.out", "run"},
  };
  return d;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* kind) {
  throw ConfigError("config key '" + key + "' = '" + value + "' is not " + kind);
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.values_ = builtin();
  return c;
}

RunConfig RunConfig::from_ini(const std::string& text) {
  RunConfig c = defaults();
  c.merge_ini(text);
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file " + path.string() + " not found");
  return from_ini(read_file(path));
}

void RunConfig::merge_ini(const std::string& text) {
  std::istringstream is(text);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(is);
  } catch (const CLI::Error& e) {
    throw ConfigError(std::string("unreadable config: ") + e.what());
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    if (item.parents.size() != 1) {
      throw ConfigError("config key '" + item.fullname() + "' must sit in exactly one section");
    }
    if (item.inputs.size() != 1) throw ConfigError("config key '" + item.fullname() + "' needs one value");
    set(item.parents.front() + "." + item.name, item.inputs.front());
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::number(const std::string& key) const {
  const std::string& v = get(key);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    bad_value(key, v, "a number");
  }
  if (used != v.size()) bad_value(key, v, "a number");
  return out;
}

std::size_t RunConfig::count(const std::string& key) const {
  const std::string& v = get(key);
  std::size_t used = 0;
  unsigned long long out = 0;
  try {
    if (!v.empty() && v[0] == '-') bad_value(key, v, "a non-negative integer");
    out = std::stoull(v, &used);
  } catch (const std::logic_error&) {
    bad_value(key, v, "a non-negative integer");
  }
  if (used != v.size()) bad_value(key, v, "a non-negative integer");
  return static_cast<std::size_t>(out);
}

std::uint64_t RunConfig::seed(const std::string& key) const { return count(key); }

bool RunConfig::flag(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : values_) {
    const auto dot = k.find('.');
    j[k.substr(0, dot)][k.substr(dot + 1)] = v;
  }
  return j;
}

std::string RunConfig::to_ini() const {
  std::string out, section;
  for (const auto& [k, v] : values_) {
    const auto dot = k.find('.');
    const std::string s = k.substr(0, dot);
    if (s != section) {
      if (!out.empty()) out += "\n";
      out += "[" + s + "]\n";
      section = s;
    }
    out += k.substr(dot + 1) + " = " + v + "\n";
  }
  return out;
}

}  // namespace postfault
