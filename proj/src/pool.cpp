#include "postfault/pool.hpp"

#include <cmath>
#include <sstream>

#include "postfault/checkpoint.hpp"
#include "postfault/error.hpp"

namespace postfault {

nlohmann::json trajectory_to_json(const Trajectory& t) {
  nlohmann::json j;
  j["id"] = t.id;
  j["kind"] = to_string(t.scenario.kind);
  j["tripped"] = t.scenario.tripped;
  j["t_f"] = t.scenario.t_f;
  j["t_cl"] = t.scenario.t_cl;
  j["T"] = t.scenario.T;
  j["sample_rate"] = t.scenario.sample_rate;
  j["bus_id"] = t.bus_id;
  j["values"] = t.values;
  return j;
}

Trajectory trajectory_from_json(const nlohmann::json& j) {
  Trajectory t;
  try {
    t.id = j.at("id").get<std::size_t>();
    t.scenario.kind = fault_kind_from_string(j.at("kind").get<std::string>());
    t.scenario.tripped = j.at("tripped").get<std::vector<std::size_t>>();
    t.scenario.t_f = j.at("t_f").get<double>();
    t.scenario.t_cl = j.at("t_cl").get<double>();
    t.scenario.sample_rate = j.at("sample_rate").get<double>();
    t.bus_id = j.at("bus_id").get<std::size_t>();
    t.values = j.at("values").get<std::vector<double>>();
    t.scenario.T = j.contains("T") ? j.at("T").get<double>()
                                   : static_cast<double>(t.values.size()) / t.scenario.sample_rate;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad trajectory record: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("bad trajectory record: ") + e.what());
  }
  if (!(t.scenario.sample_rate > 0.0)) throw DataError("trajectory sample rate must be positive");
  t.times.resize(t.values.size());
  for (std::size_t k = 0; k < t.values.size(); ++k) {
    t.times[k] = static_cast<double>(k + 1) / t.scenario.sample_rate;
    if (!std::isfinite(t.values[k]) || t.values[k] <= 0.0) {
      throw DataError("trajectory " + std::to_string(t.id) + " holds a non-positive value");
    }
  }
  return t;
}

std::string encode_pool(const std::vector<Trajectory>& pool) {
  std::string out;
  for (const auto& t : pool) {
    out += trajectory_to_json(t).dump();
    out += '\n';
  }
  return out;
}

std::vector<Trajectory> decode_pool(const std::string& text) {
  std::vector<Trajectory> pool;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("pool line " + std::to_string(lineno) + ": " + e.what());
    }
    pool.push_back(trajectory_from_json(j));
  }
  return pool;
}

void write_pool(const std::filesystem::path& path, const std::vector<Trajectory>& pool) {
  write_file(path, encode_pool(pool));
}

std::vector<Trajectory> read_pool(const std::filesystem::path& path) {
  return decode_pool(read_file(path));
}

}  // namespace postfault
