#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "postfault/gridsim.hpp"

namespace postfault {

/// One JSON object per line: {id, kind, tripped, t_f, t_cl, T, sample_rate, bus_id, values}.
std::string encode_pool(const std::vector<Trajectory>& pool);
std::vector<Trajectory> decode_pool(const std::string& text);

void write_pool(const std::filesystem::path& path, const std::vector<Trajectory>& pool);
std::vector<Trajectory> read_pool(const std::filesystem::path& path);

nlohmann::json trajectory_to_json(const Trajectory& t);
Trajectory trajectory_from_json(const nlohmann::json& j);

}  // namespace postfault
