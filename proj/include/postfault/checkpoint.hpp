#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "postfault/deeponet.hpp"
#include "postfault/parameters.hpp"

namespace postfault {

/// Parameters plus enough metadata to rebuild the model they belong to.
///
/// On disk: a magic line, the manifest length in bytes on its own line, the
/// JSON manifest (kind, config, params[{name, shape, offset}], blob_bytes,
/// meta), then the values as little-endian doubles in manifest order.
struct Checkpoint {
  std::string kind;  // "vanilla" or "prob"
  DeepOnetConfig config;
  ParameterVector params;
  nlohmann::json meta = nlohmann::json::object();
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint make_checkpoint(const DeepOnetParams& params);
Checkpoint make_checkpoint(const ProbDeepOnetParams& params);
DeepOnetParams vanilla_params(const Checkpoint& ckpt);
ProbDeepOnetParams prob_params(const Checkpoint& ckpt);

nlohmann::json to_json(const DeepOnetConfig& config);
DeepOnetConfig deeponet_config_from_json(const nlohmann::json& j);

/// 64-bit FNV-1a, printed as 16 hex digits.
std::string content_hash(std::string_view bytes);
std::string file_hash(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace postfault
