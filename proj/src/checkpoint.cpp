#include "postfault/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "postfault/error.hpp"

namespace postfault {

namespace {

constexpr std::string_view kMagic = "POSTFAULT-CHECKPOINT v1\n";

void put_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

nlohmann::json to_json(const DeepOnetConfig& c) {
  return {{"m", c.m},
          {"q", c.q},
          {"branch_width", c.branch_width},
          {"branch_depth", c.branch_depth},
          {"trunk_width", c.trunk_width},
          {"trunk_depth", c.trunk_depth}};
}

DeepOnetConfig deeponet_config_from_json(const nlohmann::json& j) {
  try {
    DeepOnetConfig c;
    c.m = j.at("m").get<std::size_t>();
    c.q = j.at("q").get<std::size_t>();
    c.branch_width = j.at("branch_width").get<std::size_t>();
    c.branch_depth = j.at("branch_depth").get<std::size_t>();
    c.trunk_width = j.at("trunk_width").get<std::size_t>();
    c.trunk_depth = j.at("trunk_depth").get<std::size_t>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad network config: ") + e.what());
  }
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& s : ckpt.params.slots()) {
    params.push_back({{"name", s.name}, {"shape", s.shape}, {"offset", s.offset * 8}});
  }
  nlohmann::json manifest = {{"kind", ckpt.kind},
                             {"config", to_json(ckpt.config)},
                             {"params", params},
                             {"blob_bytes", ckpt.params.size() * 8},
                             {"meta", ckpt.meta}};
  const std::string text = manifest.dump(1);

  std::string out(kMagic);
  out += std::to_string(text.size());
  out += '\n';
  out += text;
  out.reserve(out.size() + ckpt.params.size() * 8);
  for (double v : ckpt.params.values()) put_le(out, v);
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.substr(0, kMagic.size()) != kMagic) throw DataError("not a checkpoint container");
  bytes.remove_prefix(kMagic.size());
  const auto nl = bytes.find('\n');
  if (nl == std::string_view::npos) throw DataError("truncated checkpoint header");
  std::size_t manifest_len = 0;
  try {
    manifest_len = std::stoull(std::string(bytes.substr(0, nl)));
  } catch (const std::exception&) {
    throw DataError("bad manifest length in checkpoint");
  }
  bytes.remove_prefix(nl + 1);
  if (bytes.size() < manifest_len) throw DataError("truncated checkpoint manifest");

  Checkpoint ckpt;
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(0, manifest_len));
    ckpt.kind = manifest.at("kind").get<std::string>();
    ckpt.meta = manifest.value("meta", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad checkpoint manifest: ") + e.what());
  }
  ckpt.config = deeponet_config_from_json(manifest.at("config"));
  bytes.remove_prefix(manifest_len);

  const std::size_t blob_bytes = manifest.at("blob_bytes").get<std::size_t>();
  if (bytes.size() != blob_bytes || blob_bytes % 8 != 0) {
    throw DataError("checkpoint blob has " + std::to_string(bytes.size()) + " bytes, manifest says " +
                    std::to_string(blob_bytes));
  }
  for (const auto& p : manifest.at("params")) {
    Shape shape = p.at("shape").get<Shape>();
    const std::size_t offset = p.at("offset").get<std::size_t>();
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    if (offset % 8 != 0 || offset + 8 * n > blob_bytes || offset != 8 * ckpt.params.size()) {
      throw DataError("checkpoint parameter '" + p.at("name").get<std::string>() +
                      "' has an inconsistent offset");
    }
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = get_le(bytes.data() + offset + 8 * i);
    ckpt.params.append(p.at("name").get<std::string>(), Tensor(std::move(shape), std::move(values)));
  }
  if (ckpt.params.size() * 8 != blob_bytes) throw DataError("checkpoint blob has trailing values");
  return ckpt;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

Checkpoint make_checkpoint(const DeepOnetParams& params) {
  return Checkpoint{"vanilla", params.config, params.to_vector(), nlohmann::json::object()};
}

Checkpoint make_checkpoint(const ProbDeepOnetParams& params) {
  return Checkpoint{"prob", params.config, params.to_vector(), nlohmann::json::object()};
}

DeepOnetParams vanilla_params(const Checkpoint& ckpt) {
  if (ckpt.kind != "vanilla") throw DataError("checkpoint holds a '" + ckpt.kind + "' model");
  return DeepOnetParams::from_vector(ckpt.params, ckpt.config);
}

ProbDeepOnetParams prob_params(const Checkpoint& ckpt) {
  if (ckpt.kind != "prob") throw DataError("checkpoint holds a '" + ckpt.kind + "' model");
  return ProbDeepOnetParams::from_vector(ckpt.params, ckpt.config);
}

std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const std::filesystem::path& path) { return content_hash(read_file(path)); }

}  // namespace postfault
