/**
 *  Copyright (c) 2026 by Contributors
 * @file checkpoint.cc
 * @brief Checkpoint serialization.
 */
#include "kgt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "kgt/error.hpp"

namespace kgt {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(const std::string& data, std::string path) : data_(data), path_(std::move(path)) {}

  const char* take(std::size_t n) {
    if (data_.size() - pos_ < n) throw FormatError(path_ + ": truncated checkpoint");
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint64_t u(int bytes) {
    const auto* p = reinterpret_cast<const unsigned char*>(take(bytes));
    std::uint64_t v = 0;
    for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | p[i];
    return v;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  const std::string& data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

nlohmann::ordered_json to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["entity_count"] = c.entity_count;
  j["relation_count"] = c.relation_count;
  j["layers"] = c.layers;
  j["hidden"] = c.hidden;
  j["heads"] = c.heads;
  j["experts"] = c.experts;
  j["expert_hidden"] = c.expert_hidden;
  j["top_k"] = c.top_k;
  j["dropout"] = c.dropout;
  j["tie_decoder"] = c.tie_decoder;
  j["init_std"] = c.init_std;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  ModelConfig c;
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) throw ConfigError(std::string("model config missing key: ") + key);
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("model config key has wrong type: ") + key);
    }
  };
  get("entity_count", c.entity_count);
  get("relation_count", c.relation_count);
  get("layers", c.layers);
  get("hidden", c.hidden);
  get("heads", c.heads);
  get("experts", c.experts);
  get("expert_hidden", c.expert_hidden);
  get("top_k", c.top_k);
  get("dropout", c.dropout);
  get("tie_decoder", c.tie_decoder);
  get("init_std", c.init_std);
  c.validate();
  return c;
}

void save_checkpoint(const ModelParameters<float>& params, const std::filesystem::path& path) {
  std::string out(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  const std::string config = to_json(params.config).dump();
  put_u64(out, config.size());
  out += config;
  params.visit([&](const std::string& name, const nn::Tensor<float>& t) {
    put_u64(out, name.size());
    out += name;
    put_u64(out, t.shape.size());
    for (auto d : t.shape) put_u64(out, d);
    for (float v : t.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  });
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ModelParameters<float> load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifactError("checkpoint not found: " + path.string());
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingArtifactError("cannot open checkpoint: " + path.string());
  const std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string where = path.string();
  Reader r(data, where);
  if (std::memcmp(r.take(4), kCheckpointMagic, 4) != 0) throw FormatError(where + ": bad checkpoint magic");
  if (const auto v = r.u(4); v != kCheckpointVersion)
    throw FormatError(where + ": unsupported checkpoint version " + std::to_string(v));
  const auto config_len = r.u(8);
  const char* config_ptr = r.take(config_len);
  nlohmann::json config_json;
  try {
    config_json = nlohmann::json::parse(config_ptr, config_ptr + config_len);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": bad config block: " + e.what());
  }
  ModelConfig config;
  try {
    config = model_config_from_json(config_json);
  } catch (const ConfigError& e) {
    throw FormatError(where + ": " + e.what());
  }
  auto params = allocate_parameters(config);
  params.visit([&](const std::string& name, nn::Tensor<float>& t) {
    const auto len = r.u(8);
    const std::string got(r.take(len), len);
    if (got != name) throw FormatError(where + ": expected record " + name + ", found " + got);
    const auto rank = r.u(8);
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) d = r.u(8);
    if (dims != t.shape) throw FormatError(where + ": shape mismatch for " + name);
    for (auto& v : t.values) v = std::bit_cast<float>(static_cast<std::uint32_t>(r.u(4)));
  });
  if (!r.done()) throw FormatError(where + ": trailing bytes after last record");
  return params;
}

}  // namespace kgt
