/**
 *  Copyright (c) 2026 by Contributors
 * @file kgt/checkpoint.hpp
 * @brief Self-describing binary checkpoint: magic, version, JSON config
 *        block, then named float32 parameter records.
 */
#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "kgt/model.hpp"

namespace kgt {

inline constexpr char kCheckpointMagic[4] = {'K', 'G', 'T', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

nlohmann::ordered_json to_json(const ModelConfig& config);
/// Throws ConfigError naming the offending key.
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Writes to a sibling temporary file and renames it into place.
void save_checkpoint(const ModelParameters<float>& params, const std::filesystem::path& path);
/// Throws MissingArtifactError when absent and FormatError on bad magic,
/// version, truncation or a record that disagrees with the config.
ModelParameters<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace kgt
