/**
 *  Copyright (c) 2026 by Contributors
 * @file kgt/config.hpp
 * @brief Flat `key = value` configuration with dotted section keys, and the
 *        pipeline configuration assembled from it.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "kgt/graph.hpp"
#include "kgt/model.hpp"
#include "kgt/query.hpp"
#include "kgt/training.hpp"

namespace kgt {

/// Lines are `key = value`; `#` starts a comment; blank lines are ignored.
/// Typed getters record which keys were read so unknown keys can be reported.
class ConfigFile {
 public:
  /// Throws ParseError with the line number on malformed lines or repeated keys.
  static ConfigFile parse(std::string_view text, const std::string& source = "<config>");
  static ConfigFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.contains(key); }
  void set(const std::string& key, std::string value) { entries_[key] = std::move(value); }
  const std::map<std::string, std::string>& entries() const { return entries_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::optional<std::string> get_optional(const std::string& key) const;

  /// Throws ConfigError listing every key no getter asked for.
  void reject_unknown() const;

  /// Canonical `key=value\n` lines in key order.
  std::string canonical() const;

 private:
  std::string source_;
  std::map<std::string, std::string> entries_;
  mutable std::set<std::string> read_;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view data);

struct QueryGenConfig {
  std::vector<QueryType> train_types{std::begin(kTrainableQueryTypes), std::end(kTrainableQueryTypes)};
  std::vector<QueryType> eval_types{std::begin(kAllQueryTypes), std::end(kAllQueryTypes)};
  std::size_t train_count = 200;
  std::size_t valid_count = 50;
  std::size_t test_count = 50;
  std::size_t max_answers = 100;
  std::size_t attempts_per_query = 200;
  bool allow_fewer = false;
  /// Per-type overrides, e.g. `queries.train_count.1p`.
  std::map<std::pair<QuerySplit, QueryType>, std::size_t> count_overrides;

  std::size_t count(QuerySplit split, QueryType type) const;
};

struct PipelineConfig {
  std::filesystem::path data_dir;
  SplitLayout layout = SplitLayout::kCumulative;
  std::filesystem::path output_dir = "kgt_out";
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  /// Architecture only; vocabulary sizes come from the ingested data.
  ModelConfig model;
  TrainConfig stage1 = default_train_config(Stage::kStage1);
  TrainConfig stage2 = default_train_config(Stage::kStage2);
  TrainConfig finetune = default_train_config(Stage::kFinetune);
  QueryGenConfig queries;
  std::vector<std::vector<QueryType>> combos;
  std::size_t interpret_top_k = 5;
};

/// Reads every supported key, then rejects unknown ones. `seed` is
/// mandatory. Errors name the offending key path.
PipelineConfig pipeline_config(const ConfigFile& file);

/// Query types from a comma-separated list.
std::vector<QueryType> parse_type_list(std::string_view text, const std::string& key);

}  // namespace kgt
