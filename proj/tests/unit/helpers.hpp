/**
 *  Copyright (c) 2026 by Contributors
 * @file helpers.hpp
 * @brief Shared fixtures for the unit tests.
 */
#pragma once

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "kgt/graph.hpp"

namespace kgt::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("kgt_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

/// Random multigraph-free triple list over `entities` x `relations`.
inline std::vector<Triple> random_triples(std::mt19937_64& rng, std::size_t entities, std::size_t relations,
                                          std::size_t count) {
  std::uniform_int_distribution<int> e(0, static_cast<int>(entities) - 1), r(0, static_cast<int>(relations) - 1);
  std::vector<Triple> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back({e(rng), r(rng), e(rng)});
  return out;
}

/// Cumulative split built from train triples plus the held-out additions.
inline SplitDataset make_split(std::size_t entities, std::size_t relations, std::vector<Triple> train,
                               const std::vector<Triple>& valid_extra = {},
                               const std::vector<Triple>& test_extra = {}) {
  SplitDataset s;
  for (std::size_t i = 0; i < entities; ++i) s.entity_names.push_back("e" + std::to_string(i));
  for (std::size_t i = 0; i < relations; ++i) s.relation_names.push_back("r" + std::to_string(i));
  auto valid = train;
  valid.insert(valid.end(), valid_extra.begin(), valid_extra.end());
  auto test = valid;
  test.insert(test.end(), test_extra.begin(), test_extra.end());
  s.train = KnowledgeGraph(entities, relations, std::move(train));
  s.valid = KnowledgeGraph(entities, relations, std::move(valid));
  s.test = KnowledgeGraph(entities, relations, std::move(test));
  return s;
}

}  // namespace kgt::test
