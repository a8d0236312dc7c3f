/**
 *  Copyright (c) 2026 by Contributors
 * @file kgt/query.hpp
 * @brief EPFO query templates, DNF decomposition, the exact answer oracle
 *        and benchmark-style query generation.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kgt/graph.hpp"

namespace kgt {

enum class QueryType : std::uint8_t { k1p, k2p, k3p, k2i, k3i, kIp, kPi, k2u, kUp };

inline constexpr QueryType kAllQueryTypes[] = {QueryType::k1p, QueryType::k2p, QueryType::k3p,
                                               QueryType::k2i, QueryType::k3i, QueryType::kIp,
                                               QueryType::kPi, QueryType::k2u, QueryType::kUp};
inline constexpr QueryType kTrainableQueryTypes[] = {QueryType::k1p, QueryType::k2p, QueryType::k3p,
                                                     QueryType::k2i, QueryType::k3i};

std::string_view to_string(QueryType type);
/// Throws ConfigError for unknown names.
QueryType parse_query_type(std::string_view name);
bool is_trainable(QueryType type);
bool is_disjunctive(QueryType type);

/// Shape of a query type. Variables 0..anchors-1 are the anchors, the
/// remaining ones are bound variables, the last one is the target.
struct QueryTemplate {
  struct Edge {
    int src;
    int relation_slot;
    int dst;
  };
  int anchors = 0;
  int relations = 0;
  int variables = 0;
  std::vector<Edge> edges;
  /// Variable whose incoming edges are OR-ed (unions only), else -1.
  int union_variable = -1;

  int target() const { return variables - 1; }
};

const QueryTemplate& query_template(QueryType type);

struct NodeRole {
  enum class Kind : std::uint8_t { kSource, kIntermediate, kTarget, kRelation };
  Kind kind;
  /// Anchor entity for sources, relation id for relation-nodes, else -1.
  std::int32_t id = -1;

  bool masked() const { return kind == Kind::kIntermediate || kind == Kind::kTarget; }
};

struct QueryGraph {
  QueryType type = QueryType::k1p;
  std::vector<EntityId> anchors;
  std::vector<RelationId> relations;
  /// For unions this is the merged shape sharing the target; the model never
  /// consumes it directly (see dnf_decompose).
  LeviGraph levi;
  std::vector<NodeRole> roles;
  std::uint32_t target_node = 0;

  bool disjunctive() const { return is_disjunctive(type); }
  std::vector<std::uint32_t> intermediate_nodes() const;
};

/// Throws ArityError on anchor/relation count mismatch and IntegrityError on
/// ids outside [0, entity_count) / [0, relation_count) when counts are given.
QueryGraph build_query(QueryType type, std::vector<EntityId> anchors, std::vector<RelationId> relations,
                       std::optional<std::size_t> entity_count = std::nullopt,
                       std::optional<std::size_t> relation_count = std::nullopt);

/// Unions split into their conjunctive branches (anchor order); conjunctive
/// queries return themselves.
std::vector<QueryGraph> dnf_decompose(const QueryGraph& query);

/// Exact answer set, ascending.
std::vector<EntityId> ground_answers(const KnowledgeGraph& graph, const QueryGraph& query);

struct QueryInstance {
  QueryGraph query;
  std::vector<EntityId> answers_train;
  std::vector<EntityId> answers_valid;
  std::vector<EntityId> answers_test;

  /// Every answer on the largest graph; the filter set for ranking.
  std::vector<EntityId> all_answers() const;
};

enum class QuerySplit : std::uint8_t { kTrain, kValid, kTest };
std::string_view to_string(QuerySplit split);
QuerySplit parse_query_split(std::string_view name);

struct GenerationOptions {
  QuerySplit purpose = QuerySplit::kTrain;
  /// Queries whose answer set on the test graph exceeds this are rejected.
  std::size_t max_answers = 100;
  /// Attempts per requested query before giving up.
  std::size_t attempts_per_query = 200;
  /// Return the distinct queries found instead of throwing ExhaustionError.
  bool allow_fewer = false;
};

/// Instantiates queries by walking the template backward from a random answer
/// entity on the graph of `options.purpose`. Throws ExhaustionError when
/// `count` distinct queries cannot be produced.
std::vector<QueryInstance> generate_queries(const SplitDataset& split, QueryType type, std::size_t count,
                                            std::uint64_t seed, const GenerationOptions& options = {});

/// Hard answers for `split`: train answers, valid-only or test-only answers.
const std::vector<EntityId>& hard_answers(const QueryInstance& q, QuerySplit split);

void write_queries_jsonl(const std::filesystem::path& path, const std::vector<QueryInstance>& queries);
/// Validates ids against the given vocabulary sizes.
std::vector<QueryInstance> read_queries_jsonl(const std::filesystem::path& path, std::size_t entity_count,
                                              std::size_t relation_count);

}  // namespace kgt
