/**
 *  Copyright (c) 2026 by Contributors
 * @file kgt/evaluation.hpp
 * @brief Query scoring, filtered ranking, union rank combination, Hits@Km /
 *        MRRm macro-averages and intermediate-variable decoding.
 */
#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kgt/model.hpp"
#include "kgt/query.hpp"

namespace kgt {

using QueryDatasets = std::map<QueryType, std::vector<QueryInstance>>;

/// Target-position logits, one vector of |E| scores per conjunctive branch.
std::vector<std::vector<double>> score_query(const ModelParameters<float>& params, const QueryGraph& query);

/// 1 + #{x not in filter_out, x != answer : scores[x] > scores[answer]}.
std::size_t filtered_rank(std::span<const double> scores, EntityId answer, std::span<const EntityId> filter_out);

/// Unfiltered optimistic ranks: rank(e) = 1 + #{x : scores[x] > scores[e]}.
std::vector<std::size_t> scores_to_ranks(std::span<const double> scores);

/// Per-entity minimum over branches of the branch rank. Throws ShapeError
/// on fewer than two branches or unequal lengths.
std::vector<std::size_t> union_combine(const std::vector<std::vector<double>>& branches);

/// Scores equivalent to a combined rank vector (higher is better).
std::vector<double> ranks_as_scores(std::span<const std::size_t> ranks);

/// Per-query mean of 1[rank <= k], averaged over queries. Throws
/// ConfigError on an empty per-query list.
double hits_at_k_m(const std::vector<std::vector<std::size_t>>& ranks, std::size_t k);
double mrr_m(const std::vector<std::vector<std::size_t>>& ranks);

struct TypeMetrics {
  double hits1 = 0;
  double hits3 = 0;
  double hits10 = 0;
  double mrr = 0;
  std::size_t queries = 0;
  std::size_t answers = 0;
};

using MetricsTable = std::map<QueryType, TypeMetrics>;

struct RankRecord {
  QueryType type;
  std::size_t query = 0;  // index within its type's dataset
  EntityId answer = kNoEntity;
  std::size_t rank = 0;
};

struct EvaluationResult {
  MetricsTable table;
  std::vector<RankRecord> ranks;
};

/// Ranks every hard answer of `split` against [[q]]_test filtering. Queries
/// without hard answers are skipped. Throws IntegrityError when a query id
/// lies outside the model vocabulary. Types left without a scorable query
/// are omitted from the table.
EvaluationResult evaluate(const ModelParameters<float>& params, const QueryDatasets& datasets, QuerySplit split,
                          std::size_t threads = 1);

/// Mean Hits@3m over the table's types (0 for an empty table).
double mean_hits3(const MetricsTable& table);

nlohmann::ordered_json metrics_to_json(const MetricsTable& table);
std::string metrics_to_text(const MetricsTable& table);
void write_rank_jsonl(const std::filesystem::path& path, const std::vector<RankRecord>& ranks);

struct DecodedEntity {
  EntityId entity = kNoEntity;
  double score = 0;
};

struct InterpretedNode {
  std::size_t branch = 0;    // DNF branch (0 for conjunctive queries)
  std::uint32_t node = 0;    // Levi node index within the branch
  int variable = -1;         // template variable index
  std::vector<DecodedEntity> top;
};

/// Decodes every intermediate position of every DNF branch. `fill`
/// substitutes an entity at the target position. Throws ConfigError when
/// the query has no intermediate variable.
std::vector<InterpretedNode> interpret(const ModelParameters<float>& params, const QueryGraph& query,
                                       std::size_t top_k = 5, std::optional<EntityId> fill = std::nullopt);

}  // namespace kgt
