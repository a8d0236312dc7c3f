/**
 *  Copyright (c) 2026 by Contributors
 * @file evaluation.cc
 * @brief Filtered ranking and metric aggregation.
 */
#include "kgt/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "kgt/error.hpp"
#include "kgt/parallel.hpp"

namespace kgt {

namespace {

void check_vocabulary(const ModelConfig& config, const QueryGraph& q) {
  for (auto a : q.anchors)
    if (a < 0 || static_cast<std::size_t>(a) >= config.entity_count)
      throw IntegrityError("query anchor " + std::to_string(a) + " outside the model vocabulary");
  for (auto r : q.relations)
    if (r < 0 || static_cast<std::size_t>(r) >= config.relation_count)
      throw IntegrityError("query relation " + std::to_string(r) + " outside the model vocabulary");
}

std::vector<double> to_double(const std::vector<float>& v) { return {v.begin(), v.end()}; }

}  // namespace

std::vector<std::vector<double>> score_query(const ModelParameters<float>& params, const QueryGraph& query) {
  check_vocabulary(params.config, query);
  std::vector<std::vector<double>> out;
  for (const auto& branch : dnf_decompose(query)) {
    const std::uint32_t pos = branch.target_node;
    out.push_back(to_double(predict_logits(params, make_input(branch, params.config), {&pos, 1})));
  }
  return out;
}

std::size_t filtered_rank(std::span<const double> scores, EntityId answer, std::span<const EntityId> filter_out) {
  if (answer < 0 || static_cast<std::size_t>(answer) >= scores.size())
    throw IntegrityError("filtered_rank: answer " + std::to_string(answer) + " out of range");
  std::vector<std::uint8_t> skip(scores.size(), 0);
  for (auto e : filter_out)
    if (e >= 0 && static_cast<std::size_t>(e) < scores.size()) skip[e] = 1;
  skip[answer] = 1;
  const double s = scores[answer];
  std::size_t better = 0;
  for (std::size_t x = 0; x < scores.size(); ++x)
    if (!skip[x] && scores[x] > s) ++better;
  return better + 1;
}

std::vector<std::size_t> scores_to_ranks(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> ranks(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    // Ties share the rank of the first entity in their run.
    const bool tie = i > 0 && scores[order[i]] == scores[order[i - 1]];
    ranks[order[i]] = tie ? ranks[order[i - 1]] : i + 1;
  }
  return ranks;
}

std::vector<std::size_t> union_combine(const std::vector<std::vector<double>>& branches) {
  if (branches.size() < 2) throw ShapeError("union_combine needs at least two branches");
  for (const auto& b : branches)
    if (b.size() != branches.front().size()) throw ShapeError("union_combine: branch lengths differ");
  auto combined = scores_to_ranks(branches.front());
  for (std::size_t k = 1; k < branches.size(); ++k) {
    const auto r = scores_to_ranks(branches[k]);
    for (std::size_t e = 0; e < combined.size(); ++e) combined[e] = std::min(combined[e], r[e]);
  }
  return combined;
}

std::vector<double> ranks_as_scores(std::span<const std::size_t> ranks) {
  std::vector<double> out(ranks.size());
  for (std::size_t i = 0; i < ranks.size(); ++i) out[i] = -static_cast<double>(ranks[i]);
  return out;
}

namespace {

template <typename PerRank>
double macro_average(const std::vector<std::vector<std::size_t>>& ranks, PerRank f) {
  if (ranks.empty()) return 0.0;
  double total = 0;
  for (const auto& q : ranks) {
    if (q.empty()) throw ConfigError("metric: query with an empty rank list");
    double s = 0;
    for (auto r : q) s += f(r);
    total += s / static_cast<double>(q.size());
  }
  return total / static_cast<double>(ranks.size());
}

}  // namespace

double hits_at_k_m(const std::vector<std::vector<std::size_t>>& ranks, std::size_t k) {
  return macro_average(ranks, [k](std::size_t r) { return r <= k ? 1.0 : 0.0; });
}

double mrr_m(const std::vector<std::vector<std::size_t>>& ranks) {
  return macro_average(ranks, [](std::size_t r) { return 1.0 / static_cast<double>(r); });
}

EvaluationResult evaluate(const ModelParameters<float>& params, const QueryDatasets& datasets, QuerySplit split,
                          std::size_t threads) {
  EvaluationResult result;
  for (const auto& [type, queries] : datasets) {
    std::vector<std::vector<std::size_t>> ranks(queries.size());
    parallel_for(queries.size(), threads, [&](std::size_t i) {
      const auto& q = queries[i];
      const auto& hard = hard_answers(q, split);
      if (hard.empty()) return;
      const auto branches = score_query(params, q.query);
      const auto scores = branches.size() == 1 ? branches.front() : ranks_as_scores(union_combine(branches));
      const auto filter = q.all_answers();
      for (auto a : hard) ranks[i].push_back(filtered_rank(scores, a, filter));
    });
    std::vector<std::vector<std::size_t>> kept;
    TypeMetrics m;
    for (std::size_t i = 0; i < queries.size(); ++i) {
      if (ranks[i].empty()) continue;
      const auto& hard = hard_answers(queries[i], split);
      for (std::size_t k = 0; k < hard.size(); ++k) result.ranks.push_back({type, i, hard[k], ranks[i][k]});
      m.answers += ranks[i].size();
      kept.push_back(std::move(ranks[i]));
    }
    // Types without a scorable query are left out rather than reported as 0.
    if (kept.empty()) continue;
    m.queries = kept.size();
    m.hits1 = hits_at_k_m(kept, 1);
    m.hits3 = hits_at_k_m(kept, 3);
    m.hits10 = hits_at_k_m(kept, 10);
    m.mrr = mrr_m(kept);
    result.table[type] = m;
  }
  return result;
}

double mean_hits3(const MetricsTable& table) {
  if (table.empty()) return 0.0;
  double s = 0;
  for (const auto& [type, m] : table) s += m.hits3;
  return s / static_cast<double>(table.size());
}

nlohmann::ordered_json metrics_to_json(const MetricsTable& table) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [type, m] : table) {
    auto& row = j[std::string(to_string(type))];
    row["hits@1m"] = m.hits1;
    row["hits@3m"] = m.hits3;
    row["hits@10m"] = m.hits10;
    row["mrr_m"] = m.mrr;
    row["queries"] = m.queries;
    row["answers"] = m.answers;
  }
  return j;
}

std::string metrics_to_text(const MetricsTable& table) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-6s %9s %9s %9s %9s %9s %9s\n", "type", "hits@1m", "hits@3m", "hits@10m",
                "mrr_m", "queries", "answers");
  out << line;
  for (const auto& [type, m] : table) {
    std::snprintf(line, sizeof line, "%-6s %9.4f %9.4f %9.4f %9.4f %9zu %9zu\n", std::string(to_string(type)).c_str(),
                  m.hits1, m.hits3, m.hits10, m.mrr, m.queries, m.answers);
    out << line;
  }
  return out.str();
}

void write_rank_jsonl(const std::filesystem::path& path, const std::vector<RankRecord>& ranks) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  for (const auto& r : ranks) {
    nlohmann::ordered_json j;
    j["type"] = std::string(to_string(r.type));
    j["query"] = r.query;
    j["answer"] = r.answer;
    j["rank"] = r.rank;
    f << j.dump() << '\n';
  }
}

std::vector<InterpretedNode> interpret(const ModelParameters<float>& params, const QueryGraph& query, std::size_t top_k,
                                       std::optional<EntityId> fill) {
  check_vocabulary(params.config, query);
  if (query.intermediate_nodes().empty())
    throw ConfigError(std::string(to_string(query.type)) + " query has no intermediate variable to decode");
  std::vector<InterpretedNode> out;
  const auto branches = dnf_decompose(query);
  for (std::size_t b = 0; b < branches.size(); ++b) {
    const auto& branch = branches[b];
    const auto positions = branch.intermediate_nodes();
    if (positions.empty()) continue;
    const auto logits = predict_logits(params, make_input(branch, params.config, fill), positions);
    const std::size_t n = params.config.entity_count, k = std::min(top_k, n);
    for (std::size_t p = 0; p < positions.size(); ++p) {
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      const float* row = logits.data() + p * n;
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                        [row](std::size_t a, std::size_t c) { return row[a] > row[c] || (row[a] == row[c] && a < c); });
      InterpretedNode node{b, positions[p], static_cast<int>(positions[p]), {}};
      for (std::size_t i = 0; i < k; ++i) node.top.push_back({static_cast<EntityId>(order[i]), row[order[i]]});
      out.push_back(std::move(node));
    }
  }
  return out;
}

}  // namespace kgt
