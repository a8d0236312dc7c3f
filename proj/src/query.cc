/**
 *  Copyright (c) 2026 by Contributors
 * @file query.cc
 * @brief Query templates, answer oracle and query generation.
 */
#include "kgt/query.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <tuple>

#include "json.hpp"
#include "kgt/error.hpp"

namespace kgt {

namespace {

using Edge = QueryTemplate::Edge;

const QueryTemplate kTemplates[] = {
    /* 1p */ {1, 1, 2, {{0, 0, 1}}, -1},
    /* 2p */ {1, 2, 3, {{0, 0, 1}, {1, 1, 2}}, -1},
    /* 3p */ {1, 3, 4, {{0, 0, 1}, {1, 1, 2}, {2, 2, 3}}, -1},
    /* 2i */ {2, 2, 3, {{0, 0, 2}, {1, 1, 2}}, -1},
    /* 3i */ {3, 3, 4, {{0, 0, 3}, {1, 1, 3}, {2, 2, 3}}, -1},
    /* ip */ {2, 3, 4, {{0, 0, 2}, {1, 1, 2}, {2, 2, 3}}, -1},
    /* pi */ {2, 3, 4, {{0, 0, 2}, {2, 1, 3}, {1, 2, 3}}, -1},
    /* 2u */ {2, 2, 3, {{0, 0, 2}, {1, 1, 2}}, 2},
    /* up */ {2, 3, 4, {{0, 0, 2}, {1, 1, 2}, {2, 2, 3}}, 2},
};

constexpr std::string_view kTypeNames[] = {"1p", "2p", "3p", "2i", "3i", "ip", "pi", "2u", "up"};

using Bitmap = std::vector<char>;

std::vector<EntityId> bitmap_to_ids(const Bitmap& b) {
  std::vector<EntityId> out;
  for (std::size_t i = 0; i < b.size(); ++i)
    if (b[i]) out.push_back(static_cast<EntityId>(i));
  return out;
}

Bitmap conjunctive_answers(const KnowledgeGraph& graph, const QueryGraph& q) {
  const auto& tpl = query_template(q.type);
  const std::size_t n = graph.entity_count();
  std::vector<Bitmap> sets(tpl.variables);
  for (int a = 0; a < tpl.anchors; ++a) {
    sets[a].assign(n, 0);
    sets[a][q.anchors[a]] = 1;
  }
  // src < dst in every template, so index order is topological.
  for (int v = tpl.anchors; v < tpl.variables; ++v) {
    bool first = true;
    for (const auto& e : tpl.edges) {
      if (e.dst != v) continue;
      Bitmap image(n, 0);
      const RelationId r = q.relations[e.relation_slot];
      for (std::size_t s = 0; s < n; ++s) {
        if (!sets[e.src][s]) continue;
        for (const auto& adj : graph.out_edges(static_cast<EntityId>(s)))
          if (adj.relation == r) image[adj.other] = 1;
      }
      if (first) {
        sets[v] = std::move(image);
        first = false;
      } else {
        for (std::size_t i = 0; i < n; ++i) sets[v][i] = sets[v][i] && image[i];
      }
    }
  }
  return sets[tpl.target()];
}

std::vector<EntityId> set_difference(const std::vector<EntityId>& a, const std::vector<EntityId>& b) {
  std::vector<EntityId> out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

}  // namespace

std::string_view to_string(QueryType type) { return kTypeNames[static_cast<int>(type)]; }

QueryType parse_query_type(std::string_view name) {
  for (std::size_t i = 0; i < std::size(kTypeNames); ++i)
    if (kTypeNames[i] == name) return static_cast<QueryType>(i);
  throw ConfigError("unknown query type '" + std::string(name) + "'");
}

bool is_trainable(QueryType type) { return static_cast<int>(type) <= static_cast<int>(QueryType::k3i); }

bool is_disjunctive(QueryType type) { return type == QueryType::k2u || type == QueryType::kUp; }

const QueryTemplate& query_template(QueryType type) { return kTemplates[static_cast<int>(type)]; }

std::vector<std::uint32_t> QueryGraph::intermediate_nodes() const {
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < roles.size(); ++i)
    if (roles[i].kind == NodeRole::Kind::kIntermediate) out.push_back(i);
  return out;
}

QueryGraph build_query(QueryType type, std::vector<EntityId> anchors, std::vector<RelationId> relations,
                       std::optional<std::size_t> entity_count, std::optional<std::size_t> relation_count) {
  const auto& tpl = query_template(type);
  if (anchors.size() != static_cast<std::size_t>(tpl.anchors) ||
      relations.size() != static_cast<std::size_t>(tpl.relations))
    throw ArityError(std::string(to_string(type)) + " expects " + std::to_string(tpl.anchors) + " anchors and " +
                     std::to_string(tpl.relations) + " relations, got " + std::to_string(anchors.size()) +
                     " and " + std::to_string(relations.size()));
  for (auto a : anchors)
    if (a < 0 || (entity_count && static_cast<std::size_t>(a) >= *entity_count))
      throw IntegrityError("anchor id " + std::to_string(a) + " out of range");
  for (auto r : relations)
    if (r < 0 || (relation_count && static_cast<std::size_t>(r) >= *relation_count))
      throw IntegrityError("relation id " + std::to_string(r) + " out of range");

  QueryGraph q;
  q.type = type;
  q.anchors = std::move(anchors);
  q.relations = std::move(relations);
  std::vector<EntityId> slots(tpl.variables, kNoEntity);
  std::copy(q.anchors.begin(), q.anchors.end(), slots.begin());
  std::vector<SlotEdge> edges;
  for (const auto& e : tpl.edges)
    edges.push_back({static_cast<std::uint32_t>(e.src), q.relations[e.relation_slot], static_cast<std::uint32_t>(e.dst)});
  q.levi = LeviGraph::from_slots(std::move(slots), edges);
  for (int v = 0; v < tpl.variables; ++v) {
    if (v < tpl.anchors)
      q.roles.push_back({NodeRole::Kind::kSource, q.anchors[v]});
    else if (v == tpl.target())
      q.roles.push_back({NodeRole::Kind::kTarget, -1});
    else
      q.roles.push_back({NodeRole::Kind::kIntermediate, -1});
  }
  for (const auto& e : edges) q.roles.push_back({NodeRole::Kind::kRelation, e.relation});
  q.target_node = static_cast<std::uint32_t>(tpl.target());
  return q;
}

std::vector<QueryGraph> dnf_decompose(const QueryGraph& query) {
  switch (query.type) {
    case QueryType::k2u:
      return {build_query(QueryType::k1p, {query.anchors[0]}, {query.relations[0]}),
              build_query(QueryType::k1p, {query.anchors[1]}, {query.relations[1]})};
    case QueryType::kUp:
      return {build_query(QueryType::k2p, {query.anchors[0]}, {query.relations[0], query.relations[2]}),
              build_query(QueryType::k2p, {query.anchors[1]}, {query.relations[1], query.relations[2]})};
    default:
      return {query};
  }
}

std::vector<EntityId> ground_answers(const KnowledgeGraph& graph, const QueryGraph& query) {
  Bitmap result(graph.entity_count(), 0);
  for (const auto& branch : dnf_decompose(query)) {
    const auto b = conjunctive_answers(graph, branch);
    for (std::size_t i = 0; i < b.size(); ++i) result[i] = result[i] || b[i];
  }
  return bitmap_to_ids(result);
}

std::vector<EntityId> QueryInstance::all_answers() const {
  std::vector<EntityId> out = answers_train;
  out.insert(out.end(), answers_valid.begin(), answers_valid.end());
  out.insert(out.end(), answers_test.begin(), answers_test.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::string_view to_string(QuerySplit split) {
  switch (split) {
    case QuerySplit::kTrain: return "train";
    case QuerySplit::kValid: return "valid";
    case QuerySplit::kTest: return "test";
  }
  return "?";
}

QuerySplit parse_query_split(std::string_view name) {
  if (name == "train") return QuerySplit::kTrain;
  if (name == "valid") return QuerySplit::kValid;
  if (name == "test") return QuerySplit::kTest;
  throw ConfigError("unknown split '" + std::string(name) + "'");
}

const std::vector<EntityId>& hard_answers(const QueryInstance& q, QuerySplit split) {
  switch (split) {
    case QuerySplit::kTrain: return q.answers_train;
    case QuerySplit::kValid: return q.answers_valid;
    case QuerySplit::kTest: return q.answers_test;
  }
  return q.answers_test;
}

std::vector<QueryInstance> generate_queries(const SplitDataset& split, QueryType type, std::size_t count,
                                            std::uint64_t seed, const GenerationOptions& options) {
  if (count == 0) throw ConfigError("generate_queries: count must be positive");
  const KnowledgeGraph& graph = options.purpose == QuerySplit::kTrain   ? split.train
                                : options.purpose == QuerySplit::kValid ? split.valid
                                                                        : split.test;
  const auto& tpl = query_template(type);
  std::vector<EntityId> targets;
  for (std::size_t e = 0; e < graph.entity_count(); ++e)
    if (!graph.in_edges(static_cast<EntityId>(e)).empty()) targets.push_back(static_cast<EntityId>(e));
  if (targets.empty()) throw ExhaustionError("graph has no edges to instantiate queries from");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_target(0, targets.size() - 1);
  std::set<std::pair<std::vector<EntityId>, std::vector<RelationId>>> seen;
  std::vector<QueryInstance> out;
  const std::size_t max_attempts = count * options.attempts_per_query;

  for (std::size_t attempt = 0; attempt < max_attempts && out.size() < count; ++attempt) {
    std::vector<EntityId> bound(tpl.variables, kNoEntity);
    std::vector<RelationId> rels(tpl.relations, -1);
    bound[tpl.target()] = targets[pick_target(rng)];
    bool ok = true;
    for (int v = tpl.target(); v >= tpl.anchors && ok; --v) {
      std::vector<std::pair<EntityId, RelationId>> chosen;
      for (const auto& e : tpl.edges) {
        if (e.dst != v) continue;
        const auto in = graph.in_edges(bound[v]);
        if (in.empty()) {
          ok = false;
          break;
        }
        const auto& adj = in[std::uniform_int_distribution<std::size_t>(0, in.size() - 1)(rng)];
        const std::pair<EntityId, RelationId> key{adj.other, adj.relation};
        if (std::find(chosen.begin(), chosen.end(), key) != chosen.end()) {
          ok = false;
          break;
        }
        chosen.push_back(key);
        bound[e.src] = adj.other;
        rels[e.relation_slot] = adj.relation;
      }
    }
    if (!ok) continue;
    std::vector<EntityId> anchors(bound.begin(), bound.begin() + tpl.anchors);
    if (!seen.emplace(anchors, rels).second) continue;

    QueryInstance inst;
    inst.query = build_query(type, anchors, rels);
    const auto on_train = ground_answers(split.train, inst.query);
    const auto on_valid = ground_answers(split.valid, inst.query);
    const auto on_test = ground_answers(split.test, inst.query);
    if (on_test.size() > options.max_answers) continue;
    inst.answers_train = on_train;
    inst.answers_valid = set_difference(on_valid, on_train);
    inst.answers_test = set_difference(on_test, on_valid);
    if (hard_answers(inst, options.purpose).empty()) continue;
    out.push_back(std::move(inst));
  }
  if (out.size() < count && !options.allow_fewer)
    throw ExhaustionError("could only generate " + std::to_string(out.size()) + " of " + std::to_string(count) +
                          " " + std::string(to_string(type)) + " queries for split " +
                          std::string(to_string(options.purpose)));
  return out;
}

void write_queries_jsonl(const std::filesystem::path& path, const std::vector<QueryInstance>& queries) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& q : queries) {
    nlohmann::ordered_json j;
    j["type"] = to_string(q.query.type);
    j["anchors"] = q.query.anchors;
    j["relations"] = q.query.relations;
    j["answers_train"] = q.answers_train;
    j["answers_valid"] = q.answers_valid;
    j["answers_test"] = q.answers_test;
    out << j.dump() << '\n';
  }
}

std::vector<QueryInstance> read_queries_jsonl(const std::filesystem::path& path, std::size_t entity_count,
                                              std::size_t relation_count) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open query file " + path.string());
  std::vector<QueryInstance> out;
  std::string line;
  std::size_t lineno = 0;
  auto check_ids = [&](const std::vector<EntityId>& ids) {
    for (auto e : ids)
      if (e < 0 || static_cast<std::size_t>(e) >= entity_count)
        throw IntegrityError(path.string() + ":" + std::to_string(lineno) + ": answer id out of range");
    auto sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    return sorted;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string(), lineno, e.what());
    }
    try {
      QueryInstance q;
      q.query = build_query(parse_query_type(j.at("type").get<std::string>()),
                            j.at("anchors").get<std::vector<EntityId>>(),
                            j.at("relations").get<std::vector<RelationId>>(), entity_count, relation_count);
      q.answers_train = check_ids(j.value("answers_train", std::vector<EntityId>{}));
      q.answers_valid = check_ids(j.value("answers_valid", std::vector<EntityId>{}));
      q.answers_test = check_ids(j.value("answers_test", std::vector<EntityId>{}));
      out.push_back(std::move(q));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string(), lineno, e.what());
    }
  }
  return out;
}

}  // namespace kgt
