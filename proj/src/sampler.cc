/**
 *  Copyright (c) 2026 by Contributors
 * @file sampler.cc
 * @brief Subgraph samplers for masked pre-training.
 */
#include "kgt/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_set>

#include "kgt/error.hpp"

namespace kgt {

namespace {

struct Step {
  EntityId next;
  Triple triple;
};

/// Uniform neighbour over the undirected view (out-edges then in-edges).
std::optional<Step> random_neighbor(const KnowledgeGraph& g, EntityId u, Rng& rng) {
  const auto out = g.out_edges(u);
  const auto in = g.in_edges(u);
  const std::size_t deg = out.size() + in.size();
  if (deg == 0) return std::nullopt;
  const std::size_t i = std::uniform_int_distribution<std::size_t>(0, deg - 1)(rng);
  if (i < out.size()) return Step{out[i].other, {u, out[i].relation, out[i].other}};
  const auto& e = in[i - out.size()];
  return Step{e.other, {e.other, e.relation, u}};
}

EntityId random_connected_entity(const KnowledgeGraph& g, Rng& rng) {
  if (g.triple_count() == 0) throw SamplingError("cannot sample from a graph without triples");
  // Endpoint of a uniform triple is cheap and never isolated.
  const auto& t = g.triples()[std::uniform_int_distribution<std::size_t>(0, g.triple_count() - 1)(rng)];
  return std::bernoulli_distribution(0.5)(rng) ? t.head : t.tail;
}

std::size_t pick_size(std::size_t lo, std::size_t hi, Rng& rng) {
  if (lo < 1 || lo > hi) throw ConfigError("sampling budget must satisfy 1 <= min <= max");
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

bool has_frontier(const KnowledgeGraph& g, const std::vector<EntityId>& nodes, const std::unordered_set<EntityId>& in) {
  for (auto u : nodes) {
    for (const auto& e : g.out_edges(u))
      if (!in.count(e.other)) return true;
    for (const auto& e : g.in_edges(u))
      if (!in.count(e.other)) return true;
  }
  return false;
}

SampledSubgraph from_slots(std::vector<EntityId> slots, const std::vector<SlotEdge>& edges, QueryType shape) {
  SampledSubgraph sub;
  sub.levi = LeviGraph::from_slots(slots, edges);
  sub.original_entities.assign(sub.levi.node_count(), kNoEntity);
  std::copy(slots.begin(), slots.end(), sub.original_entities.begin());
  // Slot 0.. are sources, the last slot is the target; chains put their
  // intermediates between.
  const auto target = static_cast<std::uint32_t>(slots.size() - 1);
  const std::size_t sources = (shape == QueryType::k2i || shape == QueryType::k3i) ? slots.size() - 1 : 1;
  for (auto i = static_cast<std::uint32_t>(sources); i <= target; ++i) sub.mask_positions.push_back(i);
  sub.prediction_targets = {target};
  sub.corruption.assign(sub.mask_positions.size(), {});
  sub.shape = shape;
  return sub;
}

}  // namespace

NodeSample rwr_sample(const KnowledgeGraph& graph, EntityId start, double restart_p, std::size_t min_nodes,
                      std::size_t max_nodes, Rng& rng) {
  if (restart_p < 0.0 || restart_p > 1.0) throw ConfigError("restart probability must lie in [0, 1]");
  const std::size_t want = pick_size(min_nodes, max_nodes, rng);
  NodeSample out;
  out.nodes.push_back(start);
  std::unordered_set<EntityId> in{start};
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  EntityId cur = start;
  const std::size_t max_steps = 100 * max_nodes + 100;
  for (std::size_t step = 0; step < max_steps && out.nodes.size() < want; ++step) {
    if (unit(rng) < restart_p) cur = start;
    auto next = random_neighbor(graph, cur, rng);
    if (!next) {
      if (cur == start) break;
      cur = start;
      continue;
    }
    if (in.insert(next->next).second) {
      out.nodes.push_back(next->next);
      out.edges.push_back(next->triple);
    }
    cur = next->next;
  }
  out.exhausted = out.nodes.size() < want;
  return out;
}

NodeSample meta_tree_sample(const KnowledgeGraph& graph, std::size_t min_nodes, std::size_t max_nodes, Rng& rng,
                            std::optional<EntityId> start) {
  const std::size_t want = pick_size(min_nodes, max_nodes, rng);
  const EntityId root = start ? *start : random_connected_entity(graph, rng);
  NodeSample out;
  out.nodes.push_back(root);
  std::unordered_set<EntityId> in{root};
  std::size_t failures = 0;
  while (out.nodes.size() < want) {
    const EntityId u = out.nodes[std::uniform_int_distribution<std::size_t>(0, out.nodes.size() - 1)(rng)];
    auto next = random_neighbor(graph, u, rng);
    if (next && in.insert(next->next).second) {
      out.nodes.push_back(next->next);
      out.edges.push_back(next->triple);
      failures = 0;
      continue;
    }
    if (++failures > 32 * out.nodes.size()) {
      if (!has_frontier(graph, out.nodes, in)) {
        out.exhausted = true;
        break;
      }
      failures = 0;
    }
  }
  return out;
}

NodeSample layer_dependent_sample(const KnowledgeGraph& graph, std::span<const EntityId> seeds,
                                  std::size_t per_layer, std::size_t depth, Rng& rng) {
  if (per_layer < 1 || depth < 1) throw ConfigError("layer sampling needs per_layer >= 1 and depth >= 1");
  NodeSample out;
  std::unordered_set<EntityId> in;
  for (auto s : seeds)
    if (in.insert(s).second) out.nodes.push_back(s);
  for (std::size_t layer = 0; layer < depth; ++layer) {
    // Ordered map keeps candidate order independent of hashing.
    std::map<EntityId, double> weight;
    for (auto u : out.nodes) {
      for (const auto& e : graph.out_edges(u))
        if (!in.count(e.other)) weight[e.other] += 1.0;
      for (const auto& e : graph.in_edges(u))
        if (!in.count(e.other)) weight[e.other] += 1.0;
    }
    if (weight.empty()) {
      out.exhausted = true;
      break;
    }
    std::vector<EntityId> cand;
    std::vector<double> w;
    for (auto [e, c] : weight) {
      cand.push_back(e);
      w.push_back(c);
    }
    std::vector<EntityId> chosen;
    while (chosen.size() < per_layer && !cand.empty()) {
      std::discrete_distribution<std::size_t> dist(w.begin(), w.end());
      const std::size_t i = dist(rng);
      chosen.push_back(cand[i]);
      cand.erase(cand.begin() + static_cast<std::ptrdiff_t>(i));
      w.erase(w.begin() + static_cast<std::ptrdiff_t>(i));
    }
    for (auto e : chosen) {
      in.insert(e);
      out.nodes.push_back(e);
    }
  }
  return out;
}

std::vector<Triple> induce_subgraph(const KnowledgeGraph& graph, std::span<const EntityId> nodes,
                                    double keep_ratio, Rng& rng) {
  if (!(keep_ratio > 0.0 && keep_ratio <= 1.0)) throw ConfigError("edge keep ratio must lie in (0, 1]");
  const std::unordered_set<EntityId> in(nodes.begin(), nodes.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Triple> out;
  std::unordered_set<EntityId> visited;
  for (auto u : nodes) {
    if (!visited.insert(u).second) continue;
    for (const auto& e : graph.out_edges(u))
      if (in.count(e.other) && unit(rng) < keep_ratio) out.push_back({u, e.relation, e.other});
  }
  return out;
}

std::optional<SampledSubgraph> try_chain(const KnowledgeGraph& graph, EntityId target, int length, Rng& rng) {
  if (length < 1 || length > 3) throw ConfigError("chain length must be 1..3");
  // Walk against edge direction so every edge points toward the target.
  std::vector<EntityId> path{target};
  std::vector<RelationId> rels;
  EntityId cur = target;
  for (int i = 0; i < length; ++i) {
    const auto in = graph.in_edges(cur);
    if (in.empty()) return std::nullopt;
    const auto& e = in[std::uniform_int_distribution<std::size_t>(0, in.size() - 1)(rng)];
    rels.push_back(e.relation);
    path.push_back(e.other);
    cur = e.other;
  }
  std::reverse(path.begin(), path.end());
  std::reverse(rels.begin(), rels.end());
  std::vector<SlotEdge> edges;
  for (int i = 0; i < length; ++i)
    edges.push_back({static_cast<std::uint32_t>(i), rels[i], static_cast<std::uint32_t>(i + 1)});
  static constexpr QueryType kShapes[] = {QueryType::k1p, QueryType::k2p, QueryType::k3p};
  return from_slots(std::move(path), edges, kShapes[length - 1]);
}

std::optional<SampledSubgraph> try_branch(const KnowledgeGraph& graph, EntityId target, int width, Rng& rng) {
  if (width < 2 || width > 3) throw ConfigError("branch width must be 2..3");
  std::map<EntityId, std::vector<RelationId>> by_head;
  for (const auto& e : graph.in_edges(target)) by_head[e.other].push_back(e.relation);
  if (by_head.size() < static_cast<std::size_t>(width)) return std::nullopt;
  std::vector<EntityId> heads;
  for (const auto& [h, _] : by_head) heads.push_back(h);
  std::shuffle(heads.begin(), heads.end(), rng);
  heads.resize(static_cast<std::size_t>(width));
  std::vector<EntityId> slots;
  std::vector<SlotEdge> edges;
  for (int i = 0; i < width; ++i) {
    const auto& rels = by_head[heads[i]];
    slots.push_back(heads[i]);
    edges.push_back({static_cast<std::uint32_t>(i), rels[std::uniform_int_distribution<std::size_t>(0, rels.size() - 1)(rng)],
                     static_cast<std::uint32_t>(width)});
  }
  slots.push_back(target);
  return from_slots(std::move(slots), edges, width == 2 ? QueryType::k2i : QueryType::k3i);
}

SampledSubgraph sample_meta_graph(const KnowledgeGraph& graph, const MetaGraphOptions& options, Rng& rng) {
  if (!(options.chain_ratio > 0.0)) throw ConfigError("chain:branch ratio must be positive");
  if (graph.entity_count() == 0) throw SamplingError("cannot sample meta-graphs from an empty graph");
  // Mode is fixed before rejection so the observed mix matches the ratio.
  const bool chain = std::bernoulli_distribution(options.chain_ratio / (options.chain_ratio + 1.0))(rng);
  std::uniform_int_distribution<EntityId> any_entity(0, static_cast<EntityId>(graph.entity_count()) - 1);
  for (std::size_t attempt = 0; attempt < options.max_attempts; ++attempt) {
    const EntityId target = any_entity(rng);
    auto sub = chain ? try_chain(graph, target, std::uniform_int_distribution<int>(1, 3)(rng), rng)
                     : try_branch(graph, target, std::uniform_int_distribution<int>(2, 3)(rng), rng);
    if (sub) return std::move(*sub);
  }
  throw SamplingError(std::string("meta-graph rejection bound exceeded in ") + (chain ? "chain" : "branch") + " mode");
}

SampledSubgraph corrupt_masks(SampledSubgraph sub, std::size_t entity_count, Rng& rng, const CorruptionRates& rates) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<EntityId> any_entity(0, static_cast<EntityId>(entity_count) - 1);
  sub.corruption.assign(sub.mask_positions.size(), {});
  for (auto& tag : sub.corruption) {
    const double u = unit(rng);
    if (u < rates.mask_token) {
      tag = {Corruption::kMaskToken, kNoEntity};
    } else if (u < rates.mask_token + rates.unchanged) {
      tag = {Corruption::kUnchanged, kNoEntity};
    } else {
      tag = {Corruption::kRandomReplace, any_entity(rng)};
    }
  }
  return sub;
}

std::vector<SampledSubgraph> sample_stage1_batch(const KnowledgeGraph& graph, const Stage1Options& options,
                                                 std::size_t batch_size, Rng& rng) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(options.mask_rate > 0.0 && options.mask_rate < 1.0)) throw ConfigError("mask rate must lie in (0, 1)");
  const double total = options.meta_tree_weight + options.ladies_weight;
  if (!(total > 0.0) || options.meta_tree_weight < 0 || options.ladies_weight < 0)
    throw ConfigError("sampler method weights must be non-negative with a positive sum");
  std::bernoulli_distribution use_meta_tree(options.meta_tree_weight / total);

  std::vector<SampledSubgraph> batch;
  batch.reserve(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b) {
    NodeSample nodes;
    for (std::size_t attempt = 0; attempt < options.max_attempts; ++attempt) {
      const EntityId start = random_connected_entity(graph, rng);
      if (use_meta_tree(rng)) {
        nodes = meta_tree_sample(graph, options.min_nodes, options.max_nodes, rng, start);
      } else {
        const std::size_t want = pick_size(options.min_nodes, options.max_nodes, rng);
        const EntityId seed[] = {start};
        nodes = layer_dependent_sample(graph, seed, options.ladies_per_layer, options.ladies_depth, rng);
        // Extra layers for sparse regions; layer order keeps truncation connected.
        while (nodes.nodes.size() < want && !nodes.exhausted) {
          auto more = layer_dependent_sample(graph, nodes.nodes, options.ladies_per_layer, 1, rng);
          if (more.nodes.size() == nodes.nodes.size()) break;
          nodes = std::move(more);
        }
        nodes.exhausted = nodes.nodes.size() < want;
        if (nodes.nodes.size() > want) nodes.nodes.resize(want);
      }
      if (!nodes.exhausted) break;
    }
    auto triples = induce_subgraph(graph, nodes.nodes, options.edge_keep, rng);
    SampledSubgraph sub;
    sub.levi = triple_transform(triples, nodes.nodes);
    sub.original_entities.assign(sub.levi.node_count(), kNoEntity);
    const std::size_t n_ent = sub.levi.entity_node_count();
    for (std::size_t i = 0; i < n_ent; ++i) sub.original_entities[i] = sub.levi.node(i).id;
    const auto n_mask = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(options.mask_rate * static_cast<double>(n_ent))), 1, n_ent);
    std::vector<std::uint32_t> order(n_ent);
    for (std::uint32_t i = 0; i < n_ent; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(n_mask);
    std::sort(order.begin(), order.end());
    sub.mask_positions = order;
    sub.prediction_targets = order;
    batch.push_back(corrupt_masks(std::move(sub), graph.entity_count(), rng));
  }
  return batch;
}

std::vector<SampledSubgraph> sample_stage2_batch(const KnowledgeGraph& graph, const MetaGraphOptions& options,
                                                 std::size_t batch_size, Rng& rng) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  std::vector<SampledSubgraph> batch;
  batch.reserve(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b) batch.push_back(sample_meta_graph(graph, options, rng));
  return batch;
}

}  // namespace kgt
