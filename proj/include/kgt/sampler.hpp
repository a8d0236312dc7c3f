/**
 *  Copyright (c) 2026 by Contributors
 * @file kgt/sampler.hpp
 * @brief Masked training subgraphs: dense random-walk / layer-wise samples
 *        for the first pre-training stage and query-shaped meta-graphs for
 *        the second.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "kgt/graph.hpp"
#include "kgt/query.hpp"

namespace kgt {

using Rng = std::mt19937_64;

/// Sampled entities in insertion order. `edges` holds the walk / tree edges
/// that added each node (empty for layer-wise sampling). `exhausted` is set
/// when the reachable component could not fill the requested budget.
struct NodeSample {
  std::vector<EntityId> nodes;
  std::vector<Triple> edges;
  bool exhausted = false;
};

/// Random walk over the undirected view; every step first returns to `start`
/// with probability `restart_p`. Target size is uniform in [min_nodes, max_nodes].
NodeSample rwr_sample(const KnowledgeGraph& graph, EntityId start, double restart_p, std::size_t min_nodes,
                      std::size_t max_nodes, Rng& rng);

/// Restart probability 1 from a uniformly chosen sampled node; a node is never
/// added twice, so `edges` is a spanning tree of `nodes`.
NodeSample meta_tree_sample(const KnowledgeGraph& graph, std::size_t min_nodes, std::size_t max_nodes, Rng& rng,
                            std::optional<EntityId> start = std::nullopt);

/// Each layer draws `per_layer` frontier nodes without replacement, with
/// probability proportional to their edge count into the current sample.
NodeSample layer_dependent_sample(const KnowledgeGraph& graph, std::span<const EntityId> seeds,
                                  std::size_t per_layer, std::size_t depth, Rng& rng);

/// Triples with both endpoints in `nodes`, each kept with probability
/// `keep_ratio`. Order follows `nodes`, then out-edge order.
std::vector<Triple> induce_subgraph(const KnowledgeGraph& graph, std::span<const EntityId> nodes,
                                    double keep_ratio, Rng& rng);

enum class Corruption : std::uint8_t { kMaskToken, kUnchanged, kRandomReplace };

struct CorruptionTag {
  Corruption kind = Corruption::kMaskToken;
  EntityId replacement = kNoEntity;
};

struct SampledSubgraph {
  LeviGraph levi;
  /// Per node; kNoEntity for relation-nodes.
  std::vector<EntityId> original_entities;
  /// Ascending entity-node indices.
  std::vector<std::uint32_t> mask_positions;
  std::vector<std::uint32_t> prediction_targets;
  /// Aligned with mask_positions.
  std::vector<CorruptionTag> corruption;
  /// Set for meta-graphs.
  std::optional<QueryType> shape;
};

/// Meta-graph shapes built at an explicit target; nullopt when degenerate.
std::optional<SampledSubgraph> try_chain(const KnowledgeGraph& graph, EntityId target, int length, Rng& rng);
std::optional<SampledSubgraph> try_branch(const KnowledgeGraph& graph, EntityId target, int width, Rng& rng);

struct MetaGraphOptions {
  /// chain:branch ratio, e.g. 4 for 4:1.
  double chain_ratio = 4.0;
  std::size_t max_attempts = 1000;
};

/// Chain (1-3 relations, nodes may repeat) or branch (2-3 distinct
/// in-neighbours) ending at a uniform target. Sources stay visible;
/// intermediates and the target are masked, only the target is predicted.
SampledSubgraph sample_meta_graph(const KnowledgeGraph& graph, const MetaGraphOptions& options, Rng& rng);

struct CorruptionRates {
  double mask_token = 0.8;
  double unchanged = 0.1;
};

/// Tags every masked position independently (mask / keep / random entity).
SampledSubgraph corrupt_masks(SampledSubgraph sub, std::size_t entity_count, Rng& rng,
                              const CorruptionRates& rates = {});

struct Stage1Options {
  double meta_tree_weight = 1.0;
  double ladies_weight = 1.0;
  double mask_rate = 0.25;
  std::size_t min_nodes = 8;
  std::size_t max_nodes = 16;
  double edge_keep = 0.8;
  std::size_t ladies_per_layer = 8;
  std::size_t ladies_depth = 2;
  std::size_t max_attempts = 50;
};

/// Dense masked subgraphs drawn by mixing meta-tree and layer-wise sampling.
std::vector<SampledSubgraph> sample_stage1_batch(const KnowledgeGraph& graph, const Stage1Options& options,
                                                 std::size_t batch_size, Rng& rng);

std::vector<SampledSubgraph> sample_stage2_batch(const KnowledgeGraph& graph, const MetaGraphOptions& options,
                                                 std::size_t batch_size, Rng& rng);

}  // namespace kgt
