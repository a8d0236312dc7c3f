/**
 *  Copyright (c) 2026 by Contributors
 * @file kgt/graph.hpp
 * @brief Knowledge graph triple store, cumulative splits and the Levi
 *        (triple-transformed) graph consumed by the encoder.
 */
#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace kgt {

using EntityId = std::int32_t;
using RelationId = std::int32_t;

/// Placeholder for query variables that are not bound to an entity.
inline constexpr EntityId kNoEntity = -1;

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  auto operator<=>(const Triple&) const = default;
};

/// One adjacency entry. `other` is the tail for out-edges and the head for
/// in-edges; `triple` indexes KnowledgeGraph::triples().
struct AdjacentEdge {
  RelationId relation;
  EntityId other;
  std::uint32_t triple;
};

class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  /// Validates ids and drops exact duplicate triples (first occurrence wins).
  /// Throws IntegrityError on out-of-range ids.
  KnowledgeGraph(std::size_t entity_count, std::size_t relation_count,
                 std::vector<Triple> triples);

  std::size_t entity_count() const { return entity_count_; }
  std::size_t relation_count() const { return relation_count_; }
  std::size_t triple_count() const { return triples_.size(); }
  const std::vector<Triple>& triples() const { return triples_; }

  std::span<const AdjacentEdge> out_edges(EntityId e) const;
  std::span<const AdjacentEdge> in_edges(EntityId e) const;
  std::size_t degree(EntityId e) const {
    return out_edges(e).size() + in_edges(e).size();
  }

  bool contains(const Triple& t) const;

 private:
  void build_index();

  std::size_t entity_count_ = 0;
  std::size_t relation_count_ = 0;
  std::vector<Triple> triples_;
  std::vector<Triple> sorted_;
  // CSR layout: edges of entity e live in [offset[e], offset[e+1]).
  std::vector<std::size_t> out_offset_, in_offset_;
  std::vector<AdjacentEdge> out_, in_;
};

/// Three cumulative graphs over one vocabulary:
/// triples(train) ⊆ triples(valid) ⊆ triples(test).
struct SplitDataset {
  KnowledgeGraph train;
  KnowledgeGraph valid;
  KnowledgeGraph test;
  std::vector<std::string> entity_names;
  std::vector<std::string> relation_names;

  std::size_t entity_count() const { return entity_names.size(); }
  std::size_t relation_count() const { return relation_names.size(); }
};

enum class SplitLayout {
  kCumulative,  // valid.txt repeats train, test.txt repeats valid (strict)
  kDisjoint,    // standard held-out files; unioned on load
};

/// Reads entities.txt, relations.txt, train.txt, valid.txt, test.txt.
SplitDataset load_split(const std::filesystem::path& dir,
                        SplitLayout layout = SplitLayout::kCumulative);

/// Writes a cumulative, integer-id split that load_split reads back.
void write_split(const std::filesystem::path& dir, const SplitDataset& split);

struct LeviNode {
  enum class Kind : std::uint8_t { kEntity, kRelation };
  Kind kind = Kind::kEntity;
  /// Entity id (or kNoEntity for an unbound variable) / relation id.
  std::int32_t id = kNoEntity;
  /// For relation-nodes, the edge index it was created from; -1 otherwise.
  std::int32_t source_edge = -1;

  bool is_entity() const { return kind == Kind::kEntity; }
};

/// Directed edge between entity slots used to build positional Levi graphs.
struct SlotEdge {
  std::uint32_t src;
  RelationId relation;
  std::uint32_t dst;
};

/// Triple-transformed graph: every triple (h, r, t) becomes h -> r_ht -> t.
/// Nodes are entity slots first, then relation-nodes in edge order. The
/// attention mask is the symmetrized edge relation plus the diagonal.
class LeviGraph {
 public:
  LeviGraph() = default;

  /// Entity slots may repeat ids (query variables bound to the same entity).
  static LeviGraph from_slots(std::vector<EntityId> slot_entities,
                              std::span<const SlotEdge> edges);

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t entity_node_count() const { return entity_slots_; }
  std::size_t edge_count() const { return edges_.size(); }
  const std::vector<LeviNode>& nodes() const { return nodes_; }
  const LeviNode& node(std::size_t i) const { return nodes_.at(i); }
  const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges() const {
    return edges_;
  }

  /// Row-major node_count x node_count boolean mask.
  const std::vector<std::uint8_t>& attention_mask() const { return mask_; }
  bool attends(std::size_t from, std::size_t to) const {
    return mask_[from * nodes_.size() + to] != 0;
  }

  /// Recovers (h, r, t) per relation-node from its unique in/out edges.
  std::vector<Triple> recover_triples() const;

 private:
  std::vector<LeviNode> nodes_;
  std::size_t entity_slots_ = 0;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges_;
  std::vector<std::uint8_t> mask_;
};

/// Entity-nodes are the entities incident to `triples` plus `extra_entities`
/// in ascending id order; relation-nodes follow in triple order.
LeviGraph triple_transform(std::span<const Triple> triples,
                           std::span<const EntityId> extra_entities = {});
LeviGraph triple_transform(const KnowledgeGraph& graph);

/// In-neighbors, out-neighbors and the node itself, ascending.
std::vector<std::uint32_t> neighborhood(const LeviGraph& levi, std::size_t node);

}  // namespace kgt
