/**
 *  Copyright (c) 2026 by Contributors
 * @file graph.cc
 * @brief Triple store, split loading and the triple transformation.
 */
#include "kgt/graph.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "kgt/error.hpp"

namespace kgt {

namespace {

struct TripleHash {
  std::size_t operator()(const Triple& t) const {
    std::uint64_t h = static_cast<std::uint32_t>(t.head);
    h = h * 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint32_t>(t.relation);
    h = h * 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint32_t>(t.tail);
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

void build_csr(std::size_t n, const std::vector<Triple>& triples, bool outgoing,
               std::vector<std::size_t>& offset, std::vector<AdjacentEdge>& edges) {
  offset.assign(n + 1, 0);
  for (const auto& t : triples) ++offset[(outgoing ? t.head : t.tail) + 1];
  for (std::size_t i = 0; i < n; ++i) offset[i + 1] += offset[i];
  edges.resize(triples.size());
  std::vector<std::size_t> cursor(offset.begin(), offset.end() - 1);
  for (std::uint32_t i = 0; i < triples.size(); ++i) {
    const auto& t = triples[i];
    const EntityId key = outgoing ? t.head : t.tail;
    edges[cursor[key]++] = {t.relation, outgoing ? t.tail : t.head, i};
  }
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n' || s.back() == ' '))
    s.pop_back();
  return s;
}

std::vector<std::string> read_vocab(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open vocabulary file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) throw ParseError(path.string(), lineno, "empty vocabulary token");
    tokens.push_back(line);
  }
  return tokens;
}

class TokenResolver {
 public:
  TokenResolver(const std::vector<std::string>& vocab, const char* kind) : kind_(kind), size_(vocab.size()) {
    for (std::size_t i = 0; i < vocab.size(); ++i) ids_.emplace(vocab[i], static_cast<std::int32_t>(i));
  }

  std::int32_t resolve(const std::string& token, const std::string& file, std::size_t line) const {
    if (auto it = ids_.find(token); it != ids_.end()) return it->second;
    long long value = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size())
      throw IntegrityError(file + ":" + std::to_string(line) + ": unknown " + kind_ + " '" + token + "'");
    if (value < 0 || static_cast<std::size_t>(value) >= size_)
      throw IntegrityError(file + ":" + std::to_string(line) + ": " + kind_ + " id " + token +
                           " out of range");
    return static_cast<std::int32_t>(value);
  }

 private:
  std::string kind_;
  std::size_t size_;
  std::unordered_map<std::string, std::int32_t> ids_;
};

std::vector<Triple> read_triples(const std::filesystem::path& path, const TokenResolver& entities,
                                 const TokenResolver& relations) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open triple file " + path.string());
  std::vector<Triple> triples;
  std::string line;
  std::size_t lineno = 0;
  const std::string file = path.string();
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    std::string fields[3];
    std::size_t start = 0;
    for (int f = 0; f < 3; ++f) {
      const auto tab = line.find('\t', start);
      if (f < 2 && tab == std::string::npos)
        throw ParseError(file, lineno, "expected head<TAB>relation<TAB>tail");
      if (f == 2 && tab != std::string::npos) throw ParseError(file, lineno, "too many fields");
      fields[f] = line.substr(start, f < 2 ? tab - start : std::string::npos);
      if (fields[f].empty()) throw ParseError(file, lineno, "empty field");
      start = tab + 1;
    }
    triples.push_back({entities.resolve(fields[0], file, lineno), relations.resolve(fields[1], file, lineno),
                       entities.resolve(fields[2], file, lineno)});
  }
  return triples;
}

void require_subset(const KnowledgeGraph& small, const KnowledgeGraph& big, const char* what) {
  for (const auto& t : small.triples())
    if (!big.contains(t))
      throw IntegrityError(std::string("split is not cumulative: ") + what + " misses triple (" +
                           std::to_string(t.head) + ", " + std::to_string(t.relation) + ", " +
                           std::to_string(t.tail) + ")");
}

}  // namespace

KnowledgeGraph::KnowledgeGraph(std::size_t entity_count, std::size_t relation_count,
                               std::vector<Triple> triples)
    : entity_count_(entity_count), relation_count_(relation_count) {
  std::unordered_set<Triple, TripleHash> seen;
  triples_.reserve(triples.size());
  for (const auto& t : triples) {
    if (t.head < 0 || static_cast<std::size_t>(t.head) >= entity_count || t.tail < 0 ||
        static_cast<std::size_t>(t.tail) >= entity_count)
      throw IntegrityError("triple entity id out of range");
    if (t.relation < 0 || static_cast<std::size_t>(t.relation) >= relation_count)
      throw IntegrityError("triple relation id out of range");
    if (seen.insert(t).second) triples_.push_back(t);
  }
  build_index();
}

void KnowledgeGraph::build_index() {
  build_csr(entity_count_, triples_, true, out_offset_, out_);
  build_csr(entity_count_, triples_, false, in_offset_, in_);
  sorted_ = triples_;
  std::sort(sorted_.begin(), sorted_.end());
}

std::span<const AdjacentEdge> KnowledgeGraph::out_edges(EntityId e) const {
  const auto i = static_cast<std::size_t>(e);
  return {out_.data() + out_offset_[i], out_offset_[i + 1] - out_offset_[i]};
}

std::span<const AdjacentEdge> KnowledgeGraph::in_edges(EntityId e) const {
  const auto i = static_cast<std::size_t>(e);
  return {in_.data() + in_offset_[i], in_offset_[i + 1] - in_offset_[i]};
}

bool KnowledgeGraph::contains(const Triple& t) const {
  return std::binary_search(sorted_.begin(), sorted_.end(), t);
}

SplitDataset load_split(const std::filesystem::path& dir, SplitLayout layout) {
  SplitDataset split;
  split.entity_names = read_vocab(dir / "entities.txt");
  split.relation_names = read_vocab(dir / "relations.txt");
  const TokenResolver entities(split.entity_names, "entity");
  const TokenResolver relations(split.relation_names, "relation");
  auto train = read_triples(dir / "train.txt", entities, relations);
  auto valid = read_triples(dir / "valid.txt", entities, relations);
  auto test = read_triples(dir / "test.txt", entities, relations);
  if (layout == SplitLayout::kDisjoint) {
    valid.insert(valid.begin(), train.begin(), train.end());
    test.insert(test.begin(), valid.begin(), valid.end());
  }
  const auto ne = split.entity_count();
  const auto nr = split.relation_count();
  split.train = KnowledgeGraph(ne, nr, std::move(train));
  split.valid = KnowledgeGraph(ne, nr, std::move(valid));
  split.test = KnowledgeGraph(ne, nr, std::move(test));
  require_subset(split.train, split.valid, "valid");
  require_subset(split.valid, split.test, "test");
  return split;
}

void write_split(const std::filesystem::path& dir, const SplitDataset& split) {
  std::filesystem::create_directories(dir);
  auto write_lines = [&](const char* name, const std::vector<std::string>& lines) {
    std::ofstream out(dir / name);
    for (const auto& l : lines) out << l << '\n';
  };
  write_lines("entities.txt", split.entity_names);
  write_lines("relations.txt", split.relation_names);
  auto write_graph = [&](const char* name, const KnowledgeGraph& g) {
    std::ofstream out(dir / name);
    for (const auto& t : g.triples()) out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
  };
  write_graph("train.txt", split.train);
  write_graph("valid.txt", split.valid);
  write_graph("test.txt", split.test);
}

LeviGraph LeviGraph::from_slots(std::vector<EntityId> slot_entities, std::span<const SlotEdge> edges) {
  LeviGraph g;
  g.entity_slots_ = slot_entities.size();
  g.nodes_.reserve(slot_entities.size() + edges.size());
  for (auto e : slot_entities) g.nodes_.push_back({LeviNode::Kind::kEntity, e, -1});
  g.edges_.reserve(2 * edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto& e = edges[i];
    if (e.src >= g.entity_slots_ || e.dst >= g.entity_slots_)
      throw IntegrityError("slot edge references a missing entity slot");
    const auto rel_node = static_cast<std::uint32_t>(g.nodes_.size());
    g.nodes_.push_back({LeviNode::Kind::kRelation, e.relation, static_cast<std::int32_t>(i)});
    g.edges_.emplace_back(e.src, rel_node);
    g.edges_.emplace_back(rel_node, e.dst);
  }
  const auto n = g.nodes_.size();
  g.mask_.assign(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) g.mask_[i * n + i] = 1;
  for (auto [a, b] : g.edges_) {
    g.mask_[a * n + b] = 1;
    g.mask_[b * n + a] = 1;
  }
  return g;
}

std::vector<Triple> LeviGraph::recover_triples() const {
  std::vector<Triple> out;
  // Edges are emitted pairwise per relation-node: (src -> r), (r -> dst).
  for (std::size_t i = 0; i + 1 < edges_.size(); i += 2) {
    const auto rel = edges_[i].second;
    out.push_back({nodes_[edges_[i].first].id, nodes_[rel].id, nodes_[edges_[i + 1].second].id});
  }
  return out;
}

LeviGraph triple_transform(std::span<const Triple> triples, std::span<const EntityId> extra_entities) {
  std::vector<EntityId> entities(extra_entities.begin(), extra_entities.end());
  for (const auto& t : triples) {
    entities.push_back(t.head);
    entities.push_back(t.tail);
  }
  std::sort(entities.begin(), entities.end());
  entities.erase(std::unique(entities.begin(), entities.end()), entities.end());
  std::vector<SlotEdge> edges;
  edges.reserve(triples.size());
  auto slot_of = [&](EntityId e) {
    return static_cast<std::uint32_t>(std::lower_bound(entities.begin(), entities.end(), e) - entities.begin());
  };
  for (const auto& t : triples) edges.push_back({slot_of(t.head), t.relation, slot_of(t.tail)});
  return LeviGraph::from_slots(std::move(entities), edges);
}

LeviGraph triple_transform(const KnowledgeGraph& graph) { return triple_transform(graph.triples()); }

std::vector<std::uint32_t> neighborhood(const LeviGraph& levi, std::size_t node) {
  if (node >= levi.node_count()) throw std::out_of_range("neighborhood: node index out of range");
  std::vector<std::uint32_t> out;
  for (std::size_t j = 0; j < levi.node_count(); ++j)
    if (levi.attends(node, j)) out.push_back(static_cast<std::uint32_t>(j));
  return out;
}

}  // namespace kgt
