/**
 *  Copyright (c) 2026 by Contributors
 * @file test_sampler.cc
 * @brief Subgraph samplers, meta-graphs and mask corruption.
 */
#include <doctest.h>

#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>

#include "helpers.hpp"
#include "kgt/error.hpp"
#include "kgt/sampler.hpp"

using namespace kgt;

namespace {

KnowledgeGraph path_graph(int n) {
  std::vector<Triple> ts;
  for (int i = 0; i + 1 < n; ++i) ts.push_back({i, 0, i + 1});
  return KnowledgeGraph(n, 1, ts);
}

KnowledgeGraph star_graph(int leaves) {
  std::vector<Triple> ts;
  for (int i = 1; i <= leaves; ++i) ts.push_back({i, 0, 0});
  return KnowledgeGraph(leaves + 1, 1, ts);
}

// Union-find acyclicity check over the undirected view.
bool is_forest(const std::vector<Triple>& edges) {
  std::map<EntityId, EntityId> parent;
  std::function<EntityId(EntityId)> find = [&](EntityId x) {
    if (!parent.count(x)) parent[x] = x;
    return parent[x] == x ? x : parent[x] = find(parent[x]);
  };
  for (const auto& e : edges) {
    const auto a = find(e.head), b = find(e.tail);
    if (a == b) return false;
    parent[a] = b;
  }
  return true;
}

// 3 sigma of a binomial proportion.
double three_sigma(double p, double n) { return 3.0 * std::sqrt(p * (1.0 - p) / n); }

KnowledgeGraph dense_graph(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return KnowledgeGraph(60, 4, test::random_triples(rng, 60, 4, 400));
}

}  // namespace

TEST_SUITE("sampler") {

TEST_CASE("rwr_sample") {
  Rng rng(1);
  SUBCASE("restart every step stays within the start's neighborhood") {
    std::mt19937_64 g(2);
    const KnowledgeGraph kg(20, 2, test::random_triples(g, 20, 2, 40));
    std::set<EntityId> allowed{3};
    for (const auto& e : kg.out_edges(3)) allowed.insert(e.other);
    for (const auto& e : kg.in_edges(3)) allowed.insert(e.other);
    for (int i = 0; i < 50; ++i)
      for (auto v : rwr_sample(kg, 3, 1.0, 4, 8, rng).nodes) CHECK(allowed.count(v));
  }
  SUBCASE("path graph without restarts is forced") {
    const auto s = rwr_sample(path_graph(3), 0, 0.0, 3, 3, rng);
    CHECK(std::set<EntityId>(s.nodes.begin(), s.nodes.end()) == std::set<EntityId>{0, 1, 2});
    CHECK_FALSE(s.exhausted);
  }
  SUBCASE("star from its center gives the center and seven leaves") {
    for (int i = 0; i < 20; ++i) {
      const auto s = rwr_sample(star_graph(10), 0, 0.2, 8, 8, rng);
      CHECK(s.nodes.size() == 8);
      CHECK(s.nodes[0] == 0);
      CHECK(std::set<EntityId>(s.nodes.begin(), s.nodes.end()).size() == 8);
    }
  }
  SUBCASE("small component is flagged") {
    const auto s = rwr_sample(path_graph(3), 0, 0.3, 5, 5, rng);
    CHECK(s.exhausted);
    CHECK(s.nodes.size() == 3);
  }
  SUBCASE("bad parameters") {
    CHECK_THROWS_AS(rwr_sample(path_graph(3), 0, 1.5, 1, 2, rng), ConfigError);
    CHECK_THROWS_AS(rwr_sample(path_graph(3), 0, 0.5, 3, 2, rng), ConfigError);
  }
}

TEST_CASE("meta_tree_sample") {
  Rng rng(3);
  SUBCASE("path of three nodes is forced") {
    const auto s = meta_tree_sample(path_graph(3), 3, 3, rng, 0);
    CHECK(s.nodes.size() == 3);
    CHECK(s.edges.size() == 2);
  }
  SUBCASE("triangle keeps only two edges") {
    const KnowledgeGraph tri(3, 1, {{0, 0, 1}, {1, 0, 2}, {2, 0, 0}});
    for (int i = 0; i < 20; ++i) {
      const auto s = meta_tree_sample(tri, 3, 3, rng);
      CHECK(s.nodes.size() == 3);
      CHECK(s.edges.size() == 2);
    }
  }
  SUBCASE("outputs are always trees within the budget") {
    const auto g = dense_graph(4);
    for (int i = 0; i < 500; ++i) {
      const auto s = meta_tree_sample(g, 8, 16, rng);
      CHECK(s.edges.size() + 1 == s.nodes.size());
      CHECK(is_forest(s.edges));
      CHECK(s.nodes.size() >= 8);
      CHECK(s.nodes.size() <= 16);
      CHECK(std::set<EntityId>(s.nodes.begin(), s.nodes.end()).size() == s.nodes.size());
    }
  }
  SUBCASE("exhausted component") {
    const auto s = meta_tree_sample(path_graph(4), 8, 8, rng, 0);
    CHECK(s.exhausted);
    CHECK(s.nodes.size() == 4);
  }
}

TEST_CASE("layer_dependent_sample") {
  Rng rng(5);
  SUBCASE("one layer with a wide budget takes every neighbour") {
    const EntityId seed[] = {0};
    const auto s = layer_dependent_sample(star_graph(6), seed, 10, 1, rng);
    CHECK(std::set<EntityId>(s.nodes.begin(), s.nodes.end()) == std::set<EntityId>{0, 1, 2, 3, 4, 5, 6});
  }
  SUBCASE("selection is proportional to connections into the sample") {
    // Candidate 1 has three edges into {0}, candidate 2 has one.
    const KnowledgeGraph g(3, 3, {{0, 0, 1}, {0, 1, 1}, {1, 2, 0}, {2, 0, 0}});
    const EntityId seed[] = {0};
    const int trials = 40000;
    int first = 0;
    for (int i = 0; i < trials; ++i) first += layer_dependent_sample(g, seed, 1, 1, rng).nodes[1] == 1;
    CHECK(std::abs(first / double(trials) - 0.75) <= three_sigma(0.75, trials));
  }
  SUBCASE("disconnected seed is flagged") {
    const KnowledgeGraph g(3, 1, {{1, 0, 2}});
    const EntityId seed[] = {0};
    const auto s = layer_dependent_sample(g, seed, 4, 2, rng);
    CHECK(s.nodes == std::vector<EntityId>{0});
    CHECK(s.exhausted);
  }
  SUBCASE("bad parameters") {
    const EntityId seed[] = {0};
    CHECK_THROWS_AS(layer_dependent_sample(star_graph(2), seed, 0, 1, rng), ConfigError);
    CHECK_THROWS_AS(layer_dependent_sample(star_graph(2), seed, 1, 0, rng), ConfigError);
  }
}

TEST_CASE("induce_subgraph") {
  Rng rng(6);
  SUBCASE("ratio one is the exact induced set") {
    const KnowledgeGraph g(4, 1, {{0, 0, 1}, {1, 0, 2}, {2, 0, 3}, {3, 0, 0}});
    const EntityId nodes[] = {0, 1, 2};
    CHECK(induce_subgraph(g, nodes, 1.0, rng) == std::vector<Triple>{{0, 0, 1}, {1, 0, 2}});
  }
  SUBCASE("nodes without induced edges") {
    const KnowledgeGraph g(4, 1, {{0, 0, 1}, {2, 0, 3}});
    const EntityId nodes[] = {0, 2};
    CHECK(induce_subgraph(g, nodes, 1.0, rng).empty());
  }
  SUBCASE("ratio 0.8 over 10000 edges stays within 3 sigma") {
    std::vector<Triple> ts;
    for (int h = 0; h < 100; ++h)
      for (int t = 0; t < 100; ++t) ts.push_back({h, 0, t});
    const KnowledgeGraph g(100, 1, ts);
    std::vector<EntityId> nodes(100);
    std::iota(nodes.begin(), nodes.end(), 0);
    const auto kept = static_cast<double>(induce_subgraph(g, nodes, 0.8, rng).size());
    CHECK(std::abs(kept - 8000.0) <= 120.0);
  }
  SUBCASE("ratio out of range") {
    const EntityId nodes[] = {0};
    CHECK_THROWS_AS(induce_subgraph(path_graph(2), nodes, 0.0, rng), ConfigError);
  }
}

TEST_CASE("meta-graphs") {
  Rng rng(8);
  SUBCASE("branch on a star center gives 2i over distinct leaves") {
    const auto g = star_graph(5);
    for (int i = 0; i < 20; ++i) {
      const auto s = try_branch(g, 0, 2, rng);
      REQUIRE(s);
      CHECK(s->shape == QueryType::k2i);
      CHECK(s->original_entities[2] == 0);
      CHECK(s->original_entities[0] != s->original_entities[1]);
      CHECK(s->mask_positions == std::vector<std::uint32_t>{2});
      CHECK(s->prediction_targets == std::vector<std::uint32_t>{2});
    }
  }
  SUBCASE("isolated node and single-neighbour targets are rejected in branch mode") {
    const KnowledgeGraph g(3, 1, {{1, 0, 2}});
    CHECK_FALSE(try_branch(g, 0, 2, rng));
    CHECK_FALSE(try_branch(g, 2, 2, rng));
  }
  SUBCASE("chains may revisit a self-loop node") {
    const KnowledgeGraph g(1, 1, {{0, 0, 0}});
    const auto s = try_chain(g, 0, 3, rng);
    REQUIRE(s);
    CHECK(s->shape == QueryType::k3p);
    CHECK(s->original_entities[0] == 0);
    CHECK(s->original_entities[3] == 0);
  }
  SUBCASE("meta-graphs use template edges only and predict the target") {
    const auto g = dense_graph(9);
    for (int i = 0; i < 300; ++i) {
      const auto s = sample_meta_graph(g, {}, rng);
      REQUIRE(s.shape);
      const auto& tpl = query_template(*s.shape);
      CHECK(s.levi.edge_count() == 2 * static_cast<std::size_t>(tpl.relations));
      CHECK(s.levi.entity_node_count() == static_cast<std::size_t>(tpl.variables));
      CHECK(s.prediction_targets == std::vector<std::uint32_t>{static_cast<std::uint32_t>(tpl.target())});
      for (auto m : s.mask_positions) CHECK(m >= static_cast<std::uint32_t>(tpl.anchors));
      for (const auto& t : s.levi.recover_triples()) CHECK(g.contains(t));
    }
  }
  SUBCASE("chain fraction follows the configured ratio") {
    const auto g = dense_graph(10);
    MetaGraphOptions opt;
    opt.chain_ratio = 4.0;
    const int trials = 100000;
    int chains = 0;
    for (int i = 0; i < trials; ++i) {
      const auto shape = *sample_meta_graph(g, opt, rng).shape;
      chains += shape == QueryType::k1p || shape == QueryType::k2p || shape == QueryType::k3p;
    }
    CHECK(std::abs(chains / double(trials) - 0.8) <= three_sigma(0.8, trials));
  }
  SUBCASE("rejection bound") {
    const KnowledgeGraph g(3, 1, {{1, 0, 2}});
    MetaGraphOptions opt;
    opt.chain_ratio = 1e-12;
    CHECK_THROWS_AS(sample_meta_graph(g, opt, rng), SamplingError);
  }
}

TEST_CASE("corrupt_masks") {
  Rng rng(12);
  SUBCASE("category frequencies over 100000 positions") {
    SampledSubgraph sub;
    sub.mask_positions.resize(100000);
    const auto out = corrupt_masks(sub, 7, rng);
    std::map<Corruption, int> count;
    for (const auto& t : out.corruption) {
      ++count[t.kind];
      if (t.kind == Corruption::kRandomReplace) {
        CHECK(t.replacement >= 0);
        CHECK(t.replacement < 7);
      }
    }
    const double n = 100000;
    CHECK(std::abs(count[Corruption::kMaskToken] / n - 0.8) <= 0.004);
    CHECK(std::abs(count[Corruption::kUnchanged] / n - 0.1) <= three_sigma(0.1, n));
    CHECK(std::abs(count[Corruption::kRandomReplace] / n - 0.1) <= three_sigma(0.1, n));
  }
  SUBCASE("no masked positions is the identity") {
    const Triple t{0, 0, 1};
    SampledSubgraph sub;
    sub.levi = triple_transform(std::span<const Triple>(&t, 1));
    sub.original_entities = {0, 1, kNoEntity};
    const auto out = corrupt_masks(sub, 2, rng);
    CHECK(out.corruption.empty());
    CHECK(out.original_entities == sub.original_entities);
  }
}

TEST_CASE("stage-1 batches") {
  const auto g = dense_graph(14);
  Stage1Options opt;
  SUBCASE("sizes stay within [8, 16] and masks are entity-nodes") {
    Rng rng(15);
    for (int b = 0; b < 50; ++b) {
      const auto batch = sample_stage1_batch(g, opt, 4, rng);
      REQUIRE(batch.size() == 4);
      for (const auto& s : batch) {
        const auto n = s.levi.entity_node_count();
        CHECK(n >= 8);
        CHECK(n <= 16);
        CHECK(s.mask_positions.size() == static_cast<std::size_t>(std::ceil(0.25 * n)));
        CHECK(s.prediction_targets == s.mask_positions);
        for (auto m : s.mask_positions) CHECK(m < n);
        CHECK(s.levi.edge_count() == 2 * (s.levi.node_count() - n));
      }
    }
  }
  SUBCASE("tiny mask rate still masks one node") {
    Rng rng(16);
    opt.mask_rate = 1e-6;
    for (const auto& s : sample_stage1_batch(g, opt, 8, rng)) CHECK(s.mask_positions.size() == 1);
  }
  SUBCASE("same seed, same batch") {
    Rng a(17), b(17);
    const auto x = sample_stage1_batch(g, opt, 6, a);
    const auto y = sample_stage1_batch(g, opt, 6, b);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(x[i].original_entities == y[i].original_entities);
      CHECK(x[i].levi.edges() == y[i].levi.edges());
      CHECK(x[i].mask_positions == y[i].mask_positions);
      for (std::size_t j = 0; j < x[i].corruption.size(); ++j) {
        CHECK(x[i].corruption[j].kind == y[i].corruption[j].kind);
        CHECK(x[i].corruption[j].replacement == y[i].corruption[j].replacement);
      }
    }
  }
  SUBCASE("errors") {
    Rng rng(18);
    CHECK_THROWS_AS(sample_stage1_batch(g, opt, 0, rng), ConfigError);
    opt.mask_rate = 1.0;
    CHECK_THROWS_AS(sample_stage1_batch(g, opt, 1, rng), ConfigError);
    CHECK_THROWS_AS(sample_stage1_batch(KnowledgeGraph(3, 1, {}), Stage1Options{}, 1, rng), SamplingError);
  }
}

}  // TEST_SUITE
