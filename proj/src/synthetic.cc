/**
 *  Copyright (c) 2026 by Contributors
 * @file synthetic.cc
 * @brief Structured toy knowledge graphs.
 */
#include "kgt/synthetic.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <string>

#include "kgt/error.hpp"

namespace kgt {

SplitDataset make_synthetic_split(const SyntheticOptions& options) {
  if (options.entities < 2 || options.relations < 1) throw ConfigError("synthetic graph too small");
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto n = static_cast<EntityId>(options.entities);

  std::vector<EntityId> offsets{1, 3};
  while (offsets.size() < options.relations) offsets.push_back(offsets[offsets.size() - 1] + offsets[offsets.size() - 2]);

  std::set<Triple> unique;
  std::vector<Triple> triples;
  auto add = [&](Triple t) {
    if (unique.insert(t).second) triples.push_back(t);
  };
  for (RelationId r = 0; r < static_cast<RelationId>(options.relations); ++r)
    for (EntityId h = 0; h < n; ++h)
      if (unit(rng) < options.edge_probability) add({h, r, (h + offsets[r]) % n});
  std::uniform_int_distribution<EntityId> any_entity(0, n - 1);
  std::uniform_int_distribution<RelationId> any_relation(0, static_cast<RelationId>(options.relations) - 1);
  for (std::size_t i = 0; i < options.noise_triples; ++i) add({any_entity(rng), any_relation(rng), any_entity(rng)});

  std::shuffle(triples.begin(), triples.end(), rng);
  const auto n_valid = static_cast<std::size_t>(options.valid_fraction * static_cast<double>(triples.size()));
  const auto n_test = static_cast<std::size_t>(options.test_fraction * static_cast<double>(triples.size()));
  const std::size_t n_train = triples.size() - n_valid - n_test;

  SplitDataset split;
  for (std::size_t e = 0; e < options.entities; ++e) split.entity_names.push_back("e" + std::to_string(e));
  for (std::size_t r = 0; r < options.relations; ++r) split.relation_names.push_back("r" + std::to_string(r));
  std::vector<Triple> train(triples.begin(), triples.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<Triple> valid(triples.begin(), triples.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
  std::sort(train.begin(), train.end());
  std::sort(valid.begin(), valid.end());
  std::sort(triples.begin(), triples.end());
  split.train = KnowledgeGraph(options.entities, options.relations, std::move(train));
  split.valid = KnowledgeGraph(options.entities, options.relations, std::move(valid));
  split.test = KnowledgeGraph(options.entities, options.relations, std::move(triples));
  return split;
}

}  // namespace kgt
