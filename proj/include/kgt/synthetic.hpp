/**
 *  Copyright (c) 2026 by Contributors
 * @file kgt/synthetic.hpp
 * @brief Small structured knowledge graphs for smoke runs and tests.
 */
#pragma once

#include <cstddef>
#include <cstdint>

#include "kgt/graph.hpp"

namespace kgt {

struct SyntheticOptions {
  std::size_t entities = 50;
  std::size_t relations = 5;
  /// Probability that a structured edge h -> (h + offset_r) mod |E| exists.
  double edge_probability = 0.7;
  /// Uniformly random extra triples.
  std::size_t noise_triples = 25;
  double valid_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t seed = 0;
};

/// Relation r links h to (h + offset_r) mod |E| with Fibonacci-like offsets
/// (1, 3, 4, 7, 11, ...), so some relations compose into others. The held-out
/// fractions are moved from train into valid/test.
SplitDataset make_synthetic_split(const SyntheticOptions& options);

}  // namespace kgt
