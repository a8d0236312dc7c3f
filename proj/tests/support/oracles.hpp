/**
 *  Copyright (c) 2026 by Contributors
 * @file oracles.hpp
 * @brief Brute-force reference implementations shared by the unit tests and
 *        the acceptance suite. None of them call into the code they check.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "kgt/model.hpp"
#include "kgt/query.hpp"

namespace kgt::oracle {

/// Exhaustive assignment of every non-anchor variable. Edges into the union
/// variable are OR-ed, all others AND-ed.
inline std::vector<EntityId> brute_force_answers(const KnowledgeGraph& g, const QueryGraph& q) {
  const auto& tpl = query_template(q.type);
  const auto n = static_cast<EntityId>(g.entity_count());
  std::set<EntityId> answers;
  std::vector<EntityId> bind(tpl.variables);
  std::copy(q.anchors.begin(), q.anchors.end(), bind.begin());
  std::size_t total = 1;
  for (int i = tpl.anchors; i < tpl.variables; ++i) total *= static_cast<std::size_t>(n);
  for (std::size_t code = 0; code < total; ++code) {
    auto c = code;
    for (int v = tpl.anchors; v < tpl.variables; ++v) {
      bind[v] = static_cast<EntityId>(c % n);
      c /= n;
    }
    bool ok = true, any_union = false;
    for (const auto& e : tpl.edges) {
      const bool holds = g.contains({bind[e.src], q.relations[e.relation_slot], bind[e.dst]});
      if (e.dst == tpl.union_variable)
        any_union = any_union || holds;
      else
        ok = ok && holds;
    }
    if (tpl.union_variable >= 0) ok = ok && any_union;
    if (ok) answers.insert(bind[tpl.target()]);
  }
  return {answers.begin(), answers.end()};
}

/// Rank by sorting every surviving competitor, descending; optimistic ties.
inline std::size_t sorted_rank(const std::vector<double>& scores, std::size_t answer,
                               const std::set<std::size_t>& filter_out) {
  std::vector<std::pair<double, int>> pool;  // (score, is_answer); answers sort first among equals
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (i == answer || !filter_out.count(i)) pool.push_back({scores[i], i == answer ? 1 : 0});
  std::sort(pool.begin(), pool.end(), [](auto a, auto b) { return a.first != b.first ? a.first > b.first : a.second > b.second; });
  for (std::size_t r = 0; r < pool.size(); ++r)
    if (pool[r].second) return r + 1;
  return 0;
}

/// Per-entity rank of a score vector: 1 + number of strictly higher scores.
inline std::vector<std::size_t> rank_table(const std::vector<double>& scores) {
  std::vector<std::size_t> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    std::size_t higher = 0;
    for (double s : scores) higher += s > scores[i];
    out[i] = higher + 1;
  }
  return out;
}

inline double gelu(double x) {
  const double c = std::sqrt(2.0 / std::acos(-1.0));
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

/// Raw mixture output for a [rows x d] input: every expert is evaluated,
/// then either the `top_k` largest gate logits (training) or all of them are
/// softmax-weighted.
template <typename T>
std::vector<double> moe(const ModelParameters<T>& p, std::size_t layer, const std::vector<double>& x,
                        std::size_t rows, bool training) {
  const auto& L = p.layers.at(layer);
  const std::size_t d = p.config.hidden, n = p.config.experts, w = p.config.expert_width();
  std::vector<double> out(rows * d, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * d;
    std::vector<std::vector<double>> expert_out(n, std::vector<double>(d));
    for (std::size_t e = 0; e < n; ++e) {
      const auto& E = L.experts[e];
      std::vector<double> h(w);
      for (std::size_t j = 0; j < w; ++j) {
        double s = E.b1.values[j];
        for (std::size_t i = 0; i < d; ++i) s += xr[i] * E.w1.values[i * w + j];
        h[j] = gelu(s);
      }
      for (std::size_t j = 0; j < d; ++j) {
        double s = E.b2.values[j];
        for (std::size_t i = 0; i < w; ++i) s += h[i] * E.w2.values[i * d + j];
        expert_out[e][j] = s;
      }
    }
    std::vector<double> g(n);
    for (std::size_t e = 0; e < n; ++e) {
      double s = 0;
      for (std::size_t i = 0; i < d; ++i) s += xr[i] * L.gate.values[i * n + e];
      g[e] = s;
    }
    std::vector<std::size_t> order(n);
    for (std::size_t e = 0; e < n; ++e) order[e] = e;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return g[a] > g[b]; });
    const std::size_t used = training ? p.config.top_k : n;
    double mx = g[order[0]], z = 0;
    for (std::size_t k = 0; k < used; ++k) z += std::exp(g[order[k]] - mx);
    for (std::size_t k = 0; k < used; ++k) {
      const double weight = std::exp(g[order[k]] - mx) / z;
      for (std::size_t j = 0; j < d; ++j) out[r * d + j] += weight * expert_out[order[k]][j];
    }
  }
  return out;
}

}  // namespace kgt::oracle
