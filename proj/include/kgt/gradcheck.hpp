/**
 *  Copyright (c) 2026 by Contributors
 * @file kgt/gradcheck.hpp
 * @brief Central finite-difference checks of tape gradients (double precision).
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "kgt/tensor.hpp"

namespace kgt::nn {

struct GradcheckReport {
  std::string name;
  double max_rel_error = 0;
  std::size_t checked = 0;
  double tolerance = 0;
  bool passed() const { return max_rel_error <= tolerance; }
};

/// Builds a scalar loss from leaves bound to `inputs`.
using LossBuilder = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

/// Relative error |a - n| / max(|a|, |n|, floor) per element, maximized over
/// every element of every input (or the first `max_elements` per input).
inline GradcheckReport gradcheck(std::string name, std::vector<Tensor<double>> inputs, const LossBuilder& build,
                                 double tolerance, double step = 1e-6, double floor = 1e-4,
                                 std::size_t max_elements = static_cast<std::size_t>(-1)) {
  std::vector<std::vector<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Var> leaves;
    for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
    const Var loss = build(tape, leaves);
    tape.backward(loss);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      auto g = tape.grad(leaves[k]);
      analytic.emplace_back(g.begin(), g.end());
      analytic.back().resize(inputs[k].size(), 0.0);
    }
  }
  auto evaluate = [&]() {
    Tape<double> tape;
    std::vector<Var> leaves;
    for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
    return tape.scalar(build(tape, leaves));
  };
  GradcheckReport report{std::move(name), 0.0, 0, tolerance};
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const std::size_t n = std::min(inputs[k].size(), max_elements);
    for (std::size_t i = 0; i < n; ++i) {
      double& x = inputs[k].values[i];
      const double saved = x;
      x = saved + step;
      const double up = evaluate();
      x = saved - step;
      const double down = evaluate();
      x = saved;
      const double numeric = (up - down) / (2 * step);
      const double a = analytic[k][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      report.max_rel_error = std::max(report.max_rel_error, rel);
      ++report.checked;
    }
  }
  return report;
}

}  // namespace kgt::nn
