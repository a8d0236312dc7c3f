/**
 *  Copyright (c) 2026 by Contributors
 * @file kgt/gradsuite.hpp
 * @brief Finite-difference checks over every differentiable tape operation
 *        and over full encoder losses.
 */
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kgt/gradcheck.hpp"
#include "kgt/model.hpp"

namespace kgt {

inline constexpr double kOpTolerance = 1e-4;
inline constexpr double kModelTolerance = 1e-3;

using EncoderLoss = std::function<nn::Var(Encoder<double>&)>;

/// Compares accumulated encoder gradients with central differences taken
/// directly on the parameter tensors (at most `max_elements` per tensor).
nn::GradcheckReport model_gradcheck(std::string name, ModelParameters<double> params, const EncoderLoss& loss,
                                    double tolerance, std::size_t max_elements = static_cast<std::size_t>(-1));

/// One report per tape operation (tolerance 1e-4).
std::vector<nn::GradcheckReport> op_gradchecks(std::uint64_t seed);

/// Attention layer, MoE block and end-to-end losses on a 5-node graph with
/// L=2, d=8, H=2, N=2.
std::vector<nn::GradcheckReport> model_gradchecks(std::uint64_t seed);

}  // namespace kgt
