/**
 *  Copyright (c) 2026 by Contributors
 * @file gradsuite.cc
 * @brief Gradient check suite.
 */
#include "kgt/gradsuite.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "kgt/training.hpp"

namespace kgt {

using nn::GradcheckReport;
using nn::Tape;
using nn::Tensor;
using nn::Var;

GradcheckReport model_gradcheck(std::string name, ModelParameters<double> params, const EncoderLoss& loss,
                                double tolerance, std::size_t max_elements) {
  std::vector<std::vector<double>> analytic;
  {
    Tape<double> tape;
    Encoder<double> enc(params, tape);
    tape.backward(loss(enc));
    enc.accumulate_grads(analytic);
  }
  auto evaluate = [&] {
    Tape<double> tape;
    Encoder<double> enc(params, tape);
    return tape.scalar(loss(enc));
  };
  constexpr double kStep = 1e-6, kFloor = 1e-4;
  GradcheckReport report{std::move(name), 0.0, 0, tolerance};
  auto tensors = params.tensors();
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    auto& values = tensors[k]->values;
    for (std::size_t i = 0; i < std::min(values.size(), max_elements); ++i) {
      const double saved = values[i];
      values[i] = saved + kStep;
      const double up = evaluate();
      values[i] = saved - kStep;
      const double down = evaluate();
      values[i] = saved;
      const double numeric = (up - down) / (2 * kStep);
      const double a = analytic[k][i];
      report.max_rel_error =
          std::max(report.max_rel_error, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kFloor}));
      ++report.checked;
    }
  }
  return report;
}

namespace {

Tensor<double> random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  std::normal_distribution<double> normal(0.0, scale);
  for (auto& v : t.values) v = normal(rng);
  return t;
}

// Reduces a matrix to a scalar with non-uniform sensitivities.
Var reduce(Tape<double>& t, Var x, const Tensor<double>& proj) {
  return t.sum(t.gelu(t.matmul(x, t.constant(proj))));
}

}  // namespace

std::vector<GradcheckReport> op_gradchecks(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradcheckReport> out;
  auto check = [&](std::string name, std::vector<Tensor<double>> inputs, std::size_t out_cols,
                   std::function<Var(Tape<double>&, const std::vector<Var>&)> op) {
    const auto proj = random_tensor({out_cols, 3}, rng);
    out.push_back(nn::gradcheck(
        std::move(name), std::move(inputs),
        [&, proj](Tape<double>& t, const std::vector<Var>& in) { return reduce(t, op(t, in), proj); }, kOpTolerance));
  };
  auto scalar_check = [&](std::string name, std::vector<Tensor<double>> inputs, nn::LossBuilder op) {
    out.push_back(nn::gradcheck(std::move(name), std::move(inputs), op, kOpTolerance));
  };

  check("matmul", {random_tensor({5, 7}, rng), random_tensor({7, 3}, rng)}, 3,
        [](auto& t, const auto& in) { return t.matmul(in[0], in[1]); });
  check("matmul_nt", {random_tensor({4, 6}, rng), random_tensor({5, 6}, rng)}, 5,
        [](auto& t, const auto& in) { return t.matmul_nt(in[0], in[1]); });
  check("add", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)}, 4,
        [](auto& t, const auto& in) { return t.add(in[0], in[1]); });
  check("add_row", {random_tensor({3, 4}, rng), random_tensor({4}, rng)}, 4,
        [](auto& t, const auto& in) { return t.add_row(in[0], in[1]); });
  check("scale", {random_tensor({3, 4}, rng)}, 4, [](auto& t, const auto& in) { return t.scale(in[0], -0.7); });
  check("row_scale", {random_tensor({4, 3}, rng), random_tensor({4, 1}, rng)}, 3,
        [](auto& t, const auto& in) { return t.row_scale(in[0], in[1]); });
  check("concat_cols", {random_tensor({3, 2}, rng), random_tensor({3, 4}, rng)}, 6,
        [](auto& t, const auto& in) { return t.concat_cols(in); });
  check("gather_rows", {random_tensor({5, 3}, rng)}, 3,
        [](auto& t, const auto& in) { return t.gather_rows(in[0], {0, 2, 2, 4}); });
  check("scatter_rows", {random_tensor({3, 2}, rng)}, 2,
        [](auto& t, const auto& in) { return t.scatter_rows(in[0], {4, 0, 4}, 5); });
  check("pick_column", {random_tensor({4, 3}, rng)}, 1,
        [](auto& t, const auto& in) { return t.pick_column(in[0], 1, {0, 2, 3}); });
  scalar_check("sum", {random_tensor({3, 3}, rng)}, [](auto& t, const auto& in) { return t.sum(t.gelu(in[0])); });
  check("gelu", {random_tensor({4, 5}, rng, 2.0)}, 5, [](auto& t, const auto& in) { return t.gelu(in[0]); });
  check("layer_norm", {random_tensor({3, 5}, rng), random_tensor({5}, rng), random_tensor({5}, rng)}, 5,
        [](auto& t, const auto& in) { return t.layer_norm(in[0], in[1], in[2]); });
  check("dropout", {random_tensor({4, 5}, rng)}, 5, [](auto& t, const auto& in) {
    Rng mask_rng(99);  // same mask on every evaluation
    return t.dropout(in[0], 0.3, mask_rng, true);
  });
  {
    std::vector<std::uint8_t> mask(4 * 5);
    std::bernoulli_distribution coin(0.6);
    for (auto& m : mask) m = coin(rng);
    for (std::size_t i = 0; i < 4; ++i) mask[i * 5 + i] = 1;
    check("masked_softmax", {random_tensor({4, 5}, rng)}, 5,
          [mask](auto& t, const auto& in) { return t.masked_softmax(in[0], mask); });
  }
  scalar_check("cross_entropy_smoothed", {random_tensor({3, 6}, rng)},
               [](auto& t, const auto& in) { return t.cross_entropy_smoothed(in[0], {1, 5, 0}, 0.1); });
  scalar_check("cross_entropy_hard", {random_tensor({3, 6}, rng)},
               [](auto& t, const auto& in) { return t.cross_entropy_smoothed(in[0], {2, 2, 4}, 0.0); });
  scalar_check("answer_set_nll", {random_tensor({1, 7}, rng)},
               [](auto& t, const auto& in) { return t.answer_set_nll(in[0], {1, 4, 6}); });
  return out;
}

namespace {

// Two triples on three entities: a -> r0 -> b <- r1 <- c, five Levi nodes.
SampledSubgraph five_node_graph() {
  const std::vector<Triple> triples{{0, 0, 1}, {2, 1, 1}};
  SampledSubgraph sub;
  sub.levi = triple_transform(triples);
  for (const auto& n : sub.levi.nodes()) sub.original_entities.push_back(n.is_entity() ? n.id : kNoEntity);
  sub.mask_positions = {1};
  sub.prediction_targets = {1};
  sub.corruption = {CorruptionTag{}};
  return sub;
}

}  // namespace

std::vector<GradcheckReport> model_gradchecks(std::uint64_t seed) {
  ModelConfig c;
  c.entity_count = 5;
  c.relation_count = 2;
  c.layers = 2;
  c.hidden = 8;
  c.heads = 2;
  c.experts = 2;
  c.dropout = 0.0;
  c.init_std = 0.5;  // large enough that every layer carries signal
  const auto params = init_parameters(c, seed).cast<double>();
  auto perturbed = params;
  {
    // Nonzero biases and non-unit gains exercise every backward branch.
    Rng rng(seed + 1);
    std::normal_distribution<double> normal(0.0, 0.3);
    perturbed.visit([&](const std::string& name, Tensor<double>& t) {
      if (name.ends_with("gain") || name.ends_with("bias") || name.ends_with(".b1") || name.ends_with(".b2"))
        for (auto& v : t.values) v += normal(rng);
    });
  }
  const auto sub = five_node_graph();
  const auto input = make_input(sub, c);
  Rng rng(seed + 2);
  const auto proj = random_tensor({c.hidden, 3}, rng);

  std::vector<GradcheckReport> out;
  out.push_back(model_gradcheck(
      "attention_layer", perturbed,
      [&](Encoder<double>& e) {
        return reduce(e.tape(), e.attention_block(e.embed(input), input.mask, 0, true), proj);
      },
      kOpTolerance));
  out.push_back(model_gradcheck(
      "moe_block", perturbed,
      [&](Encoder<double>& e) { return reduce(e.tape(), e.moe_block(e.embed(input), 1, true), proj); },
      kOpTolerance));
  out.push_back(model_gradcheck(
      "end_to_end_pretrain_loss", perturbed,
      [&](Encoder<double>& e) { return subgraph_loss(e, sub, c, 0.1, true); }, kModelTolerance));
  const auto query = build_query(QueryType::k2p, {0}, {0, 1}, c.entity_count, c.relation_count);
  const std::vector<EntityId> answers{2, 4};
  out.push_back(model_gradcheck(
      "end_to_end_finetune_loss", perturbed,
      [&](Encoder<double>& e) { return query_loss(e, query, answers, c, true); }, kModelTolerance));
  return out;
}

}  // namespace kgt
