/**
 *  Copyright (c) 2026 by Contributors
 * @file model.cc
 * @brief Encoder forward pass, parameter initialization and input building.
 */
#include "kgt/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kgt/error.hpp"

namespace kgt {

using nn::Tape;
using nn::Tensor;
using nn::Var;

void ModelConfig::validate() const {
  if (entity_count == 0) throw ConfigError("model.entity_count must be positive");
  if (relation_count == 0) throw ConfigError("model.relation_count must be positive");
  if (layers == 0) throw ConfigError("model.layers must be positive");
  if (hidden == 0 || heads == 0 || hidden % heads != 0)
    throw ConfigError("model.hidden must be a positive multiple of model.heads");
  if (top_k < 1 || experts < top_k) throw ConfigError("model.experts must be >= model.top_k >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.dropout must lie in [0, 1)");
  if (!(init_std > 0.0)) throw ConfigError("model.init_std must be positive");
}

std::size_t expert_weight_count(const ModelConfig& c) { return c.experts * 2 * c.hidden * c.expert_width(); }

std::size_t dense_ffn_weight_count(std::size_t hidden, std::size_t width) { return 2 * hidden * width; }

ModelParameters<float> allocate_parameters(const ModelConfig& c) {
  c.validate();
  const auto d = c.hidden, dh = c.head_dim(), w = c.expert_width();
  ModelParameters<float> p;
  p.config = c;
  p.entity_input = Tensor<float>({c.entity_count + 1, d});
  p.relation_input = Tensor<float>({c.relation_count, d});
  p.node_type = Tensor<float>({2, d});
  for (std::size_t l = 0; l < c.layers; ++l) {
    LayerParams<float> L;
    L.attn_ln_gain = Tensor<float>({d});
    L.attn_ln_bias = Tensor<float>({d});
    for (std::size_t h = 0; h < c.heads; ++h) {
      L.wq.emplace_back(std::vector<std::size_t>{d, dh});
      L.wk.emplace_back(std::vector<std::size_t>{d, dh});
      L.wv.emplace_back(std::vector<std::size_t>{d, dh});
    }
    L.wo = Tensor<float>({d, d});
    L.ffn_ln_gain = Tensor<float>({d});
    L.ffn_ln_bias = Tensor<float>({d});
    L.gate = Tensor<float>({d, c.experts});
    for (std::size_t e = 0; e < c.experts; ++e)
      L.experts.push_back({Tensor<float>({d, w}), Tensor<float>({w}), Tensor<float>({w, d}), Tensor<float>({d})});
    p.layers.push_back(std::move(L));
  }
  p.final_ln_gain = Tensor<float>({d});
  p.final_ln_bias = Tensor<float>({d});
  if (!c.tie_decoder) p.decoder = Tensor<float>({c.entity_count, d});
  return p;
}

ModelParameters<float> init_parameters(const ModelConfig& c, std::uint64_t seed) {
  auto p = allocate_parameters(c);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, c.init_std);
  auto fill_normal = [&](Tensor<float>& t) {
    for (auto& v : t.values) {
      double z;
      do z = normal(rng);
      while (std::abs(z) > 2.0 * c.init_std);
      v = static_cast<float>(z);
    }
  };
  auto fill_ones = [](Tensor<float>& t) { std::fill(t.values.begin(), t.values.end(), 1.0f); };
  p.visit([&](const std::string& name, Tensor<float>& t) {
    const bool bias = name.ends_with(".bias") || name.ends_with(".b1") || name.ends_with(".b2");
    if (name.ends_with(".gain"))
      fill_ones(t);
    else if (!bias)
      fill_normal(t);
  });
  return p;
}

ModelInput make_input(const SampledSubgraph& sub, const ModelConfig& config) {
  ModelInput in;
  const auto& levi = sub.levi;
  in.tokens.resize(levi.node_count());
  for (std::size_t i = 0; i < levi.node_count(); ++i) {
    const auto& node = levi.node(i);
    if (!node.is_entity()) {
      if (node.id < 0 || static_cast<std::size_t>(node.id) >= config.relation_count)
        throw IntegrityError("relation id out of model vocabulary");
      in.tokens[i] = {false, static_cast<std::uint32_t>(node.id)};
      continue;
    }
    const EntityId e = sub.original_entities[i];
    if (e < 0 || static_cast<std::size_t>(e) >= config.entity_count)
      throw IntegrityError("entity id out of model vocabulary");
    in.tokens[i] = {true, static_cast<std::uint32_t>(e)};
  }
  for (std::size_t k = 0; k < sub.mask_positions.size(); ++k) {
    const auto pos = sub.mask_positions[k];
    const auto tag = k < sub.corruption.size() ? sub.corruption[k] : CorruptionTag{};
    switch (tag.kind) {
      case Corruption::kMaskToken: in.tokens[pos].row = config.mask_token(); break;
      case Corruption::kUnchanged: break;
      case Corruption::kRandomReplace: in.tokens[pos].row = static_cast<std::uint32_t>(tag.replacement); break;
    }
  }
  in.mask = levi.attention_mask();
  return in;
}

ModelInput make_input(const QueryGraph& query, const ModelConfig& config, std::optional<EntityId> fill_target) {
  ModelInput in;
  in.tokens.resize(query.levi.node_count());
  for (std::size_t i = 0; i < query.roles.size(); ++i) {
    const auto& role = query.roles[i];
    switch (role.kind) {
      case NodeRole::Kind::kRelation:
        if (static_cast<std::size_t>(role.id) >= config.relation_count)
          throw IntegrityError("query relation id out of model vocabulary");
        in.tokens[i] = {false, static_cast<std::uint32_t>(role.id)};
        break;
      case NodeRole::Kind::kSource:
        if (static_cast<std::size_t>(role.id) >= config.entity_count)
          throw IntegrityError("query anchor id out of model vocabulary");
        in.tokens[i] = {true, static_cast<std::uint32_t>(role.id)};
        break;
      case NodeRole::Kind::kTarget:
        if (fill_target) {
          if (*fill_target < 0 || static_cast<std::size_t>(*fill_target) >= config.entity_count)
            throw IntegrityError("fill entity out of model vocabulary");
          in.tokens[i] = {true, static_cast<std::uint32_t>(*fill_target)};
          break;
        }
        [[fallthrough]];
      case NodeRole::Kind::kIntermediate:
        in.tokens[i] = {true, config.mask_token()};
        break;
    }
  }
  in.mask = query.levi.attention_mask();
  return in;
}

namespace {

template <typename T>
std::vector<std::uint8_t> top_k_mask_impl(std::span<const T> logits, std::size_t rows, std::size_t cols,
                                          std::size_t k) {
  std::vector<std::uint8_t> mask(rows * cols, 0);
  std::vector<std::size_t> order(cols);
  for (std::size_t i = 0; i < rows; ++i) {
    std::iota(order.begin(), order.end(), 0);
    const T* row = logits.data() + i * cols;
    std::stable_sort(order.begin(), order.end(), [row](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    for (std::size_t j = 0; j < std::min(k, cols); ++j) mask[i * cols + order[j]] = 1;
  }
  return mask;
}

}  // namespace

std::vector<std::uint8_t> top_k_mask(std::span<const float> logits, std::size_t rows, std::size_t cols,
                                     std::size_t k) {
  return top_k_mask_impl(logits, rows, cols, k);
}

std::vector<std::uint8_t> top_k_mask(std::span<const double> logits, std::size_t rows, std::size_t cols,
                                     std::size_t k) {
  return top_k_mask_impl(logits, rows, cols, k);
}

template <typename T>
Encoder<T>::Encoder(const ModelParameters<T>& params, Tape<T>& tape, Rng* dropout_rng)
    : params_(params), tape_(tape), rng_(dropout_rng) {}

template <typename T>
Var Encoder<T>::param(const Tensor<T>& t) {
  auto [it, inserted] = bound_.try_emplace(&t);
  if (inserted) it->second = tape_.leaf(t);
  return it->second;
}

template <typename T>
Var Encoder<T>::embed(const ModelInput& input) {
  const std::size_t n = input.node_count();
  std::vector<std::uint32_t> ent_rows, ent_tok, rel_rows, rel_tok, type_tok(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto& tok = input.tokens[i];
    (tok.entity ? ent_rows : rel_rows).push_back(i);
    (tok.entity ? ent_tok : rel_tok).push_back(tok.row);
    type_tok[i] = tok.entity ? 1 : 0;
  }
  Var x = tape_.gather_rows(param(params_.node_type), std::move(type_tok));
  if (!ent_rows.empty())
    x = tape_.add(x, tape_.scatter_rows(tape_.gather_rows(param(params_.entity_input), std::move(ent_tok)),
                                        std::move(ent_rows), n));
  if (!rel_rows.empty())
    x = tape_.add(x, tape_.scatter_rows(tape_.gather_rows(param(params_.relation_input), std::move(rel_tok)),
                                        std::move(rel_rows), n));
  return x;
}

template <typename T>
Var Encoder<T>::attention_block(Var x, std::span<const std::uint8_t> mask, std::size_t layer, bool training) {
  const auto& L = params_.layers.at(layer);
  const Var h = tape_.layer_norm(x, param(L.attn_ln_gain), param(L.attn_ln_bias));
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(params_.config.head_dim()));
  std::vector<Var> heads;
  for (std::size_t i = 0; i < L.wq.size(); ++i) {
    const Var q = tape_.matmul(h, param(L.wq[i]));
    const Var k = tape_.matmul(h, param(L.wk[i]));
    const Var v = tape_.matmul(h, param(L.wv[i]));
    const Var p = tape_.masked_softmax(tape_.scale(tape_.matmul_nt(q, k), inv_sqrt), mask);
    heads.push_back(tape_.matmul(p, v));
  }
  Var out = tape_.matmul(tape_.concat_cols(heads), param(L.wo));
  if (training && rng_) out = tape_.dropout(out, params_.config.dropout, *rng_, true);
  return tape_.add(x, out);
}

template <typename T>
Var Encoder<T>::expert(Var x, std::size_t layer, std::size_t index) {
  const auto& E = params_.layers.at(layer).experts.at(index);
  const Var hidden = tape_.gelu(tape_.add_row(tape_.matmul(x, param(E.w1)), param(E.b1)));
  if (probe_) {
    const auto v = tape_.value(hidden);
    probe_->positive[layer] += static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](T a) { return a > T(0); }));
    probe_->total[layer] += v.size();
  }
  return tape_.add_row(tape_.matmul(hidden, param(E.w2)), param(E.b2));
}

template <typename T>
Var Encoder<T>::moe(Var x, std::size_t layer, bool training) {
  const auto& L = params_.layers.at(layer);
  const std::size_t n = tape_.rows(x), experts = L.experts.size();
  const Var gate_logits = tape_.matmul(x, param(L.gate));
  const std::size_t k = training ? params_.config.top_k : experts;
  const auto selected = top_k_mask(tape_.value(gate_logits), n, experts, k);
  const Var weights = tape_.masked_softmax(gate_logits, selected);
  Var out = tape_.zeros(n, tape_.cols(x));
  for (std::size_t i = 0; i < experts; ++i) {
    std::vector<std::uint32_t> rows;
    for (std::uint32_t r = 0; r < n; ++r)
      if (selected[r * experts + i]) rows.push_back(r);
    if (rows.empty()) continue;
    const bool all_rows = rows.size() == n;
    const Var xi = all_rows ? x : tape_.gather_rows(x, rows);
    const Var yi = tape_.row_scale(expert(xi, layer, i), tape_.pick_column(weights, i, rows));
    out = tape_.add(out, all_rows ? yi : tape_.scatter_rows(yi, rows, n));
  }
  return out;
}

template <typename T>
Var Encoder<T>::moe_block(Var x, std::size_t layer, bool training) {
  const auto& L = params_.layers.at(layer);
  const Var h = tape_.layer_norm(x, param(L.ffn_ln_gain), param(L.ffn_ln_bias));
  Var out = moe(h, layer, training);
  if (training && rng_) out = tape_.dropout(out, params_.config.dropout, *rng_, true);
  return tape_.add(x, out);
}

template <typename T>
Var Encoder<T>::encode(Var x0, std::span<const std::uint8_t> mask, bool training) {
  if (probe_) {
    probe_->positive.assign(params_.layers.size(), 0);
    probe_->total.assign(params_.layers.size(), 0);
  }
  Var x = x0;
  for (std::size_t l = 0; l < params_.layers.size(); ++l) {
    x = attention_block(x, mask, l, training);
    x = moe_block(x, l, training);
  }
  return tape_.layer_norm(x, param(params_.final_ln_gain), param(params_.final_ln_bias));
}

template <typename T>
Var Encoder<T>::encode(const ModelInput& input, bool training) {
  return encode(embed(input), input.mask, training);
}

template <typename T>
Var Encoder<T>::logits(Var hidden, std::span<const std::uint32_t> positions) {
  const Var picked = tape_.gather_rows(hidden, std::vector<std::uint32_t>(positions.begin(), positions.end()));
  if (!params_.config.tie_decoder) return tape_.matmul_nt(picked, param(params_.decoder));
  std::vector<std::uint32_t> rows(params_.config.entity_count);
  std::iota(rows.begin(), rows.end(), 0);
  return tape_.matmul_nt(picked, tape_.gather_rows(param(params_.entity_input), std::move(rows)));
}

template <typename T>
void Encoder<T>::accumulate_grads(std::vector<std::vector<T>>& into) const {
  std::size_t k = 0;
  params_.visit([&](const std::string&, const Tensor<T>& t) {
    if (k >= into.size()) into.emplace_back(t.size(), T(0));
    if (auto it = bound_.find(&t); it != bound_.end()) {
      const auto g = tape_.grad(it->second);
      auto& dst = into[k];
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
    ++k;
  });
}

template class Encoder<float>;
template class Encoder<double>;

std::vector<float> predict_logits(const ModelParameters<float>& params, const ModelInput& input,
                                  std::span<const std::uint32_t> positions) {
  Tape<float> tape;
  Encoder<float> enc(params, tape);
  const Var out = enc.logits(enc.encode(input, false), positions);
  const auto v = tape.value(out);
  return {v.begin(), v.end()};
}

namespace {

std::vector<double> ratios(const ActivationProbe& probe) {
  std::vector<double> out;
  for (std::size_t l = 0; l < probe.total.size(); ++l)
    out.push_back(probe.total[l] ? static_cast<double>(probe.positive[l]) / static_cast<double>(probe.total[l]) : 0.0);
  return out;
}

}  // namespace

std::vector<double> activation_sparsity(const ModelParameters<float>& params, const ModelInput& input) {
  Tape<float> tape;
  Encoder<float> enc(params, tape);
  ActivationProbe probe;
  enc.set_probe(&probe);
  enc.encode(input, false);
  return ratios(probe);
}

std::vector<double> activation_sparsity(const ModelParameters<float>& params, const Tensor<float>& x0,
                                        std::span<const std::uint8_t> mask) {
  Tape<float> tape;
  Encoder<float> enc(params, tape);
  ActivationProbe probe;
  enc.set_probe(&probe);
  enc.encode(tape.constant(x0), mask, false);
  return ratios(probe);
}

}  // namespace kgt
