/**
 *  Copyright (c) 2026 by Contributors
 * @file kgt/model.hpp
 * @brief Levi-graph Transformer encoder with adjacency-masked attention,
 *        Pre-LN residual blocks, Mixture-of-Experts feed-forward layers and
 *        an inner-product entity decoder.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgt/graph.hpp"
#include "kgt/query.hpp"
#include "kgt/sampler.hpp"
#include "kgt/tensor.hpp"

namespace kgt {

struct ModelConfig {
  std::size_t entity_count = 0;
  std::size_t relation_count = 0;
  std::size_t layers = 4;
  std::size_t hidden = 128;
  std::size_t heads = 4;
  std::size_t experts = 4;
  /// Per-expert intermediate width; 0 means 2 * hidden.
  std::size_t expert_hidden = 0;
  std::size_t top_k = 2;
  double dropout = 0.1;
  bool tie_decoder = false;
  double init_std = 0.02;

  std::size_t head_dim() const { return hidden / heads; }
  std::size_t expert_width() const { return expert_hidden ? expert_hidden : 2 * hidden; }
  /// Row of the entity input table that holds the mask embedding.
  std::uint32_t mask_token() const { return static_cast<std::uint32_t>(entity_count); }

  /// Throws ConfigError when hidden % heads != 0, experts < top_k, etc.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Weight-matrix entries of the expert block (biases excluded).
std::size_t expert_weight_count(const ModelConfig& config);
/// Weight-matrix entries of one dense FFN of width `width`.
std::size_t dense_ffn_weight_count(std::size_t hidden, std::size_t width);

template <typename T>
struct ExpertParams {
  nn::Tensor<T> w1, b1, w2, b2;
};

template <typename T>
struct LayerParams {
  nn::Tensor<T> attn_ln_gain, attn_ln_bias;
  std::vector<nn::Tensor<T>> wq, wk, wv;  // one [d x d_h] per head
  nn::Tensor<T> wo;
  nn::Tensor<T> ffn_ln_gain, ffn_ln_bias;
  nn::Tensor<T> gate;  // [d x N]
  std::vector<ExpertParams<T>> experts;
};

template <typename T>
struct ModelParameters {
  ModelConfig config;
  nn::Tensor<T> entity_input;    // [|E| + 1 x d], last row is the mask embedding
  nn::Tensor<T> relation_input;  // [|R| x d]
  nn::Tensor<T> node_type;       // [2 x d]: row 0 relation-node, row 1 entity-node
  std::vector<LayerParams<T>> layers;
  nn::Tensor<T> final_ln_gain, final_ln_bias;
  nn::Tensor<T> decoder;  // [|E| x d]; empty when tied to entity_input

  /// Visits every tensor with a stable dotted name, in checkpoint order.
  template <typename Fn>
  void visit(Fn&& fn) {
    visit_impl(*this, fn);
  }
  template <typename Fn>
  void visit(Fn&& fn) const {
    visit_impl(*this, fn);
  }

  std::vector<nn::Tensor<T>*> tensors() {
    std::vector<nn::Tensor<T>*> out;
    visit([&](const std::string&, nn::Tensor<T>& t) { out.push_back(&t); });
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const nn::Tensor<T>& t) { n += t.size(); });
    return n;
  }

  template <typename U>
  ModelParameters<U> cast() const;

 private:
  template <typename Self, typename Fn>
  static void visit_impl(Self& self, Fn& fn) {
    fn("entity_input", self.entity_input);
    fn("relation_input", self.relation_input);
    fn("node_type", self.node_type);
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      auto& L = self.layers[l];
      const std::string p = "layers." + std::to_string(l) + ".";
      fn(p + "attn_ln.gain", L.attn_ln_gain);
      fn(p + "attn_ln.bias", L.attn_ln_bias);
      for (std::size_t h = 0; h < L.wq.size(); ++h) {
        const std::string hp = p + "attn.head." + std::to_string(h) + ".";
        fn(hp + "wq", L.wq[h]);
        fn(hp + "wk", L.wk[h]);
        fn(hp + "wv", L.wv[h]);
      }
      fn(p + "attn.wo", L.wo);
      fn(p + "ffn_ln.gain", L.ffn_ln_gain);
      fn(p + "ffn_ln.bias", L.ffn_ln_bias);
      fn(p + "moe.gate", L.gate);
      for (std::size_t e = 0; e < L.experts.size(); ++e) {
        const std::string ep = p + "moe.expert." + std::to_string(e) + ".";
        fn(ep + "w1", L.experts[e].w1);
        fn(ep + "b1", L.experts[e].b1);
        fn(ep + "w2", L.experts[e].w2);
        fn(ep + "b2", L.experts[e].b2);
      }
    }
    fn("final_ln.gain", self.final_ln_gain);
    fn("final_ln.bias", self.final_ln_bias);
    if (!self.config.tie_decoder) fn("decoder", self.decoder);
  }
};

template <typename T>
template <typename U>
ModelParameters<U> ModelParameters<T>::cast() const {
  ModelParameters<U> out;
  out.config = config;
  out.entity_input = entity_input.template cast<U>();
  out.relation_input = relation_input.template cast<U>();
  out.node_type = node_type.template cast<U>();
  for (const auto& L : layers) {
    LayerParams<U> M;
    M.attn_ln_gain = L.attn_ln_gain.template cast<U>();
    M.attn_ln_bias = L.attn_ln_bias.template cast<U>();
    for (std::size_t h = 0; h < L.wq.size(); ++h) {
      M.wq.push_back(L.wq[h].template cast<U>());
      M.wk.push_back(L.wk[h].template cast<U>());
      M.wv.push_back(L.wv[h].template cast<U>());
    }
    M.wo = L.wo.template cast<U>();
    M.ffn_ln_gain = L.ffn_ln_gain.template cast<U>();
    M.ffn_ln_bias = L.ffn_ln_bias.template cast<U>();
    M.gate = L.gate.template cast<U>();
    for (const auto& e : L.experts)
      M.experts.push_back({e.w1.template cast<U>(), e.b1.template cast<U>(), e.w2.template cast<U>(),
                           e.b2.template cast<U>()});
    out.layers.push_back(std::move(M));
  }
  out.final_ln_gain = final_ln_gain.template cast<U>();
  out.final_ln_bias = final_ln_bias.template cast<U>();
  out.decoder = decoder.template cast<U>();
  return out;
}

/// Parameters with the configured shapes, all zero (checkpoint loading fills them).
ModelParameters<float> allocate_parameters(const ModelConfig& config);
/// Truncated normal (+-2 std) weights, zero biases, unit layer-norm gains.
ModelParameters<float> init_parameters(const ModelConfig& config, std::uint64_t seed);

/// What the encoder sees for one node: a row of the entity or relation table.
struct NodeToken {
  bool entity = true;
  std::uint32_t row = 0;
};

struct ModelInput {
  std::vector<NodeToken> tokens;
  std::vector<std::uint8_t> mask;  // node_count x node_count attention mask

  std::size_t node_count() const { return tokens.size(); }
};

/// Masked positions take the mask row, the unchanged entity, or the random
/// replacement according to their corruption tag.
ModelInput make_input(const SampledSubgraph& sub, const ModelConfig& config);
/// Sources keep their anchor embedding; intermediates and the target are
/// masked unless `fill_target` substitutes an entity at the target.
ModelInput make_input(const QueryGraph& query, const ModelConfig& config,
                      std::optional<EntityId> fill_target = std::nullopt);

/// Per-layer (positive, total) counts of expert intermediate activations.
struct ActivationProbe {
  std::vector<std::size_t> positive;
  std::vector<std::size_t> total;
};

/// Binds parameters into one tape and runs the forward pass on it.
template <typename T>
class Encoder {
 public:
  Encoder(const ModelParameters<T>& params, nn::Tape<T>& tape, Rng* dropout_rng = nullptr);

  /// Leaf for a parameter tensor, created on first use.
  nn::Var param(const nn::Tensor<T>& t);

  nn::Var embed(const ModelInput& input);
  /// out = x + Dropout(MHA(LN(x))), attention restricted by `mask`.
  nn::Var attention_block(nn::Var x, std::span<const std::uint8_t> mask, std::size_t layer, bool training);
  /// Raw MoE output: top-k renormalized gating when training, softmax over
  /// all experts otherwise.
  nn::Var moe(nn::Var x, std::size_t layer, bool training);
  /// out = x + Dropout(MoE(LN(x))).
  nn::Var moe_block(nn::Var x, std::size_t layer, bool training);
  nn::Var expert(nn::Var x, std::size_t layer, std::size_t index);
  /// All blocks then the final layer norm; [nodes x d].
  nn::Var encode(nn::Var x0, std::span<const std::uint8_t> mask, bool training);
  nn::Var encode(const ModelInput& input, bool training);
  /// Decoder inner products at `positions`; [positions x |E|].
  nn::Var logits(nn::Var hidden, std::span<const std::uint32_t> positions);

  /// Adds this tape's parameter gradients into `into` (ModelParameters::visit order).
  void accumulate_grads(std::vector<std::vector<T>>& into) const;

  void set_probe(ActivationProbe* probe) { probe_ = probe; }
  nn::Tape<T>& tape() { return tape_; }

 private:
  const ModelParameters<T>& params_;
  nn::Tape<T>& tape_;
  Rng* rng_;
  ActivationProbe* probe_ = nullptr;
  std::unordered_map<const nn::Tensor<T>*, nn::Var> bound_;
};

/// Eval-mode logits [positions x |E|] as plain values.
std::vector<float> predict_logits(const ModelParameters<float>& params, const ModelInput& input,
                                  std::span<const std::uint32_t> positions);

/// Fraction of expert intermediate activations > 0 per layer (eval mode,
/// every expert probed on every node).
std::vector<double> activation_sparsity(const ModelParameters<float>& params, const ModelInput& input);
std::vector<double> activation_sparsity(const ModelParameters<float>& params, const nn::Tensor<float>& x0,
                                        std::span<const std::uint8_t> mask);

/// Per-row top-k selection mask over gate logits (ties: lower index first).
std::vector<std::uint8_t> top_k_mask(std::span<const float> logits, std::size_t rows, std::size_t cols,
                                     std::size_t k);
std::vector<std::uint8_t> top_k_mask(std::span<const double> logits, std::size_t rows, std::size_t cols,
                                     std::size_t k);

}  // namespace kgt
