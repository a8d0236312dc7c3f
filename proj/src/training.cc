/**
 *  Copyright (c) 2026 by Contributors
 * @file training.cc
 * @brief Training loops. A producer thread samples batches into a bounded
 *        queue; the trainer reduces per-sample gradients in fixed-size
 *        chunks so the update is bitwise independent of the thread count.
 */
#include "kgt/training.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "kgt/error.hpp"
#include "kgt/parallel.hpp"

namespace kgt {

using nn::Tape;
using nn::Var;

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::kStage1: return "stage1";
    case Stage::kStage2: return "stage2";
    case Stage::kFinetune: return "finetune";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (threads == 0) throw ConfigError("train.threads must be positive");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0))
    throw ConfigError("train.label_smoothing must lie in [0, 1)");
  if (stage == Stage::kFinetune && label_smoothing != 0.0)
    throw ConfigError("train.label_smoothing must be 0 for fine-tuning");
  if (!(optimizer.lr > 0.0)) throw ConfigError("optim.lr must be positive");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) || !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0))
    throw ConfigError("optim.beta1 and optim.beta2 must lie in [0, 1)");
  if (!(optimizer.weight_decay >= 0.0)) throw ConfigError("optim.weight_decay must be non-negative");
  if (!(optimizer.lr_decay > 0.0 && optimizer.lr_decay <= 1.0)) throw ConfigError("optim.lr_decay must lie in (0, 1]");
  if (!(clip_norm >= 0.0)) throw ConfigError("train.clip_norm must be non-negative");
  if (!(stage1.mask_rate > 0.0 && stage1.mask_rate <= 1.0)) throw ConfigError("sampler.mask_rate must lie in (0, 1]");
  if (stage1.min_nodes == 0 || stage1.min_nodes > stage1.max_nodes)
    throw ConfigError("sampler.min_nodes must lie in [1, sampler.max_nodes]");
  if (!(stage2.chain_ratio > 0.0)) throw ConfigError("sampler.chain_ratio must be positive");
}

TrainConfig default_train_config(Stage stage) {
  TrainConfig c;
  c.stage = stage;
  if (stage == Stage::kFinetune) {
    c.batch_size = 128;
    c.label_smoothing = 0.0;
  }
  return c;
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243F6A8885A308D3ULL;
  for (auto p : parts) h = splitmix(h ^ p);
  return h;
}

// Items in one gradient chunk are reduced in order; chunks are then summed
// in order. Keeping this fixed keeps updates independent of thread count.
constexpr std::size_t kChunk = 4;

template <typename Item>
using LossFn = std::function<std::optional<Var>(Encoder<float>&, const Item&)>;

template <typename Item>
TrainHistory run_loop(ModelParameters<float>& params, const TrainConfig& config, std::size_t steps_per_epoch,
                      std::function<std::vector<Item>(std::size_t epoch, std::size_t step)> produce,
                      LossFn<Item> loss_fn) {
  config.validate();
  TrainHistory history;
  auto tensors = params.tensors();
  nn::AdamW<float> optimizer(config.optimizer);
  optimizer.init(tensors);
  if (config.epochs == 0 || steps_per_epoch == 0) return history;

  struct Batch {
    std::size_t epoch, step;
    std::vector<Item> items;
  };
  BoundedQueue<Batch> queue(config.queue_capacity);
  std::exception_ptr producer_error;
  std::thread producer([&] {
    try {
      for (std::size_t e = 0; e < config.epochs; ++e)
        for (std::size_t s = 0; s < steps_per_epoch; ++s)
          if (!queue.push({e, s, produce(e, s)})) return;
    } catch (...) {
      producer_error = std::current_exception();
    }
    queue.close();
  });
  struct JoinGuard {
    BoundedQueue<Batch>& q;
    std::thread& t;
    ~JoinGuard() {
      q.close();
      if (t.joinable()) t.join();
    }
  } guard{queue, producer};

  std::optional<std::ofstream> metrics;
  if (config.metrics_path) {
    metrics.emplace(*config.metrics_path, std::ios::app);
    if (!*metrics) throw Error("cannot write " + config.metrics_path->string());
  }

  std::vector<std::vector<std::vector<float>>> chunk_grads;
  std::vector<std::vector<float>> total;
  for (auto* t : tensors) total.emplace_back(t->size(), 0.0f);

  double epoch_loss = 0;
  std::size_t epoch_steps = 0;
  auto epoch_start = std::chrono::steady_clock::now();
  const std::uint64_t stage_tag = static_cast<std::uint64_t>(config.stage);

  while (auto batch = queue.pop()) {
    const auto& items = batch->items;
    const std::size_t chunks = (items.size() + kChunk - 1) / kChunk;
    if (chunk_grads.size() < chunks) chunk_grads.resize(chunks);
    std::vector<double> losses(items.size(), 0.0);
    std::vector<std::uint8_t> used(items.size(), 0);
    try {
      parallel_for(chunks, config.threads, [&](std::size_t c) {
        auto& acc = chunk_grads[c];
        for (auto& g : acc) std::fill(g.begin(), g.end(), 0.0f);
        for (std::size_t i = c * kChunk; i < std::min(items.size(), (c + 1) * kChunk); ++i) {
          Rng dropout_rng(mix({config.seed, stage_tag, batch->epoch, batch->step, i}));
          Tape<float> tape;
          Encoder<float> enc(params, tape, &dropout_rng);
          const auto loss = loss_fn(enc, items[i]);
          if (!loss) continue;
          losses[i] = tape.scalar(*loss);
          used[i] = 1;
          tape.backward(*loss);
          enc.accumulate_grads(acc);
        }
      });
    } catch (const NumericError& e) {
      throw NumericError(std::string("training diverged at ") + std::string(to_string(config.stage)) + " epoch " +
                         std::to_string(batch->epoch) + " step " + std::to_string(batch->step) + ": " + e.what());
    }
    const std::size_t count = static_cast<std::size_t>(std::count(used.begin(), used.end(), 1));
    double step_loss = 0;
    for (std::size_t i = 0; i < items.size(); ++i) step_loss += losses[i];
    if (count > 0) {
      step_loss /= static_cast<double>(count);
      if (!std::isfinite(step_loss))
        throw NumericError("training diverged: non-finite loss at " + std::string(to_string(config.stage)) +
                           " epoch " + std::to_string(batch->epoch) + " step " + std::to_string(batch->step));
      for (auto& g : total) std::fill(g.begin(), g.end(), 0.0f);
      for (std::size_t c = 0; c < chunks; ++c)
        for (std::size_t k = 0; k < chunk_grads[c].size(); ++k) {
          auto& dst = total[k];
          const auto& src = chunk_grads[c][k];
          for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
      const float inv = 1.0f / static_cast<float>(count);
      for (auto& g : total)
        for (auto& v : g) v *= inv;
      nn::clip_global_norm(total, config.clip_norm);
      optimizer.step(tensors, total, batch->epoch);
      epoch_loss += step_loss;
      ++epoch_steps;
    }
    if (batch->step + 1 == steps_per_epoch) {
      const auto now = std::chrono::steady_clock::now();
      EpochRecord rec{config.stage, batch->epoch, epoch_steps ? epoch_loss / static_cast<double>(epoch_steps) : 0.0,
                      optimizer.learning_rate(batch->epoch),
                      std::chrono::duration<double>(now - epoch_start).count()};
      history.epochs.push_back(rec);
      if (metrics) {
        nlohmann::ordered_json j;
        j["stage"] = std::string(to_string(rec.stage));
        j["epoch"] = rec.epoch;
        j["loss"] = rec.loss;
        j["lr"] = rec.lr;
        j["seconds"] = rec.seconds;
        *metrics << j.dump() << '\n';
        metrics->flush();
      }
      epoch_loss = 0;
      epoch_steps = 0;
      epoch_start = now;
    }
  }
  if (producer_error) std::rethrow_exception(producer_error);
  return history;
}

std::size_t default_steps(const TrainConfig& config, std::size_t population) {
  if (config.steps_per_epoch) return config.steps_per_epoch;
  return std::max<std::size_t>(1, (population + config.batch_size - 1) / config.batch_size);
}

TrainHistory pretrain(ModelParameters<float>& params, const KnowledgeGraph& graph, const TrainConfig& config,
                      Stage expected) {
  if (config.stage != expected)
    throw ConfigError("train.stage must be " + std::string(to_string(expected)) + " for this loop");
  if (graph.entity_count() != params.config.entity_count || graph.relation_count() != params.config.relation_count)
    throw IntegrityError("graph vocabulary does not match the model");
  auto sampler_rng = std::make_shared<Rng>(mix({config.seed, static_cast<std::uint64_t>(expected), 0x5A3D1E}));
  std::function<std::vector<SampledSubgraph>(std::size_t, std::size_t)> produce;
  if (expected == Stage::kStage1)
    produce = [&, sampler_rng](std::size_t, std::size_t) {
      return sample_stage1_batch(graph, config.stage1, config.batch_size, *sampler_rng);
    };
  else
    produce = [&, sampler_rng](std::size_t, std::size_t) {
      return sample_stage2_batch(graph, config.stage2, config.batch_size, *sampler_rng);
    };
  const double alpha = config.label_smoothing;
  const ModelConfig& mc = params.config;
  LossFn<SampledSubgraph> loss = [alpha, &mc](Encoder<float>& enc, const SampledSubgraph& sub) {
    return std::optional<Var>(subgraph_loss(enc, sub, mc, alpha, true));
  };
  return run_loop<SampledSubgraph>(params, config, default_steps(config, graph.triple_count()), produce, loss);
}

struct QueryItem {
  const QueryGraph* query;
  std::span<const EntityId> answers;
};

}  // namespace

template <typename T>
Var subgraph_loss(Encoder<T>& encoder, const SampledSubgraph& sub, const ModelConfig& config, double alpha,
                  bool training) {
  if (sub.prediction_targets.empty()) throw SamplingError("subgraph without prediction targets");
  std::vector<std::uint32_t> targets;
  for (auto p : sub.prediction_targets) targets.push_back(static_cast<std::uint32_t>(sub.original_entities.at(p)));
  const Var hidden = encoder.encode(make_input(sub, config), training);
  const Var logits = encoder.logits(hidden, sub.prediction_targets);
  return encoder.tape().cross_entropy_smoothed(logits, std::move(targets), static_cast<T>(alpha));
}

template <typename T>
Var query_loss(Encoder<T>& encoder, const QueryGraph& query, std::span<const EntityId> answers,
               const ModelConfig& config, bool training) {
  const std::uint32_t pos = query.target_node;
  const Var hidden = encoder.encode(make_input(query, config), training);
  const Var logits = encoder.logits(hidden, {&pos, 1});
  std::vector<std::uint32_t> a(answers.begin(), answers.end());
  return encoder.tape().answer_set_nll(logits, std::move(a));
}

template Var subgraph_loss<float>(Encoder<float>&, const SampledSubgraph&, const ModelConfig&, double, bool);
template Var subgraph_loss<double>(Encoder<double>&, const SampledSubgraph&, const ModelConfig&, double, bool);
template Var query_loss<float>(Encoder<float>&, const QueryGraph&, std::span<const EntityId>, const ModelConfig&, bool);
template Var query_loss<double>(Encoder<double>&, const QueryGraph&, std::span<const EntityId>, const ModelConfig&,
                                bool);

TrainHistory pretrain_stage1(ModelParameters<float>& params, const KnowledgeGraph& graph, const TrainConfig& config) {
  return pretrain(params, graph, config, Stage::kStage1);
}

TrainHistory pretrain_stage2(ModelParameters<float>& params, const KnowledgeGraph& graph, const TrainConfig& config) {
  return pretrain(params, graph, config, Stage::kStage2);
}

TrainHistory finetune(ModelParameters<float>& params, const QueryDatasets& datasets, const TrainConfig& config) {
  if (config.stage != Stage::kFinetune) throw ConfigError("train.stage must be finetune for fine-tuning");
  if (datasets.empty()) throw ConfigError("fine-tuning needs at least one query dataset");
  std::vector<std::vector<QueryItem>> pools;
  std::size_t skipped = 0, total = 0;
  for (const auto& [type, queries] : datasets) {
    if (!is_trainable(type))
      throw ConfigError(std::string(to_string(type)) + " is evaluation-only and cannot be fine-tuned on");
    std::vector<QueryItem> pool;
    for (const auto& q : queries) {
      for (auto a : q.query.anchors)
        if (a < 0 || static_cast<std::size_t>(a) >= params.config.entity_count)
          throw IntegrityError("query anchor outside the model vocabulary");
      if (q.answers_train.empty()) {
        ++skipped;
        continue;
      }
      pool.push_back({&q.query, q.answers_train});
    }
    total += pool.size();
    if (!pool.empty()) pools.push_back(std::move(pool));
  }
  if (skipped) std::cerr << "warning: skipped " << skipped << " queries with empty training answer sets\n";
  if (pools.empty()) throw ConfigError("fine-tuning datasets contain no query with training answers");

  struct Cursor {
    std::vector<std::size_t> order;
    std::size_t next = 0;
  };
  auto rng = std::make_shared<Rng>(mix({config.seed, static_cast<std::uint64_t>(Stage::kFinetune), 0xF17E}));
  auto cursors = std::make_shared<std::vector<Cursor>>(pools.size());
  const std::size_t steps = default_steps(config, total);
  auto produce = [&, rng, cursors, steps](std::size_t epoch, std::size_t step) {
    const std::size_t p = (epoch * steps + step) % pools.size();
    auto& cur = (*cursors)[p];
    std::vector<QueryItem> batch;
    while (batch.size() < config.batch_size) {
      if (cur.next == cur.order.size()) {
        cur.order.resize(pools[p].size());
        std::iota(cur.order.begin(), cur.order.end(), 0);
        std::shuffle(cur.order.begin(), cur.order.end(), *rng);
        cur.next = 0;
      }
      batch.push_back(pools[p][cur.order[cur.next++]]);
      if (batch.size() == pools[p].size()) break;
    }
    return batch;
  };
  const ModelConfig& mc = params.config;
  LossFn<QueryItem> loss = [&mc](Encoder<float>& enc, const QueryItem& item) {
    return std::optional<Var>(query_loss(enc, *item.query, item.answers, mc, true));
  };
  auto history = run_loop<QueryItem>(params, config, steps, produce, loss);
  history.skipped_queries = skipped;
  return history;
}

TrainHistory multi_task_finetune(ModelParameters<float>& params, const QueryDatasets& datasets,
                                 const TrainConfig& config) {
  QueryDatasets trainable;
  for (const auto& [type, queries] : datasets) {
    if (!is_trainable(type))
      throw ConfigError(std::string(to_string(type)) + " is evaluation-only and cannot be fine-tuned on");
    trainable[type] = queries;
  }
  return finetune(params, trainable, config);
}

std::map<QueryType, std::size_t> select_best(const std::vector<std::map<QueryType, double>>& scores) {
  std::map<QueryType, std::size_t> best;
  std::map<QueryType, double> best_score;
  for (std::size_t row = 0; row < scores.size(); ++row)
    for (const auto& [type, s] : scores[row])
      if (!best.contains(type) || s > best_score[type]) {
        best[type] = row;
        best_score[type] = s;
      }
  return best;
}

std::string combo_label(const std::vector<QueryType>& combo) {
  std::string out;
  for (auto t : combo) {
    if (!out.empty()) out += '+';
    out += to_string(t);
  }
  return out;
}

std::vector<QueryType> parse_combo(std::string_view text) {
  std::vector<QueryType> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find_first_of("+,", start), text.size());
    auto name = text.substr(start, end - start);
    while (!name.empty() && std::isspace(static_cast<unsigned char>(name.front()))) name.remove_prefix(1);
    while (!name.empty() && std::isspace(static_cast<unsigned char>(name.back()))) name.remove_suffix(1);
    if (name.empty()) throw ConfigError("empty query type in combination '" + std::string(text) + "'");
    const auto type = parse_query_type(name);
    if (!is_trainable(type))
      throw ConfigError("combination '" + std::string(text) + "' references evaluation-only type " +
                        std::string(name));
    if (std::find(out.begin(), out.end(), type) == out.end()) out.push_back(type);
    start = end + 1;
  }
  return out;
}

std::map<QueryType, SelectedCheckpoint> combinatorial_finetune(const ModelParameters<float>& base,
                                                               const QueryDatasets& train,
                                                               const std::vector<std::vector<QueryType>>& combos,
                                                               const QueryDatasets& validation,
                                                               const TrainConfig& config) {
  for (const auto& combo : combos)
    for (auto t : combo) {
      if (!is_trainable(t))
        throw ConfigError("combination '" + combo_label(combo) + "' references evaluation-only type " +
                          std::string(to_string(t)));
      if (!train.contains(t))
        throw ConfigError("combination '" + combo_label(combo) + "' needs training queries of type " +
                          std::string(to_string(t)));
    }
  std::vector<ModelParameters<float>> candidates{base};
  std::vector<std::string> labels{"multi-task"};
  for (const auto& combo : combos) {
    QueryDatasets subset;
    for (auto t : combo) subset[t] = train.at(t);
    auto copy = base;
    finetune(copy, subset, config);
    candidates.push_back(std::move(copy));
    labels.push_back(combo_label(combo));
  }
  std::vector<std::map<QueryType, double>> scores;
  for (const auto& c : candidates) {
    std::map<QueryType, double> row;
    for (const auto& [type, m] : evaluate(c, validation, QuerySplit::kValid, config.threads).table) row[type] = m.hits3;
    scores.push_back(std::move(row));
  }
  std::map<QueryType, SelectedCheckpoint> out;
  for (const auto& [type, row] : select_best(scores))
    out.emplace(type, SelectedCheckpoint{labels[row], scores[row].at(type), candidates[row]});
  return out;
}

}  // namespace kgt
