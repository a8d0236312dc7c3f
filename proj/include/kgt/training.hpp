/**
 *  Copyright (c) 2026 by Contributors
 * @file kgt/training.hpp
 * @brief Two-stage masked pre-training and multi-task / combinatorial
 *        fine-tuning loops.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kgt/evaluation.hpp"
#include "kgt/model.hpp"
#include "kgt/optim.hpp"
#include "kgt/sampler.hpp"

namespace kgt {

enum class Stage : std::uint8_t { kStage1, kStage2, kFinetune };
std::string_view to_string(Stage stage);

struct TrainConfig {
  Stage stage = Stage::kStage1;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  /// 0 means ceil(|triples| / batch_size) for pre-training and
  /// ceil(|queries| / batch_size) for fine-tuning.
  std::size_t steps_per_epoch = 0;
  double label_smoothing = 0.1;
  nn::AdamWConfig optimizer;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  /// Batches buffered between the sampler thread and the trainer.
  std::size_t queue_capacity = 4;
  Stage1Options stage1;
  MetaGraphOptions stage2;
  /// Appends one JSON line per epoch when set.
  std::optional<std::filesystem::path> metrics_path;

  /// Throws ConfigError; label smoothing must be 0 for Stage::kFinetune.
  void validate() const;
};

/// Preset for a stage: fine-tuning forces label smoothing to 0.
TrainConfig default_train_config(Stage stage);

struct EpochRecord {
  Stage stage;
  std::size_t epoch = 0;
  double loss = 0;
  double lr = 0;
  double seconds = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t skipped_queries = 0;
};

/// One masked subgraph's training loss: the sum of smoothed cross-entropies
/// over its prediction targets.
template <typename T>
nn::Var subgraph_loss(Encoder<T>& encoder, const SampledSubgraph& sub, const ModelConfig& config, double alpha,
                      bool training);

/// Fine-tuning loss of one query: mean over answers of the answer-set NLL at
/// the target position.
template <typename T>
nn::Var query_loss(Encoder<T>& encoder, const QueryGraph& query, std::span<const EntityId> answers,
                   const ModelConfig& config, bool training);

TrainHistory pretrain_stage1(ModelParameters<float>& params, const KnowledgeGraph& graph, const TrainConfig& config);
TrainHistory pretrain_stage2(ModelParameters<float>& params, const KnowledgeGraph& graph, const TrainConfig& config);

/// Trains on answers_train of every query in `datasets`, batches rotating
/// round-robin across the query types. Queries with no train answers are
/// skipped with a warning.
TrainHistory finetune(ModelParameters<float>& params, const QueryDatasets& datasets, const TrainConfig& config);

/// finetune() over every trainable type present. Throws ConfigError when a
/// dataset holds an evaluation-only type.
TrainHistory multi_task_finetune(ModelParameters<float>& params, const QueryDatasets& datasets,
                                 const TrainConfig& config);

struct SelectedCheckpoint {
  /// "multi-task" or the combination label, e.g. "1p+2p".
  std::string source;
  double validation_hits3 = 0;
  ModelParameters<float> params;
};

/// For every column (query type) the index of the best row; ties keep the
/// earlier row. scores[row][type].
std::map<QueryType, std::size_t> select_best(const std::vector<std::map<QueryType, double>>& scores);

std::string combo_label(const std::vector<QueryType>& combo);
/// Throws ConfigError for unknown or evaluation-only names.
std::vector<QueryType> parse_combo(std::string_view text);

/// Fine-tunes a copy of `base` per combination and picks, for every type in
/// `validation`, the candidate (base first, then combos in order) with the
/// highest validation Hits@3m.
std::map<QueryType, SelectedCheckpoint> combinatorial_finetune(const ModelParameters<float>& base,
                                                               const QueryDatasets& train,
                                                               const std::vector<std::vector<QueryType>>& combos,
                                                               const QueryDatasets& validation,
                                                               const TrainConfig& config);

}  // namespace kgt
