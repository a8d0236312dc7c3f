/**
 *  Copyright (c) 2026 by Contributors
 * @file kgt/pipeline.hpp
 * @brief End-to-end pipeline steps over an output directory, shared by the
 *        command-line tool and the Python bindings.
 */
#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kgt/config.hpp"
#include "kgt/evaluation.hpp"
#include "kgt/synthetic.hpp"

namespace kgt {

inline constexpr const char* kVersion = "0.1.0";

/// File layout under the output directory.
struct PipelineLayout {
  std::filesystem::path root;

  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path queries(QuerySplit split, QueryType type) const;
  std::filesystem::path stage_checkpoint(int stage) const;
  std::filesystem::path multitask_checkpoint() const { return root / "finetune" / "multitask.ckpt"; }
  std::filesystem::path type_checkpoint(QueryType type) const;
  std::filesystem::path selection() const { return root / "finetune" / "selection.json"; }
  std::filesystem::path train_metrics(std::string_view stage) const;
  std::filesystem::path eval_metrics(QuerySplit split, std::string_view ext) const;
  std::filesystem::path eval_ranks(QuerySplit split) const;
  std::filesystem::path manifest(std::string_view command) const;
};

/// Writes `manifest/<command>.json`: config hash, seed, version and the
/// canonical config entries.
void write_manifest(const PipelineLayout& layout, std::string_view command, const ConfigFile& file,
                    const PipelineConfig& config, const std::map<std::string, std::string>& args = {});

/// Writes a synthetic raw split (vocabulary + triple files) into `dir`.
SplitDataset run_synth(const SyntheticOptions& options, const std::filesystem::path& dir);

/// Validates config.data_dir and writes the id-mapped split under data/.
SplitDataset run_ingest(const PipelineConfig& config, std::ostream& log);

/// Training queries for queries.train_types, validation / test queries for
/// queries.eval_types.
void run_gen_queries(const PipelineConfig& config, std::ostream& log);

/// Stage 2 starts from the Stage-1 checkpoint when one exists. `resume`
/// continues from this stage's own checkpoint instead.
void run_pretrain(const PipelineConfig& config, int stage, bool resume, std::ostream& log);

struct FinetuneRequest {
  bool multi_task = true;
  std::vector<std::vector<QueryType>> combos;
  /// "auto" (latest pre-training checkpoint), "scratch", or a checkpoint path.
  std::string init = "auto";
};

/// Writes finetune/<type>.ckpt for every evaluation type and selection.json.
void run_finetune(const PipelineConfig& config, const FinetuneRequest& request, std::ostream& log);

/// Loads the per-type checkpoints (or `checkpoint` for all types) and writes
/// eval/<split>_metrics.{json,txt} plus eval/<split>_ranks.jsonl.
MetricsTable run_evaluate(const PipelineConfig& config, QuerySplit split,
                          const std::optional<std::filesystem::path>& checkpoint, std::ostream& log);

/// Each line of `query_file` is {"type", "anchors", "relations"}; ids may be
/// integers or vocabulary names. Returns the JSON report.
nlohmann::ordered_json run_interpret(const PipelineConfig& config, const std::filesystem::path& query_file,
                                     const std::optional<std::string>& fill,
                                     const std::optional<std::filesystem::path>& checkpoint, std::ostream& log);

/// Returns true when every check passes.
bool run_gradcheck(std::uint64_t seed, std::ostream& log);

/// Reads every `<split>/<type>.jsonl` for `types` that exists.
QueryDatasets load_query_datasets(const PipelineLayout& layout, QuerySplit split, const std::vector<QueryType>& types,
                                  const SplitDataset& data);

}  // namespace kgt
