/**
 *  Copyright (c) 2026 by Contributors
 * @file pipeline.cc
 * @brief Pipeline steps.
 */
#include "kgt/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

#include "kgt/checkpoint.hpp"
#include "kgt/error.hpp"
#include "kgt/gradsuite.hpp"

namespace kgt {

namespace fs = std::filesystem;

fs::path PipelineLayout::queries(QuerySplit split, QueryType type) const {
  return root / "queries" / std::string(to_string(split)) / (std::string(to_string(type)) + ".jsonl");
}

fs::path PipelineLayout::stage_checkpoint(int stage) const {
  return root / ("stage" + std::to_string(stage) + ".ckpt");
}

fs::path PipelineLayout::type_checkpoint(QueryType type) const {
  return root / "finetune" / (std::string(to_string(type)) + ".ckpt");
}

fs::path PipelineLayout::train_metrics(std::string_view stage) const {
  return root / "metrics" / (std::string(stage) + ".jsonl");
}

fs::path PipelineLayout::eval_metrics(QuerySplit split, std::string_view ext) const {
  return root / "eval" / (std::string(to_string(split)) + "_metrics." + std::string(ext));
}

fs::path PipelineLayout::eval_ranks(QuerySplit split) const {
  return root / "eval" / (std::string(to_string(split)) + "_ranks.jsonl");
}

fs::path PipelineLayout::manifest(std::string_view command) const {
  return root / "manifest" / (std::string(command) + ".json");
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

SplitDataset load_ingested(const PipelineLayout& layout) {
  if (!fs::exists(layout.data() / "entities.txt"))
    throw MissingArtifactError("no ingested dataset under " + layout.data().string() + " (run ingest first)");
  return load_split(layout.data(), SplitLayout::kCumulative);
}

ModelConfig model_for(const PipelineConfig& config, const SplitDataset& data) {
  auto m = config.model;
  m.entity_count = data.entity_count();
  m.relation_count = data.relation_count();
  m.validate();
  return m;
}

void check_vocabulary(const ModelParameters<float>& params, const SplitDataset& data, const fs::path& where) {
  if (params.config.entity_count != data.entity_count() || params.config.relation_count != data.relation_count())
    throw IntegrityError(where.string() + ": checkpoint vocabulary (" + std::to_string(params.config.entity_count) +
                         " entities, " + std::to_string(params.config.relation_count) +
                         " relations) does not match the dataset");
}

std::uint64_t split_seed(std::uint64_t seed, QuerySplit split, QueryType type) {
  return seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(split) * 131 + static_cast<std::uint64_t>(type) + 1;
}

ModelParameters<float> load_checked(const fs::path& path, const SplitDataset& data) {
  auto params = load_checkpoint(path);
  check_vocabulary(params, data, path);
  return params;
}

void reset_metrics(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream(path, std::ios::trunc);
}

EntityId resolve_entity(const nlohmann::json& j, const SplitDataset& data) {
  if (j.is_number_integer()) {
    const auto v = j.get<long long>();
    if (v < 0 || static_cast<std::size_t>(v) >= data.entity_count())
      throw IntegrityError("entity id " + std::to_string(v) + " out of range");
    return static_cast<EntityId>(v);
  }
  const auto name = j.get<std::string>();
  for (std::size_t i = 0; i < data.entity_names.size(); ++i)
    if (data.entity_names[i] == name) return static_cast<EntityId>(i);
  throw IntegrityError("unknown entity '" + name + "'");
}

RelationId resolve_relation(const nlohmann::json& j, const SplitDataset& data) {
  if (j.is_number_integer()) {
    const auto v = j.get<long long>();
    if (v < 0 || static_cast<std::size_t>(v) >= data.relation_count())
      throw IntegrityError("relation id " + std::to_string(v) + " out of range");
    return static_cast<RelationId>(v);
  }
  const auto name = j.get<std::string>();
  for (std::size_t i = 0; i < data.relation_names.size(); ++i)
    if (data.relation_names[i] == name) return static_cast<RelationId>(i);
  throw IntegrityError("unknown relation '" + name + "'");
}

}  // namespace

void write_manifest(const PipelineLayout& layout, std::string_view command, const ConfigFile& file,
                    const PipelineConfig& config, const std::map<std::string, std::string>& args) {
  nlohmann::ordered_json j;
  j["command"] = std::string(command);
  j["version"] = kVersion;
  j["seed"] = config.seed;
  j["config_hash"] = "fnv1a64:" + hex(fnv1a(file.canonical()));
  j["config"] = file.entries();
  j["args"] = args;
  write_text(layout.manifest(command), j.dump(2) + "\n");
}

SplitDataset run_synth(const SyntheticOptions& options, const fs::path& dir) {
  auto split = make_synthetic_split(options);
  write_split(dir, split);
  return split;
}

SplitDataset run_ingest(const PipelineConfig& config, std::ostream& log) {
  if (config.data_dir.empty()) throw ConfigError("config key 'data.dir' is required for ingest");
  if (!fs::is_directory(config.data_dir))
    throw ConfigError("config key 'data.dir': directory does not exist: " + config.data_dir.string());
  auto split = load_split(config.data_dir, config.layout);
  PipelineLayout layout{config.output_dir};
  write_split(layout.data(), split);
  log << "ingested " << split.entity_count() << " entities, " << split.relation_count() << " relations; triples train "
      << split.train.triple_count() << ", valid " << split.valid.triple_count() << ", test "
      << split.test.triple_count() << "\n";
  return split;
}

void run_gen_queries(const PipelineConfig& config, std::ostream& log) {
  PipelineLayout layout{config.output_dir};
  const auto data = load_ingested(layout);
  const auto& q = config.queries;
  auto generate = [&](QuerySplit split, const std::vector<QueryType>& types) {
    for (auto type : types) {
      const auto count = q.count(split, type);
      if (count == 0) continue;
      GenerationOptions opts;
      opts.purpose = split;
      opts.max_answers = q.max_answers;
      opts.attempts_per_query = q.attempts_per_query;
      opts.allow_fewer = q.allow_fewer;
      const auto queries = generate_queries(data, type, count, split_seed(config.seed, split, type), opts);
      const auto path = layout.queries(split, type);
      fs::create_directories(path.parent_path());
      write_queries_jsonl(path, queries);
      log << to_string(split) << " " << to_string(type) << ": " << queries.size() << " queries";
      if (queries.size() < count) log << " (graph exhausted, " << count << " requested)";
      log << "\n";
    }
  };
  generate(QuerySplit::kTrain, q.train_types);
  generate(QuerySplit::kValid, q.eval_types);
  generate(QuerySplit::kTest, q.eval_types);
}

void run_pretrain(const PipelineConfig& config, int stage, bool resume, std::ostream& log) {
  if (stage != 1 && stage != 2) throw ConfigError("--stage must be 1 or 2");
  PipelineLayout layout{config.output_dir};
  const auto data = load_ingested(layout);
  const auto mc = model_for(config, data);
  const auto own = layout.stage_checkpoint(stage);
  ModelParameters<float> params;
  if (resume) {
    params = load_checked(own, data);
    log << "resuming from " << own.string() << "\n";
  } else if (stage == 2 && fs::exists(layout.stage_checkpoint(1))) {
    params = load_checked(layout.stage_checkpoint(1), data);
    log << "initialized from " << layout.stage_checkpoint(1).string() << "\n";
  } else {
    params = init_parameters(mc, config.seed);
  }
  auto tc = stage == 1 ? config.stage1 : config.stage2;
  const auto metrics = layout.train_metrics(to_string(tc.stage));
  if (!resume) reset_metrics(metrics);
  fs::create_directories(metrics.parent_path());
  tc.metrics_path = metrics;
  const auto history = stage == 1 ? pretrain_stage1(params, data.train, tc) : pretrain_stage2(params, data.train, tc);
  save_checkpoint(params, own);
  if (!history.epochs.empty())
    log << "stage " << stage << ": " << history.epochs.size() << " epochs, final loss " << history.epochs.back().loss
        << "\n";
  log << "wrote " << own.string() << "\n";
}

QueryDatasets load_query_datasets(const PipelineLayout& layout, QuerySplit split, const std::vector<QueryType>& types,
                                  const SplitDataset& data) {
  QueryDatasets out;
  for (auto type : types) {
    const auto path = layout.queries(split, type);
    if (fs::exists(path)) out[type] = read_queries_jsonl(path, data.entity_count(), data.relation_count());
  }
  return out;
}

void run_finetune(const PipelineConfig& config, const FinetuneRequest& request, std::ostream& log) {
  PipelineLayout layout{config.output_dir};
  const auto data = load_ingested(layout);
  const auto train = load_query_datasets(layout, QuerySplit::kTrain, config.queries.train_types, data);
  if (train.empty())
    throw MissingArtifactError("no training queries under " + (layout.root / "queries" / "train").string() +
                               " (run gen-queries first)");
  auto initial = [&]() -> ModelParameters<float> {
    if (request.init == "scratch") return init_parameters(model_for(config, data), config.seed);
    if (request.init != "auto") return load_checked(request.init, data);
    for (int s : {2, 1})
      if (fs::exists(layout.stage_checkpoint(s))) {
        log << "initialized from " << layout.stage_checkpoint(s).string() << "\n";
        return load_checked(layout.stage_checkpoint(s), data);
      }
    throw MissingArtifactError("no pre-training checkpoint under " + layout.root.string() +
                               " (run pretrain, or pass --init scratch)");
  };

  ModelParameters<float> base;
  if (request.multi_task) {
    base = initial();
    auto tc = config.finetune;
    const auto metrics = layout.train_metrics("finetune");
    reset_metrics(metrics);
    tc.metrics_path = metrics;
    const auto history = multi_task_finetune(base, train, tc);
    save_checkpoint(base, layout.multitask_checkpoint());
    if (!history.epochs.empty())
      log << "multi-task: " << history.epochs.size() << " epochs, final loss " << history.epochs.back().loss << "\n";
  } else if (fs::exists(layout.multitask_checkpoint())) {
    base = load_checked(layout.multitask_checkpoint(), data);
  } else {
    base = initial();
  }

  nlohmann::ordered_json selection = nlohmann::ordered_json::object();
  if (request.combos.empty()) {
    for (auto type : config.queries.eval_types) {
      save_checkpoint(base, layout.type_checkpoint(type));
      selection[std::string(to_string(type))] = {{"source", "multi-task"}};
    }
  } else {
    const auto valid = load_query_datasets(layout, QuerySplit::kValid, config.queries.eval_types, data);
    if (valid.empty()) throw MissingArtifactError("combinatorial fine-tuning needs validation queries");
    auto chosen = combinatorial_finetune(base, train, request.combos, valid, config.finetune);
    for (auto type : config.queries.eval_types) {
      auto it = chosen.find(type);
      const auto& params = it != chosen.end() ? it->second.params : base;
      save_checkpoint(params, layout.type_checkpoint(type));
      auto& row = selection[std::string(to_string(type))];
      row["source"] = it != chosen.end() ? it->second.source : "multi-task";
      if (it != chosen.end()) row["validation_hits@3m"] = it->second.validation_hits3;
      log << to_string(type) << ": " << row["source"].get<std::string>() << "\n";
    }
  }
  write_text(layout.selection(), selection.dump(2) + "\n");
}

MetricsTable run_evaluate(const PipelineConfig& config, QuerySplit split, const std::optional<fs::path>& checkpoint,
                          std::ostream& log) {
  PipelineLayout layout{config.output_dir};
  const auto data = load_ingested(layout);
  const auto& types = split == QuerySplit::kTrain ? config.queries.train_types : config.queries.eval_types;
  const auto datasets = load_query_datasets(layout, split, types, data);
  if (datasets.empty())
    throw MissingArtifactError("no " + std::string(to_string(split)) + " queries (run gen-queries first)");
  std::optional<ModelParameters<float>> shared;
  if (checkpoint) shared = load_checked(*checkpoint, data);
  for (const auto& [type, queries] : datasets)
    if (!checkpoint && !fs::exists(layout.type_checkpoint(type)))
      throw MissingArtifactError("missing checkpoint " + layout.type_checkpoint(type).string() +
                                 " (run finetune first, or pass --checkpoint)");
  EvaluationResult all;
  for (const auto& [type, queries] : datasets) {
    const auto params = shared ? *shared : load_checked(layout.type_checkpoint(type), data);
    auto r = evaluate(params, {{type, queries}}, split, config.threads);
    all.table.insert(r.table.begin(), r.table.end());
    all.ranks.insert(all.ranks.end(), r.ranks.begin(), r.ranks.end());
  }
  write_text(layout.eval_metrics(split, "json"), metrics_to_json(all.table).dump(2) + "\n");
  const auto text = metrics_to_text(all.table);
  write_text(layout.eval_metrics(split, "txt"), text);
  write_rank_jsonl(layout.eval_ranks(split), all.ranks);
  log << text;
  return all.table;
}

nlohmann::ordered_json run_interpret(const PipelineConfig& config, const fs::path& query_file,
                                     const std::optional<std::string>& fill, const std::optional<fs::path>& checkpoint,
                                     std::ostream& log) {
  PipelineLayout layout{config.output_dir};
  const auto data = load_ingested(layout);
  std::ifstream in(query_file);
  if (!in) throw MissingArtifactError("cannot read query file " + query_file.string());
  std::optional<EntityId> fill_id;
  if (fill) {
    nlohmann::json token = *fill;
    if (!fill->empty() && fill->find_first_not_of("0123456789") == std::string::npos)
      token = std::stoll(*fill);
    fill_id = resolve_entity(token, data);
  }
  nlohmann::ordered_json report = nlohmann::ordered_json::array();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(query_file.string(), line_no, e.what());
    }
    if (!j.contains("type") || !j.contains("anchors") || !j.contains("relations"))
      throw ParseError(query_file.string(), line_no, "query needs type, anchors and relations");
    const auto type = parse_query_type(j["type"].get<std::string>());
    std::vector<EntityId> anchors;
    for (const auto& a : j["anchors"]) anchors.push_back(resolve_entity(a, data));
    std::vector<RelationId> relations;
    for (const auto& r : j["relations"]) relations.push_back(resolve_relation(r, data));
    const auto query = build_query(type, anchors, relations, data.entity_count(), data.relation_count());
    fs::path ckpt;
    if (checkpoint) {
      ckpt = *checkpoint;
    } else {
      for (const auto& c : {layout.type_checkpoint(type), layout.multitask_checkpoint(), layout.stage_checkpoint(2),
                            layout.stage_checkpoint(1)})
        if (fs::exists(c)) {
          ckpt = c;
          break;
        }
      if (ckpt.empty()) throw MissingArtifactError("no checkpoint available under " + layout.root.string());
    }
    const auto params = load_checked(ckpt, data);
    nlohmann::ordered_json entry;
    entry["line"] = line_no;
    entry["type"] = std::string(to_string(type));
    entry["checkpoint"] = ckpt.string();
    if (fill_id) entry["fill"] = data.entity_names[*fill_id];
    entry["intermediates"] = nlohmann::ordered_json::array();
    log << "query " << line_no << " (" << to_string(type) << ")\n";
    for (const auto& node : interpret(params, query, config.interpret_top_k, fill_id)) {
      nlohmann::ordered_json n;
      n["branch"] = node.branch;
      n["variable"] = node.variable;
      n["top"] = nlohmann::ordered_json::array();
      log << "  branch " << node.branch << " variable " << node.variable << ":";
      for (const auto& d : node.top) {
        n["top"].push_back({{"entity", data.entity_names[d.entity]}, {"id", d.entity}, {"score", d.score}});
        log << " " << data.entity_names[d.entity];
      }
      log << "\n";
      entry["intermediates"].push_back(std::move(n));
    }
    report.push_back(std::move(entry));
  }
  write_text(layout.root / "interpret.json", report.dump(2) + "\n");
  return report;
}

bool run_gradcheck(std::uint64_t seed, std::ostream& log) {
  bool ok = true;
  auto print = [&](const std::vector<nn::GradcheckReport>& reports) {
    for (const auto& r : reports) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%-28s max_rel_err=%.3e tol=%.0e checked=%zu %s\n", r.name.c_str(),
                    r.max_rel_error, r.tolerance, r.checked, r.passed() ? "PASS" : "FAIL");
      log << buf;
      ok = ok && r.passed();
    }
  };
  print(op_gradchecks(seed));
  print(model_gradchecks(seed));
  return ok;
}

}  // namespace kgt
