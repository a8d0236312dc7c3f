/**
 *  Copyright (c) 2026 by Contributors
 * @file cli.cc
 * @brief Argument parsing and command dispatch.
 */
#include "kgt/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>

#include "kgt/error.hpp"
#include "kgt/parallel.hpp"
#include "kgt/pipeline.hpp"

namespace kgt {

namespace {

struct Globals {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
};

// Flag overrides are written into the config so the manifest hash sees them.
// Threads are not: results do not depend on the thread count.
std::pair<ConfigFile, PipelineConfig> assemble(const Globals& g, const std::map<std::string, std::string>& extra = {}) {
  ConfigFile file = g.config ? ConfigFile::load(*g.config) : ConfigFile::parse("", "<defaults>");
  if (g.seed) file.set("seed", std::to_string(*g.seed));
  if (g.out) file.set("out", *g.out);
  for (const auto& [k, v] : extra) file.set(k, v);
  auto config = pipeline_config(file);
  if (g.threads || std::getenv("KGT_THREADS")) config.threads = resolve_threads(g.threads);
  for (auto* t : {&config.stage1, &config.stage2, &config.finetune}) t->threads = config.threads;
  return {std::move(file), std::move(config)};
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Levi-graph Transformer reasoner for EPFO queries over knowledge graphs", "kgt"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Configuration file (key = value lines)");
  app.add_option("--seed", g.seed, "Random seed (overrides the config)");
  app.add_option("--out", g.out, "Output directory (overrides the config)");
  app.add_option("--threads", g.threads, "Worker threads (overrides KGT_THREADS)")->check(CLI::PositiveNumber);

  auto* synth = app.add_subcommand("synth", "Write a synthetic knowledge graph split");
  std::string synth_dir;
  SyntheticOptions synth_opts;
  synth->add_option("--dir", synth_dir, "Destination directory")->required();
  synth->add_option("--entities", synth_opts.entities, "Entity count");
  synth->add_option("--relations", synth_opts.relations, "Relation count");
  synth->add_option("--edge-probability", synth_opts.edge_probability, "Structured edge probability");
  synth->add_option("--noise", synth_opts.noise_triples, "Random extra triples");

  auto* ingest = app.add_subcommand("ingest", "Validate a dataset directory and store it id-mapped");
  std::optional<std::string> ingest_input, ingest_layout;
  ingest->add_option("--input", ingest_input, "Dataset directory (overrides data.dir)");
  ingest->add_option("--layout", ingest_layout, "cumulative or disjoint (overrides data.layout)");

  auto* gen = app.add_subcommand("gen-queries", "Generate query datasets per type and split");

  auto* pretrain = app.add_subcommand("pretrain", "Masked pre-training");
  int stage = 0;
  bool resume = false;
  pretrain->add_option("--stage", stage, "1 (dense) or 2 (meta-graph)")->required()->check(CLI::IsMember({1, 2}));
  pretrain->add_flag("--resume", resume, "Continue from this stage's checkpoint");

  auto* finetune = app.add_subcommand("finetune", "Multi-task and combinatorial fine-tuning");
  bool multi_task = false;
  std::optional<std::string> combos_text;
  std::string init = "auto";
  finetune->add_flag("--multi-task", multi_task, "Run the multi-task phase");
  finetune->add_option("--combos", combos_text, "Combinations such as '1p;1p+2p' (overrides finetune.combos)");
  finetune->add_option("--init", init, "auto, scratch, or a checkpoint path");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Filtered Hits@Km / MRRm metrics");
  std::string split_name;
  std::optional<std::string> eval_ckpt;
  evaluate_cmd->add_option("--split", split_name, "valid, test or train")->required();
  evaluate_cmd->add_option("--checkpoint", eval_ckpt, "Use this checkpoint for every type");

  auto* interpret_cmd = app.add_subcommand("interpret", "Decode intermediate variables of queries");
  std::string query_file;
  std::optional<std::string> fill, interp_ckpt;
  interpret_cmd->add_option("--query-file", query_file, "JSON Lines file of queries")->required();
  interpret_cmd->add_option("--fill", fill, "Entity substituted at the target position");
  interpret_cmd->add_option("--checkpoint", interp_ckpt, "Checkpoint to decode with");

  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient suite");

  std::vector<std::string> argv_store{"kgt"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (synth->parsed()) {
      if (!g.seed && !g.config) throw ConfigError("synth needs --seed or --config");
      auto [file, config] = assemble(g);
      synth_opts.seed = config.seed;
      const auto split = run_synth(synth_opts, synth_dir);
      out << "wrote " << split.entity_count() << " entities, " << split.train.triple_count() << " train triples to "
          << synth_dir << "\n";
      write_manifest(PipelineLayout{synth_dir}, "synth", file, config);
      return 0;
    }
    if (gradcheck_cmd->parsed()) {
      std::uint64_t seed = g.seed.value_or(1);
      if (g.config) seed = assemble(g).second.seed;
      const bool ok = run_gradcheck(seed, out);
      out << (ok ? "gradcheck: all checks passed\n" : "gradcheck: FAILED\n");
      return ok ? 0 : 1;
    }
    std::map<std::string, std::string> extra;
    if (ingest->parsed()) {
      if (ingest_input) extra["data.dir"] = *ingest_input;
      if (ingest_layout) extra["data.layout"] = *ingest_layout;
    }
    if (finetune->parsed() && combos_text) extra["finetune.combos"] = *combos_text;
    auto [file, config] = assemble(g, extra);
    PipelineLayout layout{config.output_dir};
    std::map<std::string, std::string> margs;

    if (ingest->parsed()) {
      run_ingest(config, out);
      write_manifest(layout, "ingest", file, config);
    } else if (gen->parsed()) {
      run_gen_queries(config, out);
      write_manifest(layout, "gen-queries", file, config);
    } else if (pretrain->parsed()) {
      run_pretrain(config, stage, resume, out);
      margs["stage"] = std::to_string(stage);
      margs["resume"] = resume ? "true" : "false";
      write_manifest(layout, "pretrain-stage" + std::to_string(stage), file, config, margs);
    } else if (finetune->parsed()) {
      FinetuneRequest req;
      req.combos = config.combos;
      req.init = init;
      // Without --multi-task the phase still runs unless combinations start
      // from an existing multi-task checkpoint.
      req.multi_task = multi_task || req.combos.empty() || !std::filesystem::exists(layout.multitask_checkpoint());
      run_finetune(config, req, out);
      margs["multi_task"] = req.multi_task ? "true" : "false";
      margs["init"] = init;
      write_manifest(layout, "finetune", file, config, margs);
    } else if (evaluate_cmd->parsed()) {
      const auto split = parse_query_split(split_name);
      std::optional<std::filesystem::path> ckpt;
      if (eval_ckpt) ckpt = *eval_ckpt;
      run_evaluate(config, split, ckpt, out);
      margs["split"] = split_name;
      write_manifest(layout, "evaluate-" + split_name, file, config, margs);
    } else if (interpret_cmd->parsed()) {
      std::optional<std::filesystem::path> ckpt;
      if (interp_ckpt) ckpt = *interp_ckpt;
      run_interpret(config, query_file, fill, ckpt, out);
      margs["query_file"] = query_file;
      if (fill) margs["fill"] = *fill;
      write_manifest(layout, "interpret", file, config, margs);
    }
    return 0;
  } catch (const MissingArtifactError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace kgt
