/**
 *  Copyright (c) 2026 by Contributors
 * @file test_cli_io.cc
 * @brief Configuration parsing, exit codes, manifests and a small end-to-end run.
 */
#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include "helpers.hpp"
#include "kgt/cli.hpp"
#include "kgt/config.hpp"
#include "kgt/error.hpp"
#include "kgt/parallel.hpp"
#include "kgt/pipeline.hpp"

using namespace kgt;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f);
  return {std::istreambuf_iterator<char>(f), {}};
}

// Small enough that the whole pipeline runs in a couple of seconds.
std::string tiny_config(const fs::path& data, const fs::path& out) {
  return "seed = 3\n"
         "data.dir = " + data.string() + "\n"
         "out = " + out.string() + "\n"
         "model.layers = 2\nmodel.hidden = 8\nmodel.heads = 2\nmodel.experts = 2\nmodel.dropout = 0.0\n"
         "stage1.epochs = 2\nstage1.batch_size = 16\nstage1.steps_per_epoch = 2\n"
         "stage2.epochs = 2\nstage2.batch_size = 16\nstage2.steps_per_epoch = 2\n"
         "finetune.epochs = 2\nfinetune.batch_size = 16\n"
         "queries.train_types = 1p,2p\nqueries.eval_types = 1p,2p,2u\n"
         "queries.train_count = 20\nqueries.valid_count = 5\nqueries.test_count = 5\n"
         "queries.allow_fewer = true\n";
}

class ScopedEnv {
 public:
  ScopedEnv(const char* name, const char* value) : name_(name) {
    if (const char* old = std::getenv(name)) old_ = old;
    ::setenv(name, value, 1);
  }
  ~ScopedEnv() {
    if (old_)
      ::setenv(name_, old_->c_str(), 1);
    else
      ::unsetenv(name_);
  }

 private:
  const char* name_;
  std::optional<std::string> old_;
};

}  // namespace

TEST_SUITE("cli-io") {
  TEST_CASE("config lines, comments and typed getters") {
    const auto f = ConfigFile::parse("# header\nseed = 5\n\nmodel.hidden = 32  # inline\nflag = true\nx = 0.25\n");
    CHECK(f.get_u64("seed", 0) == 5);
    CHECK(f.get_size("model.hidden", 0) == 32);
    CHECK(f.get_bool("flag", false));
    CHECK(f.get_double("x", 0) == doctest::Approx(0.25));
    CHECK(f.get_size("absent", 9) == 9);
    CHECK(f.canonical() == "flag=true\nmodel.hidden=32\nseed=5\nx=0.25\n");
  }

  TEST_CASE("config parse errors carry the line number") {
    try {
      ConfigFile::parse("seed = 1\n\nno equals sign\n", "run.conf");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
      CHECK(std::string(e.what()).find("run.conf:3") == 0);
    }
    try {
      ConfigFile::parse("a = 1\nb = 2\na = 3\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
      CHECK(std::string(e.what()).find("duplicate key 'a'") != std::string::npos);
    }
    CHECK_THROWS_AS(ConfigFile::parse(" = 4\n"), ParseError);
    CHECK_THROWS_AS(ConfigFile::parse("bad key = 4\n"), ParseError);
  }

  TEST_CASE("typed getters name the key on bad values") {
    const auto f = ConfigFile::parse("n = twelve\nb = maybe\n");
    try {
      (void)f.get_size("n", 0);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("'n'") != std::string::npos);
    }
    CHECK_THROWS_AS((void)f.get_bool("b", false), ConfigError);
  }

  TEST_CASE("unknown keys are rejected and listed") {
    const auto f = ConfigFile::parse("seed = 1\nmodel.hiden = 8\n", "x.conf");
    try {
      (void)pipeline_config(f);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("model.hiden") != std::string::npos);
    }
  }

  TEST_CASE("pipeline config: mandatory seed and key paths in errors") {
    auto message = [](const std::string& text) {
      try {
        (void)pipeline_config(ConfigFile::parse(text));
      } catch (const ConfigError& e) {
        return std::string(e.what());
      }
      return std::string();
    };
    CHECK(message("out = x\n").find("'seed'") != std::string::npos);
    CHECK(message("seed = 1\ndata.layout = mixed\n").find("data.layout") != std::string::npos);
    CHECK(message("seed = 1\nsampler.edge_keep = 0\n").find("sampler.edge_keep") != std::string::npos);
    CHECK(message("seed = 1\nqueries.train_types = 1p,2u\n").find("queries.train_types") != std::string::npos);
    CHECK(message("seed = 1\nqueries.eval_types = 1p,9x\n").find("queries.eval_types") != std::string::npos);
    CHECK(message("seed = 1\nfinetune.combos = 1p;1p+up\n").find("finetune.combos") != std::string::npos);
    CHECK(message("seed = 1\nstage1.epochs = -2\n").find("stage1.epochs") != std::string::npos);
    CHECK(message("seed = 1\nthreads = 0\n").find("threads") != std::string::npos);
    CHECK(message("seed = 1\n").empty());
  }

  TEST_CASE("pipeline config reads sections and overrides") {
    const auto c = pipeline_config(
        ConfigFile::parse("seed = 11\nmodel.layers = 4\noptim.lr = 0.01\nstage2.lr = 0.002\n"
                          "queries.train_count = 40\nqueries.train_count.1p = 7\nfinetune.combos = 1p; 1p+2p\n"
                          "data.layout = disjoint\n"));
    CHECK(c.seed == 11);
    CHECK(c.model.layers == 4);
    CHECK(c.layout == SplitLayout::kDisjoint);
    CHECK(c.stage1.optimizer.lr == doctest::Approx(0.01));
    CHECK(c.stage2.optimizer.lr == doctest::Approx(0.002));
    CHECK(c.stage1.seed == 11);
    CHECK(c.queries.count(QuerySplit::kTrain, QueryType::k1p) == 7);
    CHECK(c.queries.count(QuerySplit::kTrain, QueryType::k2p) == 40);
    REQUIRE(c.combos.size() == 2);
    CHECK(c.combos[1] == std::vector<QueryType>{QueryType::k1p, QueryType::k2p});
  }

  TEST_CASE("query type lists") {
    CHECK(parse_type_list("1p, 2i ,up", "k") == std::vector<QueryType>{QueryType::k1p, QueryType::k2i, QueryType::kUp});
    CHECK_THROWS_AS(parse_type_list("", "k"), ConfigError);
    CHECK_THROWS_AS(parse_type_list("1p,4p", "k"), ConfigError);
  }

  TEST_CASE("fnv1a reference values") {
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
  }

  TEST_CASE("thread count: flag beats environment") {
    ScopedEnv env("KGT_THREADS", "3");
    CHECK(resolve_threads(std::nullopt) == 3);
    CHECK(resolve_threads(5) == 5);
    CHECK_THROWS_AS(resolve_threads(0), ConfigError);
    ScopedEnv bad("KGT_THREADS", "many");
    CHECK_THROWS_AS(resolve_threads(std::nullopt), ConfigError);
  }

  TEST_CASE("exit codes") {
    test::TempDir tmp("cli_codes");
    SUBCASE("usage errors") {
      CHECK(cli({}).code != 0);
      CHECK(cli({"--seed", "1", "frobnicate"}).code != 0);
      CHECK(cli({"--seed", "1", "pretrain", "--stage", "3"}).code != 0);
    }
    SUBCASE("missing seed is a configuration error") {
      const auto r = cli({"--out", (tmp.path() / "o").string(), "gen-queries"});
      CHECK(r.code == 2);
      CHECK(r.err.find("seed") != std::string::npos);
    }
    SUBCASE("unknown config key") {
      const auto cfg = tmp.path() / "bad.conf";
      test::write_file(cfg, "seed = 1\nmodel.hiddn = 8\n");
      const auto r = cli({"--config", cfg.string(), "gen-queries"});
      CHECK(r.code == 2);
      CHECK(r.err.find("model.hiddn") != std::string::npos);
    }
    SUBCASE("evaluate before any training is a missing artifact") {
      const auto r = cli({"--seed", "1", "--out", (tmp.path() / "empty").string(), "evaluate", "--split", "valid"});
      CHECK(r.code == 3);
      CHECK_FALSE(r.err.empty());
    }
    SUBCASE("pretrain before ingest is a missing artifact") {
      const auto r = cli({"--seed", "1", "--out", (tmp.path() / "empty").string(), "pretrain", "--stage", "1"});
      CHECK(r.code == 3);
    }
  }

  TEST_CASE("end-to-end run is reproducible and leaves manifests") {
    test::TempDir tmp("cli_e2e");
    const auto data = tmp.path() / "data";
    auto run = [&](const std::string& name) {
      const auto out = tmp.path() / name;
      const auto cfg = tmp.path() / (name + ".conf");
      test::write_file(cfg, tiny_config(data, out));
      const std::string c = cfg.string();
      for (const auto& args : std::vector<std::vector<std::string>>{
               {"--config", c, "ingest"},
               {"--config", c, "gen-queries"},
               {"--config", c, "pretrain", "--stage", "1"},
               {"--config", c, "pretrain", "--stage", "2"},
               {"--config", c, "finetune", "--multi-task"},
               {"--config", c, "evaluate", "--split", "valid"}}) {
        const auto r = cli(args);
        INFO(args[2] << ": " << r.err);
        REQUIRE(r.code == 0);
      }
      return out;
    };
    REQUIRE(cli({"--seed", "2", "synth", "--dir", data.string(), "--entities", "20", "--noise", "5"}).code == 0);
    CHECK(fs::exists(data / "manifest" / "synth.json"));

    const auto a = run("a");
    const PipelineLayout la{a};
    for (const char* cmd : {"ingest", "gen-queries", "pretrain-stage1", "pretrain-stage2", "finetune",
                            "evaluate-valid"})
      CHECK(fs::exists(la.manifest(cmd)));
    const auto manifest = nlohmann::json::parse(slurp(la.manifest("ingest")));
    CHECK(manifest["seed"] == 3);
    CHECK(manifest["config_hash"].get<std::string>().rfind("fnv1a64:", 0) == 0);

    const auto metrics = nlohmann::json::parse(slurp(la.eval_metrics(QuerySplit::kValid, "json")));
    CHECK(metrics.contains("1p"));
    for (const auto& [type, row] : metrics.items()) {
      CHECK(row["hits@1m"].get<double>() <= row["hits@3m"].get<double>());
      CHECK(row["hits@3m"].get<double>() <= row["hits@10m"].get<double>());
    }

    const auto b = run("b");
    const PipelineLayout lb{b};
    CHECK(slurp(la.stage_checkpoint(2)) == slurp(lb.stage_checkpoint(2)));
    CHECK(slurp(la.type_checkpoint(QueryType::k1p)) == slurp(lb.type_checkpoint(QueryType::k1p)));
    CHECK(slurp(la.eval_metrics(QuerySplit::kValid, "json")) == slurp(lb.eval_metrics(QuerySplit::kValid, "json")));
    CHECK(slurp(la.eval_ranks(QuerySplit::kValid)) == slurp(lb.eval_ranks(QuerySplit::kValid)));
    // Same config content apart from the output path.
    CHECK(slurp(la.manifest("ingest")) != slurp(lb.manifest("ingest")));
  }

  TEST_CASE("interpret writes a report for a 2p query") {
    test::TempDir tmp("cli_interp");
    const auto data = tmp.path() / "data";
    const auto out = tmp.path() / "o";
    const auto cfg = tmp.path() / "c.conf";
    test::write_file(cfg, tiny_config(data, out));
    REQUIRE(cli({"--seed", "2", "synth", "--dir", data.string(), "--entities", "20"}).code == 0);
    REQUIRE(cli({"--config", cfg.string(), "ingest"}).code == 0);
    REQUIRE(cli({"--config", cfg.string(), "pretrain", "--stage", "1"}).code == 0);
    const auto qf = tmp.path() / "q.jsonl";
    test::write_file(qf, "{\"type\": \"2p\", \"anchors\": [0], \"relations\": [0, 1]}\n");
    const auto r = cli({"--config", cfg.string(), "interpret", "--query-file", qf.string()});
    INFO(r.err);
    REQUIRE(r.code == 0);
    CHECK_FALSE(r.out.empty());
    const auto bad = tmp.path() / "bad.jsonl";
    test::write_file(bad, "{\"type\": \"2p\", \"anchors\": [0]}\n");
    CHECK(cli({"--config", cfg.string(), "interpret", "--query-file", bad.string()}).code != 0);
  }
}
