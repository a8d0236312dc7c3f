/**
 *  Copyright (c) 2026 by Contributors
 * @file test_training.cc
 * @brief Loss definitions, pre-training and fine-tuning loops, selection.
 */
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "helpers.hpp"
#include "kgt/error.hpp"
#include "kgt/evaluation.hpp"
#include "kgt/training.hpp"

using namespace kgt;
using nn::Tape;

namespace {

ModelConfig tiny_model(std::size_t entities, std::size_t relations, std::size_t layers = 2) {
  ModelConfig c;
  c.entity_count = entities;
  c.relation_count = relations;
  c.layers = layers;
  c.hidden = 16;
  c.heads = 2;
  c.experts = 2;
  c.dropout = 0.0;
  c.init_std = 0.1;
  return c;
}

double answer_term(const std::vector<double>& s, std::size_t a, const std::vector<std::size_t>& answers) {
  double denom = std::exp(s[a]);
  for (std::size_t e = 0; e < s.size(); ++e)
    if (std::find(answers.begin(), answers.end(), e) == answers.end()) denom += std::exp(s[e]);
  return -(s[a] - std::log(denom));
}

double nll(const std::vector<double>& s, std::vector<std::uint32_t> answers) {
  Tape<double> t;
  return t.scalar(t.answer_set_nll(t.constant(1, s.size(), s), std::move(answers)));
}

// 1p training queries for every (head, relation) of the graph.
QueryDatasets one_hop_queries(const SplitDataset& split) {
  GenerationOptions opt;
  opt.allow_fewer = true;
  opt.attempts_per_query = 500;
  return {{QueryType::k1p, generate_queries(split, QueryType::k1p, split.train.triple_count(), 1, opt)}};
}

bool same_params(const ModelParameters<float>& a, const ModelParameters<float>& b) {
  bool same = true;
  std::vector<const nn::Tensor<float>*> ta;
  a.visit([&](const std::string&, const nn::Tensor<float>& t) { ta.push_back(&t); });
  std::size_t i = 0;
  b.visit([&](const std::string&, const nn::Tensor<float>& t) { same = same && *ta[i++] == t; });
  return same && i == ta.size();
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("fine-tuning loss cases") {
  SUBCASE("single answer is plain softmax cross-entropy") {
    const std::vector<double> s{0.3, -1.2, 2.0, 0.5};
    Tape<double> t;
    const double ce = t.scalar(t.cross_entropy_smoothed(t.constant(1, 4, s), {1}, 0.0));
    CHECK(nll(s, {1}) == doctest::Approx(ce).epsilon(1e-12));
  }
  SUBCASE("every entity an answer gives zero loss") {
    CHECK(nll({0.3, -1.2, 2.0}, {0, 1, 2}) == doctest::Approx(0.0));
  }
  SUBCASE("two equal answers and a -inf non-answer give zero loss") {
    const double inf = std::numeric_limits<double>::infinity();
    CHECK(nll({1.5, 1.5, -inf}, {0, 1}) == doctest::Approx(0.0));
  }
  SUBCASE("loss is the mean of per-answer terms") {
    const std::vector<double> s{0.1, 0.9, -0.4, 1.7, 0.0};
    const double expect = (answer_term(s, 1, {1, 3}) + answer_term(s, 3, {1, 3})) / 2;
    CHECK(nll(s, {1, 3}) == doctest::Approx(expect).epsilon(1e-12));
  }
  SUBCASE("an answer's term ignores the other answers' logits") {
    std::vector<double> s{0.1, 0.9, -0.4, 1.7, 0.0};
    const double before = nll(s, {1, 3});
    const double term_b_before = answer_term(s, 3, {1, 3});
    s[3] += 2.5;
    const double term_b_after = answer_term(s, 3, {1, 3});
    // Only answer 3's own term moves.
    CHECK(nll(s, {1, 3}) - before == doctest::Approx((term_b_after - term_b_before) / 2).epsilon(1e-12));
  }
  SUBCASE("empty answer set is an error") { CHECK_THROWS_AS(nll({0, 1}, {}), ConfigError); }
}

TEST_CASE("query loss reads the target-position logits") {
  const auto c = tiny_model(6, 2);
  const auto p = init_parameters(c, 1);
  const auto q = build_query(QueryType::k2p, {0}, {0, 1});
  const EntityId answers[] = {2, 5};
  Tape<float> t;
  Encoder<float> enc(p, t);
  const float loss = t.scalar(query_loss(enc, q, answers, c, false));
  const std::uint32_t pos[] = {q.target_node};
  const auto logits = predict_logits(p, make_input(q, c), pos);
  const double expect = nll(std::vector<double>(logits.begin(), logits.end()), {2, 5});
  CHECK(loss == doctest::Approx(expect).epsilon(1e-5));
}

TEST_CASE("uniform logits give log |E| per predicted node for any smoothing") {
  auto c = tiny_model(7, 2);
  auto p = init_parameters(c, 2);
  for (auto& v : p.decoder.values) v = 0.0f;
  const Triple ts[] = {{0, 0, 1}, {1, 1, 2}};
  SampledSubgraph sub;
  sub.levi = triple_transform(std::span<const Triple>(ts));
  sub.original_entities = {0, 1, 2, kNoEntity, kNoEntity};
  sub.mask_positions = {0, 2};
  sub.prediction_targets = {0, 2};
  sub.corruption.assign(2, {});
  for (double alpha : {0.0, 0.1, 0.7}) {
    Tape<float> t;
    Encoder<float> enc(p, t);
    CHECK(t.scalar(subgraph_loss(enc, sub, c, alpha, false)) == doctest::Approx(2 * std::log(7.0)).epsilon(1e-5));
  }
}

TEST_CASE("meta-graph loss ignores intermediate labels") {
  const auto c = tiny_model(6, 2);
  const auto p = init_parameters(c, 3);
  const SlotEdge edges[] = {{0, 0, 1}, {1, 1, 2}};
  SampledSubgraph sub;
  sub.levi = LeviGraph::from_slots({0, 3, 4}, edges);
  sub.original_entities = {0, 3, 4, kNoEntity, kNoEntity};
  sub.mask_positions = {1, 2};
  sub.prediction_targets = {2};
  sub.corruption.assign(2, {});
  auto loss_of = [&](EntityId intermediate) {
    auto s = sub;
    s.original_entities[1] = intermediate;
    Tape<float> t;
    Encoder<float> enc(p, t);
    return t.scalar(subgraph_loss(enc, s, c, 0.1, false));
  };
  CHECK(loss_of(3) == loss_of(5));
}

TEST_CASE("config validation") {
  auto cfg = default_train_config(Stage::kFinetune);
  CHECK(cfg.label_smoothing == 0.0);
  CHECK(cfg.batch_size == 128);
  CHECK(default_train_config(Stage::kStage1).batch_size == 32);
  CHECK_NOTHROW(cfg.validate());
  cfg.label_smoothing = 0.1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  auto pre = default_train_config(Stage::kStage1);
  pre.label_smoothing = 1.0;
  CHECK_THROWS_AS(pre.validate(), ConfigError);
  pre.label_smoothing = 0.1;
  pre.batch_size = 0;
  CHECK_THROWS_AS(pre.validate(), ConfigError);
}

TEST_CASE("zero epochs leave the model unchanged") {
  const auto split = test::make_split(4, 3, {{0, 0, 1}, {1, 1, 2}, {2, 2, 3}});
  const auto c = tiny_model(4, 3);
  auto p = init_parameters(c, 4);
  const auto before = p;
  auto cfg = default_train_config(Stage::kStage1);
  cfg.epochs = 0;
  CHECK(pretrain_stage1(p, split.train, cfg).epochs.empty());
  CHECK(same_params(p, before));
}

TEST_CASE("stage 1 overfits a three-triple graph") {
  const auto split = test::make_split(4, 3, {{0, 0, 1}, {1, 1, 2}, {2, 2, 3}});
  const auto c = tiny_model(4, 3);
  auto p = init_parameters(c, 5);
  auto cfg = default_train_config(Stage::kStage1);
  cfg.epochs = 200;
  cfg.batch_size = 8;
  cfg.label_smoothing = 0.0;
  cfg.optimizer.lr = 0.01;
  cfg.optimizer.weight_decay = 0.0;
  cfg.seed = 5;
  cfg.stage1.min_nodes = 2;
  cfg.stage1.max_nodes = 4;
  cfg.stage1.edge_keep = 1.0;
  const auto h = pretrain_stage1(p, split.train, cfg);
  REQUIRE(h.epochs.size() == 200);
  CHECK(h.epochs.front().stage == Stage::kStage1);
  const double floor = std::log(4.0) / 4;
  double tail = 0;
  for (std::size_t i = 190; i < 200; ++i) tail += h.epochs[i].loss / 10;
  CAPTURE(tail);
  CHECK(tail < floor);
}

TEST_CASE("stage 2 checks its stage and runs from any initialization") {
  const auto split = test::make_split(4, 3, {{0, 0, 1}, {1, 1, 2}, {2, 2, 3}, {0, 2, 2}});
  auto p = init_parameters(tiny_model(4, 3), 6);
  auto cfg = default_train_config(Stage::kStage1);
  cfg.epochs = 1;
  CHECK_THROWS_AS(pretrain_stage2(p, split.train, cfg), ConfigError);
  cfg.stage = Stage::kStage2;
  CHECK(pretrain_stage2(p, split.train, cfg).epochs.size() == 1);
  auto wrong = init_parameters(tiny_model(5, 3), 6);
  CHECK_THROWS(pretrain_stage2(wrong, split.train, cfg));
}

TEST_CASE("stage 2 depends only on the parameters it receives") {
  const auto split = test::make_split(6, 2, {{0, 0, 1}, {1, 1, 2}, {2, 0, 3}, {3, 1, 4}, {4, 0, 5}, {1, 0, 3}});
  auto s1 = default_train_config(Stage::kStage1);
  s1.epochs = 2;
  s1.stage1.min_nodes = 3;
  s1.stage1.max_nodes = 5;
  auto s2 = default_train_config(Stage::kStage2);
  s2.epochs = 2;
  auto p = init_parameters(tiny_model(6, 2), 7);
  pretrain_stage1(p, split.train, s1);
  auto a = p, b = p;
  pretrain_stage2(a, split.train, s2);
  // An unrelated stage-1 run in between must not change the stage-2 result.
  auto other = init_parameters(tiny_model(6, 2), 8);
  pretrain_stage1(other, split.train, s1);
  pretrain_stage2(b, split.train, s2);
  CHECK(same_params(a, b));
}

TEST_CASE("training is deterministic across runs and thread counts") {
  const auto split = test::make_split(6, 2, {{0, 0, 1}, {1, 1, 2}, {2, 0, 3}, {3, 1, 4}, {4, 0, 5}, {1, 0, 3}});
  auto cfg = default_train_config(Stage::kStage1);
  cfg.epochs = 2;
  cfg.batch_size = 9;
  cfg.stage1.min_nodes = 3;
  cfg.stage1.max_nodes = 5;
  auto c = tiny_model(6, 2);
  c.dropout = 0.1;
  auto a = init_parameters(c, 9), b = a, d = a;
  pretrain_stage1(a, split.train, cfg);
  pretrain_stage1(b, split.train, cfg);
  cfg.threads = 3;
  pretrain_stage1(d, split.train, cfg);
  CHECK(same_params(a, b));
  CHECK(same_params(a, d));
}

TEST_CASE("epoch metrics are written as JSON lines") {
  test::TempDir dir("metrics");
  const auto split = test::make_split(4, 3, {{0, 0, 1}, {1, 1, 2}, {2, 2, 3}, {0, 2, 2}});
  auto p = init_parameters(tiny_model(4, 3), 10);
  auto cfg = default_train_config(Stage::kStage2);
  cfg.epochs = 3;
  cfg.metrics_path = dir.path() / "m.jsonl";
  pretrain_stage2(p, split.train, cfg);
  std::ifstream in(*cfg.metrics_path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("stage") == "stage2");
    CHECK(j.at("epoch") == n);
    CHECK(j.contains("loss"));
    CHECK(j.at("lr").get<double>() == doctest::Approx(cfg.optimizer.lr * std::pow(0.997, n)));
    CHECK(j.contains("seconds"));
    ++n;
  }
  CHECK(n == 3);
}

TEST_CASE("fine-tuning memorizes one-hop queries") {
  const auto split = test::make_split(5, 2, {{0, 0, 1}, {1, 1, 2}, {3, 0, 4}});
  const auto data = one_hop_queries(split);
  REQUIRE(data.at(QueryType::k1p).size() == 3);
  auto p = init_parameters(tiny_model(5, 2), 11);
  auto cfg = default_train_config(Stage::kFinetune);
  cfg.epochs = 60;
  cfg.optimizer.lr = 0.01;
  cfg.optimizer.weight_decay = 0.0;
  const auto h = finetune(p, data, cfg);
  SUBCASE("loss falls over the first ten epochs") {
    int rises = 0;
    for (std::size_t i = 1; i < 10; ++i) rises += h.epochs[i].loss > h.epochs[i - 1].loss;
    CHECK(rises <= 1);
  }
  SUBCASE("argmax is the unique answer") {
    for (const auto& q : data.at(QueryType::k1p)) {
      REQUIRE(q.answers_train.size() == 1);
      const auto s = score_query(p, q.query)[0];
      CHECK(std::max_element(s.begin(), s.end()) - s.begin() == q.answers_train[0]);
    }
  }
}

TEST_CASE("queries without training answers are skipped") {
  const auto split = test::make_split(5, 2, {{0, 0, 1}}, {{1, 1, 2}});
  QueryInstance empty;
  empty.query = build_query(QueryType::k1p, {1}, {1});
  empty.answers_valid = {2};
  QueryInstance full;
  full.query = build_query(QueryType::k1p, {0}, {0});
  full.answers_train = {1};
  auto p = init_parameters(tiny_model(5, 2), 12);
  auto cfg = default_train_config(Stage::kFinetune);
  cfg.epochs = 1;
  CHECK(finetune(p, {{QueryType::k1p, {empty, full}}}, cfg).skipped_queries == 1);
}

TEST_CASE("multi-task fine-tuning rejects evaluation-only types") {
  auto p = init_parameters(tiny_model(5, 2), 13);
  QueryInstance q;
  q.query = build_query(QueryType::k2u, {0, 1}, {0, 1});
  q.answers_train = {2};
  CHECK_THROWS_AS(multi_task_finetune(p, {{QueryType::k2u, {q}}}, default_train_config(Stage::kFinetune)),
                  ConfigError);
}

TEST_CASE("checkpoint selection") {
  SUBCASE("the higher validation score wins") {
    // Rows: multi-task base, then the 1p+2p combination.
    const std::vector<std::map<QueryType, double>> scores{{{QueryType::k2p, 0.345}, {QueryType::k1p, 0.8}},
                                                          {{QueryType::k2p, 0.358}, {QueryType::k1p, 0.7}}};
    const auto best = select_best(scores);
    CHECK(best.at(QueryType::k2p) == 1);
    CHECK(best.at(QueryType::k1p) == 0);
  }
  SUBCASE("ties keep the earlier candidate") {
    const auto best = select_best({{{QueryType::k3i, 0.5}}, {{QueryType::k3i, 0.5}}});
    CHECK(best.at(QueryType::k3i) == 0);
  }
  SUBCASE("labels and parsing") {
    CHECK(combo_label({QueryType::k1p, QueryType::k2p}) == "1p+2p");
    CHECK(parse_combo("1p+2p+3p") == std::vector<QueryType>{QueryType::k1p, QueryType::k2p, QueryType::k3p});
    CHECK(parse_combo("2i, 3i") == std::vector<QueryType>{QueryType::k2i, QueryType::k3i});
    CHECK_THROWS_AS(parse_combo("1p+ip"), ConfigError);
    CHECK_THROWS_AS(parse_combo("1p+9x"), ConfigError);
  }
}

TEST_CASE("combinatorial fine-tuning") {
  std::mt19937_64 rng(14);
  const auto split = test::make_split(10, 2, test::random_triples(rng, 10, 2, 30), test::random_triples(rng, 10, 2, 8));
  QueryDatasets train, valid;
  GenerationOptions tr, va;
  tr.allow_fewer = va.allow_fewer = true;
  va.purpose = QuerySplit::kValid;
  for (auto t : kTrainableQueryTypes) train[t] = generate_queries(split, t, 6, 1, tr);
  for (auto t : {QueryType::k1p, QueryType::k2p, QueryType::k2u}) valid[t] = generate_queries(split, t, 4, 2, va);
  const auto base = init_parameters(tiny_model(10, 2), 15);
  auto cfg = default_train_config(Stage::kFinetune);
  cfg.epochs = 2;

  SUBCASE("no combinations fall back to the multi-task checkpoint") {
    const auto out = combinatorial_finetune(base, train, {}, valid, cfg);
    REQUIRE(out.size() == valid.size());
    for (const auto& [type, sel] : out) {
      CHECK(sel.source == "multi-task");
      CHECK(same_params(sel.params, base));
    }
  }
  SUBCASE("one combination of all five equals continued multi-task tuning") {
    const std::vector<QueryType> all(std::begin(kTrainableQueryTypes), std::end(kTrainableQueryTypes));
    const auto out = combinatorial_finetune(base, train, {all}, valid, cfg);
    auto continued = base;
    multi_task_finetune(continued, train, cfg);
    for (const auto& [type, sel] : out)
      if (sel.source != "multi-task") CHECK(same_params(sel.params, continued));
    const auto scores = evaluate(continued, valid, QuerySplit::kValid).table;
    for (const auto& [type, sel] : out) CHECK(sel.validation_hits3 >= scores.at(type).hits3);
  }
  SUBCASE("evaluation-only types in a combination are rejected") {
    CHECK_THROWS_AS(combinatorial_finetune(base, train, {{QueryType::kPi}}, valid, cfg), ConfigError);
  }
}

}  // TEST_SUITE
