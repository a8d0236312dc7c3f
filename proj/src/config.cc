/**
 *  Copyright (c) 2026 by Contributors
 * @file config.cc
 * @brief Configuration parsing and validation.
 */
#include "kgt/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "kgt/error.hpp"

namespace kgt {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("config key '" + key + "': expected " + expected + ", got '" + value + "'");
}

template <typename T>
T parse_integer(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, value, "a non-negative integer");
  return out;
}

}  // namespace

ConfigFile ConfigFile::parse(std::string_view text, const std::string& source) {
  ConfigFile cfg;
  cfg.source_ = source;
  std::size_t line_no = 0, start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find('\n', start), text.size());
    ++line_no;
    auto line = text.substr(start, end - start);
    start = end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(source, line_no, "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ParseError(source, line_no, "empty key");
    for (char c : key)
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_'))
        throw ParseError(source, line_no, "invalid character in key '" + key + "'");
    if (!cfg.entries_.emplace(key, value).second) throw ParseError(source, line_no, "duplicate key '" + key + "'");
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), path.string());
}

std::optional<std::string> ConfigFile::get_optional(const std::string& key) const {
  read_.insert(key);
  if (auto it = entries_.find(key); it != entries_.end()) return it->second;
  return std::nullopt;
}

std::string ConfigFile::get_string(const std::string& key, const std::string& fallback) const {
  return get_optional(key).value_or(fallback);
}

std::size_t ConfigFile::get_size(const std::string& key, std::size_t fallback) const {
  const auto v = get_optional(key);
  return v ? parse_integer<std::size_t>(key, *v) : fallback;
}

std::uint64_t ConfigFile::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto v = get_optional(key);
  return v ? parse_integer<std::uint64_t>(key, *v) : fallback;
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
  const auto v = get_optional(key);
  if (!v) return fallback;
  std::size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(*v, &pos);
  } catch (const std::exception&) {
    bad_value(key, *v, "a number");
  }
  if (pos != v->size()) bad_value(key, *v, "a number");
  return out;
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
  const auto v = get_optional(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1") return true;
  if (*v == "false" || *v == "0") return false;
  bad_value(key, *v, "true or false");
}

void ConfigFile::reject_unknown() const {
  std::string unknown;
  for (const auto& [key, value] : entries_)
    if (!read_.contains(key)) unknown += (unknown.empty() ? "" : ", ") + key;
  if (!unknown.empty()) throw ConfigError(source_ + ": unknown config key(s): " + unknown);
}

std::string ConfigFile::canonical() const {
  std::string out;
  for (const auto& [key, value] : entries_) out += key + "=" + value + "\n";
  return out;
}

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::size_t QueryGenConfig::count(QuerySplit split, QueryType type) const {
  if (auto it = count_overrides.find({split, type}); it != count_overrides.end()) return it->second;
  switch (split) {
    case QuerySplit::kTrain: return train_count;
    case QuerySplit::kValid: return valid_count;
    case QuerySplit::kTest: return test_count;
  }
  return 0;
}

std::vector<QueryType> parse_type_list(std::string_view text, const std::string& key) {
  std::vector<QueryType> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find(',', start), text.size());
    const auto name = trim(text.substr(start, end - start));
    start = end + 1;
    if (name.empty()) continue;
    try {
      out.push_back(parse_query_type(name));
    } catch (const ConfigError&) {
      throw ConfigError("config key '" + key + "': unknown query type '" + std::string(name) + "'");
    }
  }
  if (out.empty()) throw ConfigError("config key '" + key + "': empty query type list");
  return out;
}

namespace {

void read_train(const ConfigFile& f, const std::string& p, const nn::AdamWConfig& optim, TrainConfig& t) {
  t.epochs = f.get_size(p + ".epochs", t.epochs);
  t.batch_size = f.get_size(p + ".batch_size", t.batch_size);
  t.steps_per_epoch = f.get_size(p + ".steps_per_epoch", t.steps_per_epoch);
  t.label_smoothing = f.get_double(p + ".label_smoothing", t.label_smoothing);
  t.optimizer = optim;
  t.optimizer.lr = f.get_double(p + ".lr", optim.lr);
}

}  // namespace

PipelineConfig pipeline_config(const ConfigFile& f) {
  PipelineConfig c;
  const auto seed = f.get_optional("seed");
  if (!seed) throw ConfigError("config key 'seed' is mandatory");
  c.seed = f.get_u64("seed", 0);
  c.threads = f.get_size("threads", 1);
  if (c.threads == 0) throw ConfigError("config key 'threads' must be positive");
  c.data_dir = f.get_string("data.dir", "");
  const auto layout = f.get_string("data.layout", "cumulative");
  if (layout == "cumulative")
    c.layout = SplitLayout::kCumulative;
  else if (layout == "disjoint")
    c.layout = SplitLayout::kDisjoint;
  else
    throw ConfigError("config key 'data.layout': expected cumulative or disjoint, got '" + layout + "'");
  c.output_dir = f.get_string("out", c.output_dir.string());

  auto& m = c.model;
  m.layers = f.get_size("model.layers", m.layers);
  m.hidden = f.get_size("model.hidden", m.hidden);
  m.heads = f.get_size("model.heads", m.heads);
  m.experts = f.get_size("model.experts", m.experts);
  m.expert_hidden = f.get_size("model.expert_hidden", m.expert_hidden);
  m.top_k = f.get_size("model.top_k", m.top_k);
  m.dropout = f.get_double("model.dropout", m.dropout);
  m.tie_decoder = f.get_bool("model.tie_decoder", m.tie_decoder);
  m.init_std = f.get_double("model.init_std", m.init_std);
  {
    auto probe = m;
    probe.entity_count = probe.relation_count = 1;
    probe.validate();
  }

  nn::AdamWConfig optim;
  optim.lr = f.get_double("optim.lr", optim.lr);
  optim.beta1 = f.get_double("optim.beta1", optim.beta1);
  optim.beta2 = f.get_double("optim.beta2", optim.beta2);
  optim.eps = f.get_double("optim.eps", optim.eps);
  optim.weight_decay = f.get_double("optim.weight_decay", optim.weight_decay);
  optim.lr_decay = f.get_double("optim.lr_decay", optim.lr_decay);

  Stage1Options s1;
  s1.meta_tree_weight = f.get_double("sampler.meta_tree_weight", s1.meta_tree_weight);
  s1.ladies_weight = f.get_double("sampler.ladies_weight", s1.ladies_weight);
  s1.mask_rate = f.get_double("sampler.mask_rate", s1.mask_rate);
  s1.min_nodes = f.get_size("sampler.min_nodes", s1.min_nodes);
  s1.max_nodes = f.get_size("sampler.max_nodes", s1.max_nodes);
  s1.edge_keep = f.get_double("sampler.edge_keep", s1.edge_keep);
  s1.ladies_per_layer = f.get_size("sampler.ladies_per_layer", s1.ladies_per_layer);
  s1.ladies_depth = f.get_size("sampler.ladies_depth", s1.ladies_depth);
  MetaGraphOptions s2;
  s2.chain_ratio = f.get_double("sampler.chain_ratio", s2.chain_ratio);
  if (!(s1.edge_keep > 0.0 && s1.edge_keep <= 1.0))
    throw ConfigError("config key 'sampler.edge_keep' must lie in (0, 1]");
  if (!(s1.meta_tree_weight >= 0.0 && s1.ladies_weight >= 0.0 && s1.meta_tree_weight + s1.ladies_weight > 0.0))
    throw ConfigError("config keys 'sampler.meta_tree_weight' / 'sampler.ladies_weight' must be non-negative, not both 0");

  const double clip = f.get_double("train.clip_norm", 1.0);
  const std::size_t queue = f.get_size("train.queue_capacity", 4);
  for (auto [prefix, t] : {std::pair{"stage1", &c.stage1}, std::pair{"stage2", &c.stage2},
                           std::pair{"finetune", &c.finetune}}) {
    read_train(f, prefix, optim, *t);
    t->seed = c.seed;
    t->threads = c.threads;
    t->clip_norm = clip;
    t->queue_capacity = queue;
    t->stage1 = s1;
    t->stage2 = s2;
    try {
      t->validate();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("section '") + prefix + "': " + e.what());
    }
  }

  auto& q = c.queries;
  if (auto v = f.get_optional("queries.train_types")) q.train_types = parse_type_list(*v, "queries.train_types");
  if (auto v = f.get_optional("queries.eval_types")) q.eval_types = parse_type_list(*v, "queries.eval_types");
  for (auto t : q.train_types)
    if (!is_trainable(t))
      throw ConfigError("config key 'queries.train_types': " + std::string(to_string(t)) + " is evaluation-only");
  q.train_count = f.get_size("queries.train_count", q.train_count);
  q.valid_count = f.get_size("queries.valid_count", q.valid_count);
  q.test_count = f.get_size("queries.test_count", q.test_count);
  q.max_answers = f.get_size("queries.max_answers", q.max_answers);
  q.attempts_per_query = f.get_size("queries.attempts_per_query", q.attempts_per_query);
  q.allow_fewer = f.get_bool("queries.allow_fewer", q.allow_fewer);
  for (auto split : {QuerySplit::kTrain, QuerySplit::kValid, QuerySplit::kTest})
    for (auto type : kAllQueryTypes) {
      const auto key = "queries." + std::string(to_string(split)) + "_count." + std::string(to_string(type));
      if (f.has(key)) q.count_overrides[{split, type}] = f.get_size(key, 0);
    }

  if (auto v = f.get_optional("finetune.combos")) {
    std::string_view text = *v;
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto end = std::min(text.find(';', start), text.size());
      const auto part = trim(text.substr(start, end - start));
      start = end + 1;
      if (part.empty()) continue;
      try {
        c.combos.push_back(parse_combo(part));
      } catch (const ConfigError& e) {
        throw ConfigError(std::string("config key 'finetune.combos': ") + e.what());
      }
    }
  }
  c.interpret_top_k = f.get_size("interpret.top_k", c.interpret_top_k);
  f.reject_unknown();
  return c;
}

}  // namespace kgt
