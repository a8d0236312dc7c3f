/**
 *  Copyright (c) 2026 by Contributors
 * @file kgt_py.cc
 * @brief Python bindings: command entry point, graph and query helpers,
 *        ranking metrics and checkpoint scoring.
 */
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "kgt/checkpoint.hpp"
#include "kgt/cli.hpp"
#include "kgt/error.hpp"
#include "kgt/evaluation.hpp"
#include "kgt/pipeline.hpp"
#include "kgt/tensor.hpp"

namespace py = pybind11;
using namespace kgt;

namespace {

std::vector<Triple> to_triples(const std::vector<std::tuple<EntityId, RelationId, EntityId>>& in) {
  std::vector<Triple> out;
  out.reserve(in.size());
  for (const auto& [h, r, t] : in) out.push_back({h, r, t});
  return out;
}

QueryGraph query_from(const std::string& type, std::vector<EntityId> anchors, std::vector<RelationId> relations) {
  return build_query(parse_query_type(type), std::move(anchors), std::move(relations));
}

py::dict config_dict(const ModelConfig& c) {
  py::dict d;
  d["entity_count"] = c.entity_count;
  d["relation_count"] = c.relation_count;
  d["layers"] = c.layers;
  d["hidden"] = c.hidden;
  d["heads"] = c.heads;
  d["experts"] = c.experts;
  d["expert_hidden"] = c.expert_width();
  d["top_k"] = c.top_k;
  d["dropout"] = c.dropout;
  d["tie_decoder"] = c.tie_decoder;
  return d;
}

class Model {
 public:
  explicit Model(const std::filesystem::path& path) : params_(load_checkpoint(path)) {}

  py::dict config() const { return config_dict(params_.config); }

  /// One score row per conjunctive branch.
  std::vector<std::vector<double>> branch_scores(const std::string& type, std::vector<EntityId> anchors,
                                                 std::vector<RelationId> relations) const {
    py::gil_scoped_release release;
    return score_query(params_, query_from(type, std::move(anchors), std::move(relations)));
  }

  /// Scores for conjunctive queries; negated combined ranks for unions.
  std::vector<double> scores(const std::string& type, std::vector<EntityId> anchors,
                             std::vector<RelationId> relations) const {
    const auto b = branch_scores(type, std::move(anchors), std::move(relations));
    return b.size() == 1 ? b.front() : ranks_as_scores(union_combine(b));
  }

  std::vector<std::pair<EntityId, double>> top(const std::string& type, std::vector<EntityId> anchors,
                                               std::vector<RelationId> relations, std::size_t k) const {
    const auto s = scores(type, std::move(anchors), std::move(relations));
    std::vector<EntityId> order(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) order[i] = static_cast<EntityId>(i);
    k = std::min(k, s.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](EntityId a, EntityId b) { return s[a] > s[b] || (s[a] == s[b] && a < b); });
    std::vector<std::pair<EntityId, double>> out;
    for (std::size_t i = 0; i < k; ++i) out.emplace_back(order[i], s[order[i]]);
    return out;
  }

 private:
  ModelParameters<float> params_;
};

}  // namespace

PYBIND11_MODULE(_kgt, m) {
  m.doc() = "Levi-graph Transformer reasoner over knowledge graphs";
  m.attr("__version__") = kVersion;

  auto base = py::register_exception<Error>(m, "KgtError");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<MissingArtifactError>(m, "MissingArtifactError", base.ptr());
  py::register_exception<IntegrityError>(m, "IntegrityError", base.ptr());
  py::register_exception<ArityError>(m, "ArityError", base.ptr());

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one `kgt` command; returns (exit_code, stdout, stderr).");

  m.def(
      "levi_counts",
      [](const std::vector<std::tuple<EntityId, RelationId, EntityId>>& triples) {
        const auto levi = triple_transform(std::span<const Triple>(to_triples(triples)));
        return py::make_tuple(levi.node_count(), levi.edge_count());
      },
      py::arg("triples"), "(node_count, edge_count) of the Levi graph of a triple list.");

  m.def(
      "ground_answers",
      [](std::size_t entities, std::size_t relations,
         const std::vector<std::tuple<EntityId, RelationId, EntityId>>& triples, const std::string& type,
         std::vector<EntityId> anchors, std::vector<RelationId> rels) {
        const KnowledgeGraph g(entities, relations, to_triples(triples));
        return ground_answers(g, build_query(parse_query_type(type), std::move(anchors), std::move(rels), entities,
                                             relations));
      },
      py::arg("entities"), py::arg("relations"), py::arg("triples"), py::arg("type"), py::arg("anchors"),
      py::arg("relation_ids"), "Exact answer set of a query on a triple list, ascending.");

  m.def(
      "query_types", [] {
        std::vector<std::string> out;
        for (auto t : kAllQueryTypes) out.emplace_back(to_string(t));
        return out;
      },
      "Every supported query type name.");

  m.def(
      "filtered_rank",
      [](const std::vector<double>& scores, EntityId answer, const std::vector<EntityId>& filter_out) {
        return filtered_rank(scores, answer, filter_out);
      },
      py::arg("scores"), py::arg("answer"), py::arg("filter_out") = std::vector<EntityId>{});
  m.def("union_combine", &union_combine, py::arg("branches"), "Per-entity minimum of branch ranks.");
  m.def("hits_at_k_m", &hits_at_k_m, py::arg("ranks"), py::arg("k"));
  m.def("mrr_m", &mrr_m, py::arg("ranks"));
  m.def(
      "smoothed_targets",
      [](std::uint32_t target, double alpha, std::size_t classes) {
        return nn::smoothed_targets<double>(target, alpha, classes);
      },
      py::arg("target"), py::arg("alpha"), py::arg("classes"));

  py::class_<Model>(m, "Model")
      .def(py::init<const std::filesystem::path&>(), py::arg("checkpoint"))
      .def_property_readonly("config", &Model::config)
      .def("branch_scores", &Model::branch_scores, py::arg("type"), py::arg("anchors"), py::arg("relation_ids"))
      .def("scores", &Model::scores, py::arg("type"), py::arg("anchors"), py::arg("relation_ids"))
      .def("top", &Model::top, py::arg("type"), py::arg("anchors"), py::arg("relation_ids"), py::arg("k") = 10);
}
