#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "deglink/features.hpp"
#include "deglink/graph.hpp"
#include "deglink/pipeline.hpp"
#include "deglink/uil.hpp"

namespace py = pybind11;
using namespace deglink;

namespace {

// JSON crosses the boundary as text and is decoded with Python's json module.
py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json from_python(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

RunConfig config_from(const py::object& o, const std::string& base_dir = "") {
  return RunConfig::from_json(from_python(o), base_dir);
}

using PyAnchors = std::vector<std::pair<NodeId, NodeId>>;

std::vector<AnchorLink> anchors_from(const PyAnchors& pairs) {
  std::vector<AnchorLink> out;
  out.reserve(pairs.size());
  for (const auto& [s, t] : pairs) out.push_back({s, t});
  return out;
}

PyAnchors anchors_to(const std::vector<AnchorLink>& anchors) {
  PyAnchors out;
  out.reserve(anchors.size());
  for (const AnchorLink& a : anchors) out.emplace_back(a.source, a.target);
  return out;
}

AnchorSet anchor_set(const PyAnchors& pairs, AnchorRole role) { return {anchors_from(pairs), role}; }

py::dict trace_to(const TrainingTrace& t) {
  py::dict d;
  d["loss"] = t.loss;
  d["train_mrr"] = t.train_mrr;
  d["checked_epochs"] = t.checked_epochs;
  d["best_epoch"] = t.best_epoch;
  d["epoch_seconds"] = t.epoch_seconds;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Degree-aware cross-network user identity linkage";

  py::class_<Graph>(m, "Graph")
      .def(py::init([](std::size_t n, const std::vector<std::pair<NodeId, NodeId>>& edges) {
             std::vector<Edge> e;
             e.reserve(edges.size());
             for (const auto& [u, v] : edges) e.push_back({u, v});
             return Graph::from_edges(n, e);
           }),
           py::arg("num_nodes"), py::arg("edges"))
      .def_static("parse", [](const std::string& text) { return load_edge_list(text); })
      .def_static("load", [](const std::string& path) { return load_edge_list_file(path); })
      .def("to_edge_list", [](const Graph& g) { return write_edge_list(g); })
      .def_property_readonly("num_nodes", &Graph::num_nodes)
      .def_property_readonly("num_edges", &Graph::num_edges)
      .def("degree", &Graph::degree)
      .def("degrees", &Graph::degrees)
      .def("neighbors", [](const Graph& g, NodeId i) {
        if (i >= g.num_nodes()) throw py::index_error("node id out of range");
        const auto nb = g.neighbors(i);
        return std::vector<NodeId>(nb.begin(), nb.end());
      })
      .def("has_edge", &Graph::has_edge)
      .def("edges", [](const Graph& g) {
        std::vector<std::pair<NodeId, NodeId>> out;
        for (const Edge& e : g.edges()) out.emplace_back(e.source, e.target);
        return out;
      })
      .def("__eq__", [](const Graph& a, const Graph& b) { return a == b; })
      .def("__repr__", [](const Graph& g) {
        return "<Graph nodes=" + std::to_string(g.num_nodes()) +
               " edges=" + std::to_string(g.num_edges()) + ">";
      });

  m.def(
      "partition",
      [](const Graph& g, std::size_t tail_threshold, double super_fraction,
         std::optional<std::size_t> super_threshold) {
        const DegreePartition p = super_threshold
                                      ? partition_with_threshold(g, tail_threshold, *super_threshold)
                                      : partition_by_degree(g, tail_threshold, super_fraction);
        std::vector<std::string> classes;
        for (DegreeClass c : p.class_of) classes.emplace_back(to_string(c));
        py::dict d;
        d["tail_threshold"] = p.tail_threshold;
        d["super_threshold"] = p.super_threshold;
        d["classes"] = classes;
        return d;
      },
      py::arg("graph"), py::arg("tail_threshold") = 5, py::arg("super_fraction") = 0.10,
      py::arg("super_threshold") = py::none(),
      "Tail / head / super-head label for every node.");

  m.def(
      "node2vec",
      [](const Graph& g, Index dim, std::size_t walk_length, std::size_t walks_per_node,
         std::size_t window, double p, double q, std::size_t epochs, std::uint64_t seed) {
        Node2VecOptions o;
        o.dim = dim;
        o.walk_length = walk_length;
        o.walks_per_node = walks_per_node;
        o.window = window;
        o.return_param = p;
        o.inout_param = q;
        o.epochs = epochs;
        o.seed = seed;
        py::gil_scoped_release release;
        return node2vec_features(g, o);
      },
      py::arg("graph"), py::arg("dim") = 256, py::arg("walk_length") = 80,
      py::arg("walks_per_node") = 10, py::arg("window") = 10, py::arg("p") = 1.0,
      py::arg("q") = 1.0, py::arg("epochs") = 5, py::arg("seed") = 1);

  m.def(
      "synthetic_pair",
      [](std::size_t n, double exponent, double noise, double overlap, double dropout,
         std::size_t min_degree, std::size_t max_degree, std::uint64_t seed) {
        SyntheticOptions o;
        o.n = n;
        o.exponent = exponent;
        o.noise = noise;
        o.anchor_overlap = overlap;
        o.dropout = dropout;
        o.min_degree = min_degree;
        o.max_degree = max_degree;
        o.seed = seed;
        SyntheticPair p = generate_synthetic_pair(o);
        return py::make_tuple(std::move(p.source), std::move(p.target), anchors_to(p.anchors));
      },
      py::arg("n") = 1000, py::arg("exponent") = 2.5, py::arg("noise") = 0.1,
      py::arg("overlap") = 1.0, py::arg("dropout") = 0.2, py::arg("min_degree") = 3,
      py::arg("max_degree") = 0, py::arg("seed") = 0,
      "Power-law graph, a perturbed relabeled copy, and the anchor pairs.");

  m.def("hits_at_k", [](const std::vector<std::size_t>& ranks, std::size_t k) {
    return hits_at_k(ranks, k);
  });
  m.def("mrr", [](const std::vector<std::size_t>& ranks) { return mean_reciprocal_rank(ranks); });
  m.def(
      "rank_candidates",
      [](const std::vector<double>& query, const Matrix& targets, const std::vector<NodeId>& exclude) {
        std::vector<bool> excluded(static_cast<std::size_t>(targets.rows()), false);
        for (NodeId j : exclude) {
          if (j < excluded.size()) excluded[j] = true;
        }
        return rank_candidates(query, targets, excluded);
      },
      py::arg("query"), py::arg("targets"), py::arg("exclude") = std::vector<NodeId>{});

  m.def(
      "normalize_config", [](const py::object& cfg) { return to_python(config_from(cfg).to_json()); },
      "Validates a config dict and fills in defaults.");
  m.def("load_config", [](const std::string& path) { return to_python(RunConfig::load(path).to_json()); });

  py::class_<RunInputs>(m, "Inputs")
      .def_readonly("source", &RunInputs::source)
      .def_readonly("target", &RunInputs::target)
      .def_property_readonly("anchors", [](const RunInputs& in) { return anchors_to(in.anchors); })
      .def_readonly("source_features", &RunInputs::source_features)
      .def_readonly("target_features", &RunInputs::target_features)
      .def(
          "split",
          [](const RunInputs& in, const py::object& cfg) {
            const AnchorSplit s = split_for(config_from(cfg), in);
            return py::make_tuple(anchors_to(s.train.pairs), anchors_to(s.test.pairs));
          },
          "Train and test anchors for the config's split mode and seed.");

  m.def(
      "prepare_inputs",
      [](const py::object& cfg, const Graph& source, const Graph& target, const PyAnchors& anchors,
         std::optional<Matrix> source_features, std::optional<Matrix> target_features) {
        const RunConfig c = config_from(cfg);
        py::gil_scoped_release release;
        return prepare_inputs(c, source, target, anchors_from(anchors), std::move(source_features),
                              std::move(target_features));
      },
      py::arg("config"), py::arg("source"), py::arg("target"), py::arg("anchors"),
      py::arg("source_features") = py::none(), py::arg("target_features") = py::none());
  m.def(
      "load_inputs",
      [](const std::string& config_path) { return load_inputs(RunConfig::load(config_path)); },
      "Reads the graphs, anchors and features named in a config file.");

  py::class_<TrainedModel>(m, "Model")
      .def_static("load", &TrainedModel::load)
      .def("save", &TrainedModel::save)
      .def_property_readonly("config", [](const TrainedModel& t) { return to_python(t.config.to_json()); })
      .def_property_readonly("trace", [](const TrainedModel& t) { return trace_to(t.trace); })
      .def("parameters", [](TrainedModel& t) {
        py::dict d;
        for (nn::Parameter* p : t.parameters()) d[py::str(p->name)] = p->value;
        return d;
      })
      .def("embed", [](TrainedModel& t, const RunInputs& in) {
        MappedEmbeddings e = embed(t, in);
        return py::make_tuple(std::move(e.source), std::move(e.target));
      });

  m.def("train", [](const py::object& cfg, const RunInputs& in, const PyAnchors& train) {
    const RunConfig c = config_from(cfg);
    const AnchorSet a = anchor_set(train, AnchorRole::Train);
    py::gil_scoped_release release;
    return deglink::train(c, in, a);
  });
  m.def("evaluate",
        [](TrainedModel& model, const RunInputs& in, const PyAnchors& train, const PyAnchors& test) {
          return to_python(evaluate(model, in, anchor_set(train, AnchorRole::Train),
                                    anchor_set(test, AnchorRole::Test))
                               .to_json());
        });
  m.def(
      "run_experiment",
      [](const py::object& cfg, const RunInputs& in) {
        const RunConfig c = config_from(cfg);
        RunResult r = [&] {
          py::gil_scoped_release release;
          return run_experiment(c, in);
        }();
        return py::make_tuple(std::move(r.model), to_python(r.report.to_json()));
      },
      "Split, train and evaluate; returns (model, report).");
  m.def("ablate", [](const py::object& cfg, const RunInputs& in) {
    const RunConfig c = config_from(cfg);
    AblationResult r = [&] {
      py::gil_scoped_release release;
      return ablate(c, in);
    }();
    return to_python(r.to_json());
  });
}
