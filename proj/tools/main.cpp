// deglink command-line front end.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>

#include "deglink/features.hpp"
#include "deglink/graph.hpp"
#include "deglink/log.hpp"
#include "deglink/pipeline.hpp"

namespace fs = std::filesystem;
using namespace deglink;

namespace {

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path);
}

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
  } else {
    write_file(out_path, text);
  }
}

struct FeaturesArgs {
  std::string edges;
  std::string out;
  Node2VecOptions opts;
};

struct SynthArgs {
  SyntheticOptions opts;
  std::string out_dir;
};

int run_features(const FeaturesArgs& a) {
  const Graph g = load_edge_list_file(a.edges);
  const Matrix x = node2vec_features(g, a.opts);
  emit(a.out, write_features(x));
  info("wrote " + shape_string(x) + " features");
  return 0;
}

int run_train(const std::string& config_path, const std::string& out) {
  const RunConfig config = RunConfig::load(config_path);
  const RunInputs inputs = load_inputs(config);
  const AnchorSplit split = split_for(config, inputs);
  info(std::to_string(split.train.size()) + " training anchors, " +
       std::to_string(split.test.size()) + " test anchors");
  const TrainedModel model = train(config, inputs, split.train);
  model.save(out);
  std::cerr << "trained " << config.epochs << " epochs, kept epoch " << model.trace.best_epoch
            << ", checkpoint " << out << '\n';
  return 0;
}

int run_eval(const std::string& ckpt, const std::string& out) {
  TrainedModel model = TrainedModel::load(ckpt);
  const RunConfig& config = model.config;
  const RunInputs inputs = prepare_inputs(
      config, load_edge_list_file(config.source_edges), load_edge_list_file(config.target_edges),
      load_anchor_list_file(config.anchors), model.source_features, model.target_features);
  const AnchorSplit split = split_for(config, inputs);
  const MetricsReport report = evaluate(model, inputs, split.train, split.test);
  emit(out, report.to_json().dump(2) + "\n");
  return 0;
}

int run_ablate(const std::string& config_path, const std::string& out) {
  const RunConfig config = RunConfig::load(config_path);
  const RunInputs inputs = load_inputs(config);
  const AblationResult result = ablate(config, inputs);
  std::cout << result.table();
  if (!out.empty()) write_file(out, result.to_json().dump(2) + "\n");
  return 0;
}

int run_synth(const SynthArgs& a) {
  const SyntheticPair pair = generate_synthetic_pair(a.opts);
  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  write_file((dir / "source.edges").string(), write_edge_list(pair.source));
  write_file((dir / "target.edges").string(), write_edge_list(pair.target));
  write_file((dir / "anchors.txt").string(), write_anchor_list(pair.anchors));
  RunConfig config;
  config.source_edges = "source.edges";
  config.target_edges = "target.edges";
  config.anchors = "anchors.txt";
  write_file((dir / "config.json").string(), config.to_json().dump(2) + "\n");
  std::cerr << "synthetic pair: " << pair.source.num_edges() << " and " << pair.target.num_edges()
            << " edges, " << pair.anchors.size() << " anchors\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Degree-aware cross-network user identity linkage"};
  app.require_subcommand(1);
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Progress messages on stderr");
  app.add_flag("-q,--quiet", quiet, "Suppress warnings");

  FeaturesArgs fa;
  auto* features = app.add_subcommand("features", "Compute node2vec features for an edge list");
  features->add_option("edges", fa.edges, "Edge-list file")->required()->check(CLI::ExistingFile);
  features->add_option("--dim", fa.opts.dim, "Feature dimension")->capture_default_str();
  features->add_option("--out", fa.out, "Output path (stdout when omitted)");
  features->add_option("--walk-length", fa.opts.walk_length)->capture_default_str();
  features->add_option("--walks-per-node", fa.opts.walks_per_node)->capture_default_str();
  features->add_option("--window", fa.opts.window)->capture_default_str();
  features->add_option("--p", fa.opts.return_param, "Return parameter")->capture_default_str();
  features->add_option("--q", fa.opts.inout_param, "In-out parameter")->capture_default_str();
  features->add_option("--epochs", fa.opts.epochs)->capture_default_str();
  features->add_option("--seed", fa.opts.seed)->capture_default_str();

  std::string train_config;
  std::string train_out;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  train_cmd->add_option("--config", train_config, "JSON run configuration")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_out, "Checkpoint path")->required();

  std::string eval_ckpt;
  std::string eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on its test anchors");
  eval_cmd->add_option("--ckpt", eval_ckpt, "Checkpoint path")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", eval_out, "Report path (stdout when omitted)");

  std::string ablate_config;
  std::string ablate_out;
  auto* ablate_cmd = app.add_subcommand("ablate", "Compare full, no_AP and no_NR variants");
  ablate_cmd->add_option("--config", ablate_config, "JSON run configuration")
      ->required()
      ->check(CLI::ExistingFile);
  ablate_cmd->add_option("--out", ablate_out, "Also write per-variant reports as JSON");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic graph pair with anchors");
  synth->add_option("--n", sa.opts.n, "Nodes per graph")->capture_default_str();
  synth->add_option("--exponent", sa.opts.exponent, "Power-law exponent")->capture_default_str();
  synth->add_option("--noise", sa.opts.noise, "Noise edges as a fraction of |E1|")
      ->capture_default_str();
  synth->add_option("--overlap", sa.opts.anchor_overlap, "Fraction of nodes that are anchors")
      ->capture_default_str();
  synth->add_option("--dropout", sa.opts.dropout, "Edge dropout for graph 2")->capture_default_str();
  synth->add_option("--min-degree", sa.opts.min_degree)->capture_default_str();
  synth->add_option("--max-degree", sa.opts.max_degree, "0 for the natural cutoff")
      ->capture_default_str();
  synth->add_option("--seed", sa.opts.seed)->capture_default_str();
  synth->add_option("--out-dir", sa.out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  set_verbose(verbose);
  set_warnings_enabled(!quiet);

  try {
    if (*features) return run_features(fa);
    if (*train_cmd) return run_train(train_config, train_out);
    if (*eval_cmd) return run_eval(eval_ckpt, eval_out);
    if (*ablate_cmd) return run_ablate(ablate_config, ablate_out);
    if (*synth) return run_synth(sa);
  } catch (const std::exception& e) {
    std::cerr << "deglink: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
