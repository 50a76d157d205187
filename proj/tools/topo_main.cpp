#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "topo/analysis.hpp"
#include "topo/checkpoint.hpp"
#include "topo/config.hpp"
#include "topo/corpus.hpp"
#include "topo/encoder.hpp"
#include "topo/graph.hpp"
#include "topo/pretrain.hpp"
#include "topo/transfer.hpp"

using nlohmann::json;

namespace {

int env_threads() {
  const char* v = std::getenv("TOPO_THREADS");
  if (v == nullptr) return 1;
  const int n = std::atoi(v);
  return n >= 1 ? n : 1;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  json j;
  in >> j;
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

topo::ExperimentConfig load_experiment(const std::string& path) {
  std::vector<std::string> errors;
  topo::ExperimentConfig cfg = topo::experiment_from_json(read_json_file(path), errors);
  if (!errors.empty()) {
    std::string joined;
    for (size_t i = 0; i < errors.size(); ++i) joined += (i ? "; " : "") + errors[i];
    throw std::runtime_error("config: " + joined);
  }
  return cfg;
}

std::string dataset_stem(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

int cmd_generate(const std::string& dataset, int count, uint64_t seed, const std::string& out) {
  std::vector<topo::Graph> graphs;
  graphs.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    topo::Rng rng(topo::Rng::derive(seed, static_cast<uint64_t>(i)));
    if (dataset == "trees")
      graphs.push_back(topo::generate_tree(rng));
    else if (dataset == "er")
      graphs.push_back(topo::generate_er(rng));
    else if (dataset == "community")
      graphs.push_back(topo::generate_community(rng));
    else
      throw std::runtime_error("unknown dataset: " + dataset + " (want trees, er, or community)");
  }
  topo::save_corpus(graphs, out);
  return 0;
}

int cmd_sample(const std::string& graph_file, int count, int min_nodes, int max_nodes,
               uint64_t seed, const std::string& out) {
  const auto sources = topo::load_corpus(graph_file);
  if (sources.size() != 1)
    throw std::runtime_error("sample: " + graph_file + " holds " +
                             std::to_string(sources.size()) + " graphs, want exactly 1");
  std::vector<topo::Graph> samples;
  samples.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    topo::Rng rng(topo::Rng::derive(seed, static_cast<uint64_t>(i)));
    samples.push_back(topo::explore_sample(sources[0], rng, min_nodes, max_nodes));
  }
  topo::save_corpus(samples, out);
  return 0;
}

int cmd_pretrain(const std::string& config_path, const std::string& out,
                 std::string log_path) {
  const topo::ExperimentConfig cfg = load_experiment(config_path);
  if (cfg.corpus.empty()) throw std::runtime_error("config: corpus: no sources listed");
  std::vector<size_t> counts;
  std::vector<topo::Graph> corpus;
  for (const topo::CorpusSource& s : cfg.corpus) {
    auto part = topo::load_corpus(s.path);
    const size_t take_n =
        s.max_count < 0 ? part.size() : std::min(part.size(), static_cast<size_t>(s.max_count));
    counts.push_back(take_n);
    for (size_t i = 0; i < take_n; ++i) corpus.push_back(std::move(part[i]));
  }

  topo::PretrainResult result =
      cfg.pretrain.method == topo::PretrainMethod::Adgcl
          ? topo::train_adgcl(corpus, cfg.encoder, cfg.pretrain)
          : topo::train_graphcl(corpus, cfg.encoder, cfg.pretrain);

  topo::CheckpointMeta meta;
  meta.pretrain_method = topo::method_name(cfg.pretrain.method);
  meta.corpus_digest = topo::corpus_digest(cfg.corpus, counts);
  meta.seed = cfg.pretrain.seed;
  meta.config_hash = topo::config_hash(topo::experiment_to_json(cfg));
  topo::ViewLearner* view =
      cfg.pretrain.method == topo::PretrainMethod::Adgcl ? &result.view : nullptr;
  topo::save_checkpoint(out, result.model, view, meta);

  if (log_path.empty()) log_path = out + ".log.csv";
  write_text(log_path, "# config_hash=" + meta.config_hash + "\n" + result.log.to_csv());
  std::cout << "checkpoint: " << out << "\nlog: " << log_path << "\n";
  return 0;
}

int cmd_finetune(const std::string& ckpt, const std::string& data_path, const std::string& task,
                 int runs, bool with_features, uint64_t seed, const std::string& config_path,
                 const std::string& dataset_name, const std::string& out) {
  topo::ExperimentConfig cfg;
  if (!config_path.empty()) cfg = load_experiment(config_path);
  cfg.finetune.runs = runs;
  cfg.finetune.seed = seed;
  if (cfg.finetune.threads <= 1) cfg.finetune.threads = env_threads();

  std::optional<topo::LoadedCheckpoint> loaded;
  topo::ModelSource src;
  if (ckpt != "none") {
    loaded = topo::load_checkpoint(ckpt);
    src.pretrained = &loaded->model;
    src.config = loaded->model.config;
    src.checkpoint_id = loaded->meta.checkpoint_id;
  } else {
    src.config = cfg.encoder;
  }

  const auto data = topo::load_corpus(data_path);
  topo::RunResult result;
  if (task == "graph_regression" || task == "graph_binary") {
    const topo::TaskSpec spec = task == "graph_regression"
                                    ? topo::TaskSpec::graph_regression(with_features)
                                    : topo::TaskSpec::graph_binary(with_features);
    result = topo::finetune_graph_task(src, data, spec, cfg.finetune);
  } else if (task == "node_classification" || task == "edge_prediction") {
    if (data.size() != 1)
      throw std::runtime_error(task + ": " + data_path + " holds " +
                               std::to_string(data.size()) + " graphs, want exactly 1");
    result = task == "node_classification"
                 ? topo::node_classification_experiment(src, data[0], cfg.finetune)
                 : topo::edge_prediction_experiment(src, data[0], cfg.finetune);
  } else {
    throw std::runtime_error("unknown task: " + task +
                             " (want graph_regression, graph_binary, node_classification, or "
                             "edge_prediction)");
  }

  result.dataset = dataset_name.empty() ? dataset_stem(data_path) : dataset_name;
  json hashed = topo::experiment_to_json(cfg);
  hashed["task"] = task;
  hashed["with_features"] = with_features;
  hashed["checkpoint"] = src.checkpoint_id;
  result.config_hash = topo::config_hash(hashed);
  write_text(out, topo::run_result_to_json(result).dump(2) + "\n");
  std::cout << out << ": " << result.metric << " " << result.mean << " +/- " << result.stddev
            << "\n";
  return 0;
}

int cmd_probe(const std::string& ckpt, const std::string& data_path, const std::string& task,
              bool with_features, uint64_t seed, const std::string& dataset_name,
              const std::string& out) {
  auto loaded = topo::load_checkpoint(ckpt);
  const auto data = topo::load_corpus(data_path);
  std::vector<double> targets;
  targets.reserve(data.size());
  for (const topo::Graph& g : data) {
    if (!g.target.has_value())
      throw std::runtime_error("probe: corpus graph without a target");
    targets.push_back(*g.target);
  }
  const topo::TaskKind kind = task == "regression" ? topo::TaskKind::Regression
                            : task == "binary"     ? topo::TaskKind::Binary
                                                   : throw std::runtime_error(
                                                         "unknown probe task: " + task);
  const topo::Tensor embeddings = topo::encode_graphs(loaded.model, data, with_features);
  const double score = topo::linear_probe(embeddings, targets, kind, seed);

  json j;
  j["dataset"] = dataset_name.empty() ? dataset_stem(data_path) : dataset_name;
  j["task"] = "probe-" + task;
  j["metric"] = kind == topo::TaskKind::Regression ? "rmse" : "auroc";
  j["score"] = score;
  j["checkpoint_id"] = loaded.meta.checkpoint_id;
  j["config_hash"] = loaded.meta.config_hash;
  write_text(out, j.dump(2) + "\n");
  std::cout << out << ": " << j["metric"].get<std::string>() << " " << score << "\n";
  return 0;
}

int cmd_analyze(const std::string& ckpt, const std::string& data_path, int components,
                bool with_features, bool svg, const std::string& out_dir) {
  auto loaded = topo::load_checkpoint(ckpt);
  const auto data = topo::load_corpus(data_path);
  const topo::Tensor embeddings = topo::encode_graphs(loaded.model, data, with_features);
  const topo::PcaResult p = topo::pca(embeddings, components);
  const topo::Tensor projections = topo::pca_project(p, embeddings);
  std::vector<topo::MetricRecord> metrics;
  metrics.reserve(data.size());
  for (const topo::Graph& g : data) metrics.push_back(topo::graph_metrics(g));
  const topo::CorrelationTable table = topo::r2_correlations(projections, metrics);
  topo::emit_report(p, table, projections, metrics, out_dir, svg);

  json meta;
  meta["checkpoint_id"] = loaded.meta.checkpoint_id;
  meta["config_hash"] = loaded.meta.config_hash;
  meta["components"] = components;
  meta["graphs"] = data.size();
  write_text(out_dir + "/analysis_meta.json", meta.dump(2) + "\n");
  std::cout << "report: " << out_dir << "/correlations.csv\n";
  return 0;
}

int cmd_compare(const std::string& a_path, const std::string& b_path, const std::string& out) {
  const topo::RunResult a = topo::run_result_from_json(read_json_file(a_path));
  const topo::RunResult b = topo::run_result_from_json(read_json_file(b_path));
  const std::string csv = topo::comparison_csv(a, b);
  if (out.empty())
    std::cout << csv;
  else
    write_text(out, csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-domain topology pre-training for graph neural encoders"};
  app.require_subcommand(1);

  // generate
  std::string g_dataset, g_out;
  int g_count = 1000;
  uint64_t g_seed = 0;
  auto* gen = app.add_subcommand("generate", "Write a synthetic graph corpus (JSON Lines)");
  gen->add_option("--dataset", g_dataset, "trees | er | community")->required();
  gen->add_option("--count", g_count, "number of graphs");
  gen->add_option("--seed", g_seed, "master seed");
  gen->add_option("--out", g_out, "output corpus file")->required();

  // sample
  std::string s_graph, s_out;
  int s_count = 1000, s_min = 24, s_max = 96;
  uint64_t s_seed = 0;
  auto* smp = app.add_subcommand("sample", "Cut exploration subgraphs out of one large graph");
  smp->add_option("--graph", s_graph, "corpus file holding one large graph")->required();
  smp->add_option("--count", s_count, "number of samples");
  smp->add_option("--min", s_min, "minimum sample size");
  smp->add_option("--max", s_max, "maximum sample size");
  smp->add_option("--seed", s_seed, "master seed");
  smp->add_option("--out", s_out, "output corpus file")->required();

  // pretrain
  std::string p_config, p_out, p_log;
  auto* pre = app.add_subcommand("pretrain", "Contrastive pre-training from a config file");
  pre->add_option("--config", p_config, "experiment config (JSON)")->required();
  pre->add_option("--out", p_out, "output checkpoint")->required();
  pre->add_option("--log", p_log, "training log CSV (default <out>.log.csv)");

  // finetune
  std::string f_ckpt, f_data, f_task, f_config, f_dataset, f_out;
  int f_runs = 10;
  uint64_t f_seed = 0;
  bool f_features = false;
  auto* fin = app.add_subcommand("finetune", "Fine-tune and evaluate over multiple runs");
  fin->add_option("--ckpt", f_ckpt, "checkpoint path, or 'none' for the fresh baseline")
      ->required();
  fin->add_option("--data", f_data, "dataset corpus")->required();
  fin->add_option("--task", f_task,
                  "graph_regression | graph_binary | node_classification | edge_prediction")
      ->required();
  fin->add_option("--runs", f_runs, "fine-tuning runs");
  fin->add_flag("--with-features", f_features, "use node/edge features via a feature input head");
  fin->add_option("--seed", f_seed, "master seed");
  fin->add_option("--config", f_config, "experiment config for finetune/encoder overrides");
  fin->add_option("--dataset", f_dataset, "dataset name recorded in the result");
  fin->add_option("--out", f_out, "output RunResult JSON")->required();

  // probe
  std::string pr_ckpt, pr_data, pr_task = "regression", pr_dataset, pr_out;
  uint64_t pr_seed = 0;
  bool pr_features = false;
  auto* prb = app.add_subcommand("probe", "Linear probe on frozen encoder embeddings");
  prb->add_option("--ckpt", pr_ckpt, "checkpoint path")->required();
  prb->add_option("--data", pr_data, "dataset corpus with targets")->required();
  prb->add_option("--task", pr_task, "regression | binary");
  prb->add_flag("--with-features", pr_features, "encode with features");
  prb->add_option("--seed", pr_seed, "split seed");
  prb->add_option("--dataset", pr_dataset, "dataset name recorded in the result");
  prb->add_option("--out", pr_out, "output JSON")->required();

  // analyze
  std::string a_ckpt, a_data, a_out;
  int a_components = 5;
  bool a_svg = false, a_features = false;
  auto* ana = app.add_subcommand("analyze", "PCA of embeddings vs graph metrics");
  ana->add_option("--ckpt", a_ckpt, "checkpoint path")->required();
  ana->add_option("--data", a_data, "dataset corpus")->required();
  ana->add_option("--components", a_components, "principal components to keep");
  ana->add_flag("--with-features", a_features, "encode with features");
  ana->add_flag("--svg", a_svg, "emit scatter SVGs");
  ana->add_option("--out", a_out, "output directory")->required();

  // compare
  std::string c_a, c_b, c_out;
  auto* cmp = app.add_subcommand("compare", "Welch-test two RunResult files (a = baseline)");
  cmp->add_option("--a", c_a, "baseline RunResult JSON")->required();
  cmp->add_option("--b", c_b, "model RunResult JSON")->required();
  cmp->add_option("--out", c_out, "output CSV (stdout when omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(g_dataset, g_count, g_seed, g_out);
    if (smp->parsed()) return cmd_sample(s_graph, s_count, s_min, s_max, s_seed, s_out);
    if (pre->parsed()) return cmd_pretrain(p_config, p_out, p_log);
    if (fin->parsed())
      return cmd_finetune(f_ckpt, f_data, f_task, f_runs, f_features, f_seed, f_config, f_dataset,
                          f_out);
    if (prb->parsed())
      return cmd_probe(pr_ckpt, pr_data, pr_task, pr_features, pr_seed, pr_dataset, pr_out);
    if (ana->parsed())
      return cmd_analyze(a_ckpt, a_data, a_components, a_features, a_svg, a_out);
    if (cmp->parsed()) return cmd_compare(c_a, c_b, c_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
