#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "topo/encoder.hpp"
#include "topo/graph.hpp"

namespace topo {

enum class TaskLevel { GraphLevel, NodeLevel, EdgeLevel };
enum class TaskKind { Regression, Binary, Multiclass };
enum class MetricKind { Rmse, Auroc, Accuracy };

/// Task descriptor. The factories enforce the metric pairing: regression
/// reports RMSE, graph-level binary reports AUROC, node/edge report accuracy.
struct TaskSpec {
  TaskLevel level = TaskLevel::GraphLevel;
  TaskKind kind = TaskKind::Regression;
  MetricKind metric = MetricKind::Rmse;
  bool with_features = false;
  int num_classes = 0;

  static TaskSpec graph_regression(bool with_features = false);
  static TaskSpec graph_binary(bool with_features = false);
  static TaskSpec node_classification(bool with_features = false);
  static TaskSpec edge_prediction(bool with_features = false);

  bool higher_is_better() const { return metric != MetricKind::Rmse; }
  std::string metric_name() const;
  std::string level_name() const;
  std::string kind_name() const;
};

struct FinetuneConfig {
  int runs = 10;
  int epochs = 25;
  float lr = 0.001f;
  int batch_size = 128;
  double train_fraction = 0.8;
  bool freeze_encoder = false;
  uint64_t seed = 0;
  int threads = 1;  // independent runs may fan out

  std::vector<std::string> validate() const;
};

struct RunResult {
  std::string dataset;
  std::string task;    // "<level>-<kind>"
  std::string metric;
  bool higher_better = false;
  std::vector<double> scores;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
  std::string config_hash;
  std::string checkpoint_id = "none";

  void finalize();  // recompute mean/stddev from scores
};

/// Model provenance for one experiment arm: a loaded checkpoint, or a fresh
/// baseline of the identical architecture.
struct ModelSource {
  const Model* pretrained = nullptr;  // nullptr = fresh baseline
  EncoderConfig config;
  std::string checkpoint_id = "none";
};

double mean_of(const std::vector<double>& xs);
double sample_std(const std::vector<double>& xs);

// ---- metrics -------------------------------------------------------------------

/// Probability that a random positive outranks a random negative; ties count
/// one half (Mann-Whitney). Throws when only one class is present.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);
double rmse(const std::vector<double>& pred, const std::vector<double>& target);
double accuracy(const std::vector<int>& pred, const std::vector<int>& target);

// ---- graph-level fine-tuning -------------------------------------------------------

RunResult finetune_graph_task(const ModelSource& src, const std::vector<Graph>& dataset,
                              const TaskSpec& task, const FinetuneConfig& cfg);

// ---- edge prediction ------------------------------------------------------------

struct EdgeSplit {
  Graph observed;  // source graph minus every held-out positive edge
  std::vector<std::pair<int, int>> train_pos;
  std::vector<std::pair<int, int>> test_pos;
  std::vector<std::pair<int, int>> train_neg;
  std::vector<std::pair<int, int>> test_neg;
};

/// Holds out train/test positive edges (default 5% each) and samples
/// non-edges 1:1 as negatives. The observed graph never contains a held-out
/// positive.
EdgeSplit make_edge_split(const Graph& g, double train_frac, double test_frac, Rng& rng);

RunResult edge_prediction_experiment(const ModelSource& src, const Graph& large_graph,
                                     const FinetuneConfig& cfg, double split_frac = 0.05,
                                     int hops = 2);

// ---- node classification ------------------------------------------------------------

struct NodeSplit {
  std::vector<int> train_nodes;
  std::vector<int> test_nodes;
};

NodeSplit make_node_split(int num_nodes, double train_frac, Rng& rng);

/// Per-node capped ego-network classification. When out_predictions is given
/// it receives, per run, the predicted class of every test node (in
/// test_nodes order) so harness hygiene can be audited.
RunResult node_classification_experiment(const ModelSource& src, const Graph& large_graph,
                                         const FinetuneConfig& cfg, double train_frac = 0.2,
                                         int hops = 3, std::optional<int> fanout_cap = 5,
                                         std::vector<std::vector<int>>* out_predictions = nullptr);

// ---- linear probe and statistics ------------------------------------------------------

/// Closed-form ridge fit (normal equations) of y against x rows plus a bias
/// column; returns d+1 weights, bias last.
std::vector<double> ridge_fit(const Tensor& x, const std::vector<double>& y, double alpha);

/// Linear model on frozen embeddings: closed-form ridge (alpha 1e-3) with
/// RMSE for regression, gradient-descent logistic regression with AUROC for
/// binary; 80/20 split.
double linear_probe(const Tensor& embeddings, const std::vector<double>& targets, TaskKind kind,
                    uint64_t seed);

/// Two-sided Welch t-test p-value with Welch-Satterthwaite degrees of freedom.
double welch_p_value(const std::vector<double>& a, const std::vector<double>& b);

/// Student-t CDF via the regularized incomplete beta function.
double student_t_cdf(double t, double df);

/// Sum of size_i * score_i over loss-oriented scores.
double sweep_heuristic(const std::vector<std::pair<double, double>>& size_and_score);

/// Frozen-encoder graph embeddings (readout, no output head), inference mode.
Tensor encode_graphs(Model& model, const std::vector<Graph>& graphs, bool use_features,
                     int batch_size = 256);

}  // namespace topo
