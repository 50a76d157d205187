#include "topo/transfer.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "topo/nn.hpp"

namespace topo {

// ---- task specs -----------------------------------------------------------

TaskSpec TaskSpec::graph_regression(bool with_features) {
  return TaskSpec{TaskLevel::GraphLevel, TaskKind::Regression, MetricKind::Rmse, with_features, 0};
}

TaskSpec TaskSpec::graph_binary(bool with_features) {
  return TaskSpec{TaskLevel::GraphLevel, TaskKind::Binary, MetricKind::Auroc, with_features, 0};
}

TaskSpec TaskSpec::node_classification(bool with_features) {
  return TaskSpec{TaskLevel::NodeLevel, TaskKind::Multiclass, MetricKind::Accuracy, with_features, 0};
}

TaskSpec TaskSpec::edge_prediction(bool with_features) {
  return TaskSpec{TaskLevel::EdgeLevel, TaskKind::Binary, MetricKind::Accuracy, with_features, 0};
}

std::string TaskSpec::metric_name() const {
  switch (metric) {
    case MetricKind::Rmse: return "rmse";
    case MetricKind::Auroc: return "auroc";
    case MetricKind::Accuracy: return "accuracy";
  }
  return "?";
}

std::string TaskSpec::level_name() const {
  switch (level) {
    case TaskLevel::GraphLevel: return "graph";
    case TaskLevel::NodeLevel: return "node";
    case TaskLevel::EdgeLevel: return "edge";
  }
  return "?";
}

std::string TaskSpec::kind_name() const {
  switch (kind) {
    case TaskKind::Regression: return "regression";
    case TaskKind::Binary: return "binary";
    case TaskKind::Multiclass: return "multiclass";
  }
  return "?";
}

std::vector<std::string> FinetuneConfig::validate() const {
  std::vector<std::string> bad;
  if (runs < 1) bad.push_back("runs must be >= 1");
  if (epochs < 1) bad.push_back("epochs must be >= 1");
  if (!(lr > 0.0f)) bad.push_back("lr must be > 0");
  if (batch_size < 1) bad.push_back("batch_size must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    bad.push_back("train_fraction must be in (0, 1)");
  if (threads < 1) bad.push_back("threads must be >= 1");
  return bad;
}

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

void RunResult::finalize() {
  mean = mean_of(scores);
  stddev = sample_std(scores);
}

// ---- metrics ------------------------------------------------------------------

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw std::invalid_argument("auroc: need equal-length nonempty scores and labels");
  long long npos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("auroc: labels must be 0/1");
    npos += y;
  }
  const long long nneg = static_cast<long long>(labels.size()) - npos;
  if (npos == 0 || nneg == 0)
    throw std::invalid_argument("auroc: undefined with a single class present");

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t i, size_t j) { return scores[i] < scores[j]; });

  // Rank sum of positives with average ranks over ties.
  double rank_sum = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) rank_sum += avg_rank;
    i = j + 1;
  }
  const double u = rank_sum - static_cast<double>(npos) * (static_cast<double>(npos) + 1.0) / 2.0;
  return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

double rmse(const std::vector<double>& pred, const std::vector<double>& target) {
  if (pred.size() != target.size() || pred.empty())
    throw std::invalid_argument("rmse: need equal-length nonempty inputs");
  double acc = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) acc += (pred[i] - target[i]) * (pred[i] - target[i]);
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& target) {
  if (pred.size() != target.size() || pred.empty())
    throw std::invalid_argument("accuracy: need equal-length nonempty inputs");
  long long hits = 0;
  for (size_t i = 0; i < pred.size(); ++i) hits += pred[i] == target[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

// ---- shared harness pieces ------------------------------------------------------

namespace {

Model instantiate(const ModelSource& src, uint64_t fresh_seed) {
  if (src.pretrained != nullptr) return src.pretrained->clone();
  return build_model(src.config, InputKind::ConstantEmbedding, fresh_seed);
}

std::vector<ParamRef> trainable_params(Model& m, bool freeze_encoder) {
  if (!freeze_encoder) return m.params();
  std::vector<ParamRef> out;
  m.input_head.collect(out);
  m.output_head.collect(out);
  return out;
}

std::vector<Tensor*> tensors_of(const std::vector<ParamRef>& params) {
  std::vector<Tensor*> ts;
  ts.reserve(params.size());
  for (const ParamRef& p : params) ts.push_back(p.tensor);
  return ts;
}

std::vector<Tensor> grads_of(Tape& tape, const std::vector<ParamRef>& params) {
  std::vector<Tensor> gs;
  gs.reserve(params.size());
  for (const ParamRef& p : params) gs.push_back(tape.grad_or_zeros(*p.tensor));
  return gs;
}

std::vector<size_t> shuffled_indices(size_t n, Rng& rng) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (size_t i = 0; i + 1 < n; ++i) {
    const size_t j = i + static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(n - i - 1)));
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

// Topology + target, features and labels stripped.
Graph strip_features_keep_target(const Graph& g) {
  Graph t;
  t.n = g.n;
  t.edges = g.edges;
  t.target = g.target;
  t.domain = g.domain;
  return t;
}

// Runs `run` for indices [0, runs), optionally across threads; results land
// by index so execution order cannot change the aggregate.
std::vector<double> parallel_runs(int runs, int threads,
                                  const std::function<double(int)>& run) {
  std::vector<double> scores(static_cast<size_t>(runs), 0.0);
  if (threads <= 1 || runs <= 1) {
    for (int r = 0; r < runs; ++r) scores[static_cast<size_t>(r)] = run(r);
    return scores;
  }
  std::vector<std::exception_ptr> errors(static_cast<size_t>(runs));
  std::atomic<int> next{0};
  auto worker = [&]() {
    while (true) {
      const int r = next.fetch_add(1);
      if (r >= runs) return;
      try {
        scores[static_cast<size_t>(r)] = run(r);
      } catch (...) {
        errors[static_cast<size_t>(r)] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const int n = std::min(threads, runs);
  pool.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return scores;
}

}  // namespace

// ---- graph-level fine-tuning --------------------------------------------------------

RunResult finetune_graph_task(const ModelSource& src, const std::vector<Graph>& dataset,
                              const TaskSpec& task, const FinetuneConfig& cfg) {
  if (task.level != TaskLevel::GraphLevel)
    throw std::invalid_argument("finetune_graph_task: task is not graph-level");
  if (task.kind == TaskKind::Multiclass)
    throw std::invalid_argument("finetune_graph_task: graph tasks are regression or binary");
  if (dataset.size() < 2) throw std::invalid_argument("finetune_graph_task: dataset too small");
  for (const auto& bad : cfg.validate())
    throw std::invalid_argument("finetune_graph_task: " + bad);
  for (const Graph& g : dataset) {
    if (!g.target.has_value())
      throw std::invalid_argument("finetune_graph_task: graph without a target");
    if (task.kind == TaskKind::Binary && *g.target != 0.0 && *g.target != 1.0)
      throw std::invalid_argument("finetune_graph_task: binary task with non-0/1 target");
    if (task.with_features && !g.has_node_feats())
      throw std::invalid_argument("finetune_graph_task: with_features set but a graph has none");
  }

  std::vector<Graph> data;
  data.reserve(dataset.size());
  for (const Graph& g : dataset)
    data.push_back(task.with_features ? g : strip_features_keep_target(g));
  const int node_dim = task.with_features ? data.front().node_feat_dim : 0;
  const int edge_dim = task.with_features ? data.front().edge_feat_dim : 0;

  auto one_run = [&](int r) -> double {
    const uint64_t run_seed = Rng::derive(cfg.seed, static_cast<uint64_t>(r));
    Rng split_rng(Rng::derive(run_seed, 11));
    Rng init_rng(Rng::derive(run_seed, 12));
    Rng shuffle_rng(Rng::derive(run_seed, 14));

    const auto idx = shuffled_indices(data.size(), split_rng);
    size_t train_count = static_cast<size_t>(cfg.train_fraction * static_cast<double>(data.size()));
    train_count = std::max<size_t>(1, std::min(train_count, data.size() - 1));
    std::vector<size_t> train_idx(idx.begin(), idx.begin() + static_cast<long>(train_count));
    std::vector<size_t> test_idx(idx.begin() + static_cast<long>(train_count), idx.end());

    Model model = instantiate(src, Rng::derive(run_seed, 13));
    if (task.with_features)
      swap_input_head(model, make_feature_head(model.config, node_dim, edge_dim, init_rng));
    swap_output_head(model, make_task_graph_head(model.config, init_rng));

    auto params = trainable_params(model, cfg.freeze_encoder);
    AdamState opt = AdamState::make(tensors_of(params), cfg.lr);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      const auto order = shuffled_indices(train_idx.size(), shuffle_rng);
      for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size)) {
        const size_t end = std::min(order.size(), at + static_cast<size_t>(cfg.batch_size));
        std::vector<Graph> chunk;
        Tensor targets({static_cast<int>(end - at), 1});
        for (size_t i = at; i < end; ++i) {
          const Graph& g = data[train_idx[order[i]]];
          chunk.push_back(g);
          targets[static_cast<int>(i - at)] = static_cast<float>(*g.target);
        }
        GraphBatch batch = batch_graphs(chunk);

        Tape tape;
        TapeScope scope(tape);
        params = trainable_params(model, cfg.freeze_encoder);
        for (ParamRef& p : params) tape.watch(*p.tensor);
        Tensor pred = forward(model, batch, nullptr, Mode::Training).graph_embeddings;
        Tensor loss = task.kind == TaskKind::Regression ? mse_loss(pred, targets)
                                                        : binary_ce_with_logits(pred, targets);
        tape.backward(loss);
        adam_step(tensors_of(params), grads_of(tape, params), opt);
      }
    }

    std::vector<double> preds;
    std::vector<double> truth;
    std::vector<int> labels;
    for (size_t at = 0; at < test_idx.size(); at += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(test_idx.size(), at + static_cast<size_t>(cfg.batch_size));
      std::vector<Graph> chunk;
      for (size_t i = at; i < end; ++i) chunk.push_back(data[test_idx[i]]);
      GraphBatch batch = batch_graphs(chunk);
      Tensor out = forward(model, batch, nullptr, Mode::Inference).graph_embeddings;
      for (size_t i = at; i < end; ++i) {
        preds.push_back(out[static_cast<int>(i - at)]);
        truth.push_back(*data[test_idx[i]].target);
        labels.push_back(static_cast<int>(*data[test_idx[i]].target));
      }
    }
    return task.kind == TaskKind::Regression ? rmse(preds, truth) : auroc(preds, labels);
  };

  RunResult res;
  res.task = task.level_name() + "-" + task.kind_name();
  res.metric = task.metric_name();
  res.higher_better = task.higher_is_better();
  res.checkpoint_id = src.checkpoint_id;
  res.scores = parallel_runs(cfg.runs, cfg.threads, one_run);
  res.finalize();
  return res;
}

// ---- edge prediction -------------------------------------------------------------------

EdgeSplit make_edge_split(const Graph& g, double train_frac, double test_frac, Rng& rng) {
  const size_t m = g.edges.size();
  const auto n_train = static_cast<size_t>(std::max(1.0, std::floor(train_frac * static_cast<double>(m))));
  const auto n_test = static_cast<size_t>(std::max(1.0, std::floor(test_frac * static_cast<double>(m))));
  if (m < n_train + n_test + 1)
    throw std::invalid_argument("edge split: graph has too few edges (" + std::to_string(m) + ")");

  const auto order = shuffled_indices(m, rng);
  EdgeSplit s;
  std::unordered_set<uint64_t> held;
  auto key = [](int u, int v) {
    return (static_cast<uint64_t>(std::min(u, v)) << 32) | static_cast<uint64_t>(std::max(u, v));
  };
  for (size_t i = 0; i < n_test; ++i) {
    s.test_pos.push_back(g.edges[order[i]]);
    held.insert(key(g.edges[order[i]].first, g.edges[order[i]].second));
  }
  for (size_t i = n_test; i < n_test + n_train; ++i) {
    s.train_pos.push_back(g.edges[order[i]]);
    held.insert(key(g.edges[order[i]].first, g.edges[order[i]].second));
  }

  // Observed topology: everything except held-out positives.
  s.observed.n = g.n;
  s.observed.domain = g.domain;
  s.observed.node_feats = g.node_feats;
  s.observed.node_feat_dim = g.node_feat_dim;
  s.observed.node_labels = g.node_labels;
  if (g.has_edge_feats()) {
    s.observed.edge_feat_dim = g.edge_feat_dim;
    s.observed.edge_feats = std::vector<float>();
  }
  for (size_t e = 0; e < g.edges.size(); ++e) {
    if (held.count(key(g.edges[e].first, g.edges[e].second)) > 0) continue;
    s.observed.edges.push_back(g.edges[e]);
    if (g.has_edge_feats())
      for (int c = 0; c < g.edge_feat_dim; ++c)
        s.observed.edge_feats->push_back(
            (*g.edge_feats)[e * static_cast<size_t>(g.edge_feat_dim) + c]);
  }

  // Uniform non-edges, 1:1 with positives, distinct.
  std::unordered_set<uint64_t> all_edges;
  for (const auto& [u, v] : g.edges) all_edges.insert(key(u, v));
  std::unordered_set<uint64_t> used;
  auto draw_negatives = [&](size_t count, std::vector<std::pair<int, int>>& out) {
    size_t guard = 0;
    while (out.size() < count) {
      if (++guard > 1000000)
        throw std::runtime_error("edge split: could not sample enough non-edges");
      const int u = static_cast<int>(rng.uniform_int(0, g.n - 1));
      const int v = static_cast<int>(rng.uniform_int(0, g.n - 1));
      if (u == v) continue;
      const uint64_t k = key(u, v);
      if (all_edges.count(k) > 0 || used.count(k) > 0) continue;
      used.insert(k);
      out.emplace_back(std::min(u, v), std::max(u, v));
    }
  };
  draw_negatives(s.test_pos.size(), s.test_neg);
  draw_negatives(s.train_pos.size(), s.train_neg);
  return s;
}

namespace {

struct PairSet {
  std::vector<std::pair<int, int>> pairs;
  std::vector<int> labels;
};

PairSet interleave(const std::vector<std::pair<int, int>>& pos,
                   const std::vector<std::pair<int, int>>& neg) {
  PairSet ps;
  for (const auto& p : pos) {
    ps.pairs.push_back(p);
    ps.labels.push_back(1);
  }
  for (const auto& p : neg) {
    ps.pairs.push_back(p);
    ps.labels.push_back(0);
  }
  return ps;
}

// Ego networks for every endpoint mentioned by any pair, keyed by node.
std::unordered_map<int, EgoNet> ego_cache_for(const Graph& base,
                                              const std::vector<const PairSet*>& sets, int hops,
                                              std::optional<int> cap, Rng& rng) {
  std::unordered_map<int, EgoNet> cache;
  for (const PairSet* ps : sets)
    for (const auto& [u, v] : ps->pairs)
      for (int node : {u, v})
        if (cache.find(node) == cache.end())
          cache.emplace(node, ego_network(base, node, hops, cap, rng));
  return cache;
}

// Scores one batch of endpoint pairs through encoder + edge head.
Tensor score_pairs(Model& model, const std::vector<std::pair<int, int>>& pairs,
                   std::unordered_map<int, EgoNet>& cache, Mode mode) {
  std::vector<Graph> egos;
  std::vector<int> centers;
  egos.reserve(pairs.size() * 2);
  for (const auto& [u, v] : pairs) {
    egos.push_back(cache.at(u).graph);
    centers.push_back(cache.at(u).center);
    egos.push_back(cache.at(v).graph);
    centers.push_back(cache.at(v).center);
  }
  GraphBatch batch = batch_graphs(egos);
  Tensor nodes = forward(model, batch, nullptr, mode).node_embeddings;
  std::vector<int> center_u;
  std::vector<int> center_v;
  for (size_t j = 0; j < pairs.size(); ++j) {
    center_u.push_back(batch.node_offset[2 * j] + centers[2 * j]);
    center_v.push_back(batch.node_offset[2 * j + 1] + centers[2 * j + 1]);
  }
  Tensor pair_emb = concat_cols(gather_rows(nodes, center_u), gather_rows(nodes, center_v));
  return apply_output_head(model, pair_emb);  // [B, 1] logits
}

}  // namespace

RunResult edge_prediction_experiment(const ModelSource& src, const Graph& large_graph,
                                     const FinetuneConfig& cfg, double split_frac, int hops) {
  const TaskSpec task = TaskSpec::edge_prediction(large_graph.has_node_feats());
  for (const auto& bad : cfg.validate())
    throw std::invalid_argument("edge_prediction_experiment: " + bad);

  auto one_run = [&](int r) -> double {
    const uint64_t run_seed = Rng::derive(cfg.seed, static_cast<uint64_t>(r));
    Rng split_rng(Rng::derive(run_seed, 21));
    Rng ego_rng(Rng::derive(run_seed, 22));
    Rng init_rng(Rng::derive(run_seed, 12));
    Rng shuffle_rng(Rng::derive(run_seed, 24));

    EdgeSplit split = make_edge_split(large_graph, split_frac, split_frac, split_rng);
    const Graph base = task.with_features ? split.observed
                                          : strip_features_keep_target(split.observed);

    PairSet train = interleave(split.train_pos, split.train_neg);
    PairSet test = interleave(split.test_pos, split.test_neg);
    auto cache = ego_cache_for(base, {&train, &test}, hops, std::nullopt, ego_rng);

    Model model = instantiate(src, Rng::derive(run_seed, 13));
    if (task.with_features)
      swap_input_head(model, make_feature_head(model.config, base.node_feat_dim,
                                               base.edge_feat_dim, init_rng));
    swap_output_head(model, make_task_edge_head(model.config, init_rng));

    auto params = trainable_params(model, cfg.freeze_encoder);
    AdamState opt = AdamState::make(tensors_of(params), cfg.lr);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      const auto order = shuffled_indices(train.pairs.size(), shuffle_rng);
      for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size)) {
        const size_t end = std::min(order.size(), at + static_cast<size_t>(cfg.batch_size));
        std::vector<std::pair<int, int>> chunk;
        Tensor labels({static_cast<int>(end - at), 1});
        for (size_t i = at; i < end; ++i) {
          chunk.push_back(train.pairs[order[i]]);
          labels[static_cast<int>(i - at)] = static_cast<float>(train.labels[order[i]]);
        }
        Tape tape;
        TapeScope scope(tape);
        params = trainable_params(model, cfg.freeze_encoder);
        for (ParamRef& p : params) tape.watch(*p.tensor);
        Tensor logits = score_pairs(model, chunk, cache, Mode::Training);
        Tensor loss = binary_ce_with_logits(logits, labels);
        tape.backward(loss);
        adam_step(tensors_of(params), grads_of(tape, params), opt);
      }
    }

    std::vector<int> pred;
    for (size_t at = 0; at < test.pairs.size(); at += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(test.pairs.size(), at + static_cast<size_t>(cfg.batch_size));
      std::vector<std::pair<int, int>> chunk(test.pairs.begin() + static_cast<long>(at),
                                             test.pairs.begin() + static_cast<long>(end));
      Tensor logits = score_pairs(model, chunk, cache, Mode::Inference);
      for (int i = 0; i < logits.numel(); ++i) pred.push_back(logits[i] > 0.0f ? 1 : 0);
    }
    return accuracy(pred, test.labels);
  };

  RunResult res;
  res.task = task.level_name() + "-" + task.kind_name();
  res.metric = task.metric_name();
  res.higher_better = true;
  res.checkpoint_id = src.checkpoint_id;
  res.scores = parallel_runs(cfg.runs, cfg.threads, one_run);
  res.finalize();
  return res;
}

// ---- node classification ------------------------------------------------------------------

NodeSplit make_node_split(int num_nodes, double train_frac, Rng& rng) {
  if (num_nodes < 2) throw std::invalid_argument("node split: need >= 2 nodes");
  NodeSplit s;
  const auto order = shuffled_indices(static_cast<size_t>(num_nodes), rng);
  size_t train_count = static_cast<size_t>(train_frac * num_nodes);
  train_count = std::max<size_t>(1, std::min(train_count, static_cast<size_t>(num_nodes) - 1));
  for (size_t i = 0; i < order.size(); ++i) {
    if (i < train_count)
      s.train_nodes.push_back(static_cast<int>(order[i]));
    else
      s.test_nodes.push_back(static_cast<int>(order[i]));
  }
  return s;
}

RunResult node_classification_experiment(const ModelSource& src, const Graph& large_graph,
                                         const FinetuneConfig& cfg, double train_frac, int hops,
                                         std::optional<int> fanout_cap,
                                         std::vector<std::vector<int>>* out_predictions) {
  if (!large_graph.node_labels.has_value())
    throw std::invalid_argument("node_classification_experiment: graph has no node labels");
  const std::vector<int>& labels = *large_graph.node_labels;
  int num_classes = 0;
  for (int y : labels) {
    if (y < 0) throw std::invalid_argument("node_classification_experiment: negative label");
    num_classes = std::max(num_classes, y + 1);
  }
  if (num_classes < 2)
    throw std::invalid_argument("node_classification_experiment: need >= 2 classes");
  const TaskSpec task = TaskSpec::node_classification(large_graph.has_node_feats());
  for (const auto& bad : cfg.validate())
    throw std::invalid_argument("node_classification_experiment: " + bad);
  if (out_predictions != nullptr) out_predictions->assign(static_cast<size_t>(cfg.runs), {});

  // Ego extraction sees topology (plus features when used), never the labels.
  Graph base = task.with_features ? large_graph : strip_features_keep_target(large_graph);
  base.node_labels.reset();
  base.target.reset();

  auto one_run = [&](int r) -> double {
    const uint64_t run_seed = Rng::derive(cfg.seed, static_cast<uint64_t>(r));
    Rng split_rng(Rng::derive(run_seed, 31));
    Rng ego_rng(Rng::derive(run_seed, 32));
    Rng init_rng(Rng::derive(run_seed, 12));
    Rng shuffle_rng(Rng::derive(run_seed, 34));

    NodeSplit split = make_node_split(large_graph.n, train_frac, split_rng);

    std::vector<EgoNet> egos;
    egos.reserve(static_cast<size_t>(large_graph.n));
    for (int v = 0; v < large_graph.n; ++v)
      egos.push_back(ego_network(base, v, hops, fanout_cap, ego_rng));

    Model model = instantiate(src, Rng::derive(run_seed, 13));
    if (task.with_features)
      swap_input_head(model, make_feature_head(model.config, base.node_feat_dim,
                                               base.edge_feat_dim, init_rng));
    swap_output_head(model, make_task_node_head(model.config, num_classes, init_rng));

    auto encode_centers = [&](const std::vector<int>& nodes, Mode mode) {
      std::vector<Graph> gs;
      std::vector<int> centers;
      gs.reserve(nodes.size());
      for (int v : nodes) {
        gs.push_back(egos[static_cast<size_t>(v)].graph);
        centers.push_back(egos[static_cast<size_t>(v)].center);
      }
      GraphBatch batch = batch_graphs(gs);
      Tensor ne = forward(model, batch, nullptr, mode).node_embeddings;
      std::vector<int> global;
      for (size_t j = 0; j < nodes.size(); ++j)
        global.push_back(batch.node_offset[j] + centers[j]);
      return apply_output_head(model, gather_rows(ne, global));  // [B, C]
    };

    auto params = trainable_params(model, cfg.freeze_encoder);
    AdamState opt = AdamState::make(tensors_of(params), cfg.lr);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      const auto order = shuffled_indices(split.train_nodes.size(), shuffle_rng);
      for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size)) {
        const size_t end = std::min(order.size(), at + static_cast<size_t>(cfg.batch_size));
        std::vector<int> nodes;
        std::vector<int> ys;
        for (size_t i = at; i < end; ++i) {
          const int v = split.train_nodes[order[i]];
          nodes.push_back(v);
          ys.push_back(labels[static_cast<size_t>(v)]);
        }
        Tape tape;
        TapeScope scope(tape);
        params = trainable_params(model, cfg.freeze_encoder);
        for (ParamRef& p : params) tape.watch(*p.tensor);
        Tensor logits = encode_centers(nodes, Mode::Training);
        Tensor loss = softmax_ce(logits, ys);
        tape.backward(loss);
        adam_step(tensors_of(params), grads_of(tape, params), opt);
      }
    }

    std::vector<int> pred;
    std::vector<int> truth;
    for (size_t at = 0; at < split.test_nodes.size(); at += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(split.test_nodes.size(), at + static_cast<size_t>(cfg.batch_size));
      std::vector<int> nodes(split.test_nodes.begin() + static_cast<long>(at),
                             split.test_nodes.begin() + static_cast<long>(end));
      Tensor logits = encode_centers(nodes, Mode::Inference);
      for (size_t j = 0; j < nodes.size(); ++j) {
        int best = 0;
        for (int c = 1; c < num_classes; ++c)
          if (logits.at(static_cast<int>(j), c) > logits.at(static_cast<int>(j), best)) best = c;
        pred.push_back(best);
        truth.push_back(labels[static_cast<size_t>(nodes[j])]);
      }
    }
    if (out_predictions != nullptr) (*out_predictions)[static_cast<size_t>(r)] = pred;
    return accuracy(pred, truth);
  };

  RunResult res;
  res.task = task.level_name() + "-" + task.kind_name();
  res.metric = task.metric_name();
  res.higher_better = true;
  res.checkpoint_id = src.checkpoint_id;
  // Serial when predictions are recorded, so the audit trail stays ordered.
  res.scores = parallel_runs(cfg.runs, out_predictions != nullptr ? 1 : cfg.threads, one_run);
  res.finalize();
  return res;
}

// ---- linear probe ---------------------------------------------------------------------------

std::vector<double> ridge_fit(const Tensor& x, const std::vector<double>& y, double alpha) {
  if (x.rank() != 2 || static_cast<size_t>(x.dim(0)) != y.size())
    throw std::invalid_argument("ridge_fit: x " + shape_str(x.shape()) + " vs " +
                                std::to_string(y.size()) + " targets");
  const int n = x.dim(0);
  const int d = x.dim(1);
  Eigen::MatrixXd design(n, d + 1);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < d; ++c) design(i, c) = x.at(i, c);
    design(i, d) = 1.0;
  }
  Eigen::VectorXd ty(n);
  for (int i = 0; i < n; ++i) ty(i) = y[static_cast<size_t>(i)];
  Eigen::MatrixXd gram = design.transpose() * design;
  gram.diagonal().array() += alpha;
  const Eigen::VectorXd theta = gram.ldlt().solve(design.transpose() * ty);
  return std::vector<double>(theta.data(), theta.data() + d + 1);
}

double linear_probe(const Tensor& embeddings, const std::vector<double>& targets, TaskKind kind,
                    uint64_t seed) {
  if (embeddings.rank() != 2 || static_cast<size_t>(embeddings.dim(0)) != targets.size())
    throw std::invalid_argument("linear_probe: embeddings " + shape_str(embeddings.shape()) +
                                " vs " + std::to_string(targets.size()) + " targets");
  const int n = embeddings.dim(0);
  const int h = embeddings.dim(1);
  if (n < 5) throw std::invalid_argument("linear_probe: need >= 5 rows");
  const double t0 = targets[0];
  bool constant = true;
  for (double t : targets)
    if (t != t0) constant = false;
  if (constant) throw std::invalid_argument("linear_probe: constant targets");

  Rng rng(seed);
  const auto idx = shuffled_indices(static_cast<size_t>(n), rng);
  const size_t train_count = std::max<size_t>(2, static_cast<size_t>(0.8 * n));
  std::vector<size_t> train(idx.begin(), idx.begin() + static_cast<long>(std::min(train_count, idx.size() - 1)));
  std::vector<size_t> test(idx.begin() + static_cast<long>(train.size()), idx.end());

  using Mat = Eigen::MatrixXd;
  using Vec = Eigen::VectorXd;
  auto design = [&](const std::vector<size_t>& rows) {
    Mat x(rows.size(), h + 1);
    for (size_t i = 0; i < rows.size(); ++i) {
      for (int c = 0; c < h; ++c) x(static_cast<long>(i), c) = embeddings.at(static_cast<int>(rows[i]), c);
      x(static_cast<long>(i), h) = 1.0;
    }
    return x;
  };
  Mat xtr = design(train);
  Mat xte = design(test);
  Vec ytr(train.size());
  for (size_t i = 0; i < train.size(); ++i) ytr(static_cast<long>(i)) = targets[train[i]];

  if (kind == TaskKind::Regression) {
    Tensor xtrain({static_cast<int>(train.size()), h});
    std::vector<double> ytrain(train.size());
    for (size_t i = 0; i < train.size(); ++i) {
      for (int c = 0; c < h; ++c)
        xtrain[static_cast<int>(i) * h + c] = embeddings.at(static_cast<int>(train[i]), c);
      ytrain[i] = targets[train[i]];
    }
    const std::vector<double> theta = ridge_fit(xtrain, ytrain, 1e-3);
    std::vector<double> p(test.size());
    std::vector<double> t(test.size());
    for (size_t i = 0; i < test.size(); ++i) {
      double acc = theta[static_cast<size_t>(h)];
      for (int c = 0; c < h; ++c) acc += theta[static_cast<size_t>(c)] * embeddings.at(static_cast<int>(test[i]), c);
      p[i] = acc;
      t[i] = targets[test[i]];
    }
    return rmse(p, t);
  }
  if (kind != TaskKind::Binary) throw std::invalid_argument("linear_probe: unsupported task kind");

  // Standardize columns on the training split, then plain gradient descent.
  Vec mu = xtr.leftCols(h).colwise().mean();
  Vec sd(h);
  for (int c = 0; c < h; ++c) {
    const double v = (xtr.col(c).array() - mu(c)).square().mean();
    sd(c) = v > 1e-12 ? std::sqrt(v) : 1.0;
  }
  auto standardize = [&](Mat& x) {
    for (int c = 0; c < h; ++c) x.col(c) = (x.col(c).array() - mu(c)) / sd(c);
  };
  standardize(xtr);
  standardize(xte);

  Vec theta = Vec::Zero(h + 1);
  const double lr = 0.5;
  for (int it = 0; it < 500; ++it) {
    Vec z = xtr * theta;
    Vec p = (1.0 / (1.0 + (-z.array()).exp())).matrix();
    Vec grad = xtr.transpose() * (p - ytr) / static_cast<double>(train.size());
    theta -= lr * grad;
  }
  Vec score = xte * theta;
  std::vector<double> s(test.size());
  std::vector<int> lab(test.size());
  for (size_t i = 0; i < test.size(); ++i) {
    s[i] = score(static_cast<long>(i));
    lab[i] = static_cast<int>(targets[test[i]]);
  }
  return auroc(s, lab);
}

// ---- statistics -------------------------------------------------------------------------------

namespace {

// Regularized incomplete beta via Lentz's continued fraction.
double betacf(double a, double b, double x) {
  const double tiny = 1e-30;
  const double eps = 1e-12;
  double qab = a + b;
  double qap = a + 1.0;
  double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) break;
  }
  return h;
}

double ibeta_reg(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

double student_t_cdf(double t, double df) {
  if (df <= 0.0) throw std::invalid_argument("student_t_cdf: df must be > 0");
  const double x = df / (df + t * t);
  const double tail = 0.5 * ibeta_reg(df / 2.0, 0.5, x);
  return t >= 0.0 ? 1.0 - tail : tail;
}

double welch_p_value(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2)
    throw std::invalid_argument("welch_p_value: each sample needs >= 2 points");
  const double ma = mean_of(a);
  const double mb = mean_of(b);
  const double va = sample_std(a) * sample_std(a);
  const double vb = sample_std(b) * sample_std(b);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double se2 = va / na + vb / nb;
  if (se2 <= 0.0) {
    if (ma == mb) return 1.0;  // identical constant samples: no evidence either way
    throw std::invalid_argument("welch_p_value: both samples degenerate with distinct means");
  }
  const double t = (ma - mb) / std::sqrt(se2);
  const double df =
      se2 * se2 / ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
  const double x = df / (df + t * t);
  const double p = ibeta_reg(df / 2.0, 0.5, x);
  return std::min(1.0, std::max(0.0, p));
}

double sweep_heuristic(const std::vector<std::pair<double, double>>& size_and_score) {
  double acc = 0.0;
  for (const auto& [size, score] : size_and_score) acc += size * score;
  return acc;
}

// ---- frozen encoding --------------------------------------------------------------------------

Tensor encode_graphs(Model& model, const std::vector<Graph>& graphs, bool use_features,
                     int batch_size) {
  if (graphs.empty()) throw std::invalid_argument("encode_graphs: empty list");
  std::vector<Graph> data;
  data.reserve(graphs.size());
  for (const Graph& g : graphs)
    data.push_back(use_features ? g : strip_features_keep_target(g));
  Tensor out({static_cast<int>(data.size()), model.config.hidden_dim});
  for (size_t at = 0; at < data.size(); at += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(data.size(), at + static_cast<size_t>(batch_size));
    std::vector<Graph> chunk(data.begin() + static_cast<long>(at),
                             data.begin() + static_cast<long>(end));
    GraphBatch batch = batch_graphs(chunk);
    Tensor nodes = forward(model, batch, nullptr, Mode::Inference).node_embeddings;
    Tensor pooled = readout_graphs(model.config, nodes, batch);
    for (size_t i = at; i < end; ++i)
      for (int c = 0; c < model.config.hidden_dim; ++c)
        out[static_cast<int>(i) * model.config.hidden_dim + c] =
            pooled.at(static_cast<int>(i - at), c);
  }
  return out;
}

}  // namespace topo
