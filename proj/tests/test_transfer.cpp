#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "topo/encoder.hpp"
#include "topo/transfer.hpp"

using namespace topo;

namespace {

EncoderConfig tiny_config(int layers = 2, int hidden = 8) {
  EncoderConfig cfg;
  cfg.num_layers = layers;
  cfg.hidden_dim = hidden;
  cfg.projection_dim = hidden;
  return cfg;
}

std::vector<Graph> density_dataset(int count, uint64_t seed, bool binary) {
  std::vector<Graph> gs;
  for (int i = 0; i < count; ++i) {
    Rng rng(Rng::derive(seed, static_cast<uint64_t>(i)));
    const bool dense = (i % 2) == 0;
    Graph g = generate_er_fixed(rng, 14, dense ? 0.45 : 0.08);
    g.target = binary ? (dense ? 1.0 : 0.0) : *g.target;
    gs.push_back(std::move(g));
  }
  return gs;
}

}  // namespace

TEST_CASE("auroc: perfect ranking, ties, and errors") {
  CHECK(auroc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == 1.0);
  CHECK(auroc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == 0.5);
  CHECK_THROWS_AS(auroc({0.1, 0.2}, {1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(auroc({0.1}, {0, 1}), std::invalid_argument);
}

TEST_CASE("auroc matches the O(n^2) pair-counting oracle on 100 random instances") {
  for (uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const int n = 20 + static_cast<int>(rng.uniform_int(0, 180));
    std::vector<double> scores;
    std::vector<int> labels;
    bool has0 = false, has1 = false;
    for (int i = 0; i < n; ++i) {
      // quantized scores force plenty of ties
      scores.push_back(std::round(rng.uniform(-2, 2) * 4.0) / 4.0);
      labels.push_back(rng.flip(0.4) ? 1 : 0);
      has0 |= labels.back() == 0;
      has1 |= labels.back() == 1;
    }
    if (!has0 || !has1) {
      labels[0] = 0;
      labels[1] = 1;
    }
    CHECK(auroc(scores, labels) == doctest::Approx(oracles::pair_auroc(scores, labels)).epsilon(1e-12));
  }
}

TEST_CASE("rmse and accuracy definitions") {
  CHECK(rmse({1, 2, 3}, {1, 2, 3}) == 0.0);
  CHECK(accuracy({1, 2, 3}, {1, 2, 3}) == 1.0);
  CHECK(rmse({2, 3, 4}, {1, 2, 3}) == doctest::Approx(1.0));

  Rng rng(81);
  std::vector<double> p, t;
  for (int i = 0; i < 50; ++i) {
    p.push_back(rng.uniform(-5, 5));
    t.push_back(rng.uniform(-5, 5));
  }
  double acc = 0.0;
  for (int i = 0; i < 50; ++i) acc += (p[static_cast<size_t>(i)] - t[static_cast<size_t>(i)]) *
                                      (p[static_cast<size_t>(i)] - t[static_cast<size_t>(i)]);
  CHECK(rmse(p, t) == doctest::Approx(std::sqrt(acc / 50.0)).epsilon(1e-7));
  CHECK_THROWS_AS(rmse({1.0}, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("welch test: identical samples give p = 1") {
  std::vector<double> a{1.0, 2.0, 3.0, 4.0};
  CHECK(welch_p_value(a, a) == doctest::Approx(1.0));
}

TEST_CASE("welch test: well-separated samples give p < 1e-4") {
  Rng rng(83);
  std::vector<double> a, b;
  for (int i = 0; i < 10; ++i) {
    a.push_back(rng.normal());
    b.push_back(5.0 + rng.normal());
  }
  CHECK(welch_p_value(a, b) < 1e-4);
}

TEST_CASE("student t CDF matches numerical quadrature of the density") {
  const double pairs[][2] = {{0.5, 3.0}, {1.0, 10.0}, {2.5, 7.3}, {-1.7, 24.0}, {0.0, 5.0},
                             {4.2, 2.0}, {-3.3, 15.5}};
  for (const auto& [t, df] : pairs)
    CHECK(student_t_cdf(t, df) == doctest::Approx(oracles::t_cdf_quadrature(t, df)).epsilon(1e-6));
}

TEST_CASE("welch test: degenerate samples are rejected") {
  CHECK_THROWS_AS(welch_p_value({1.0}, {1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(welch_p_value({2.0, 2.0}, {3.0, 3.0}), std::invalid_argument);
}

TEST_CASE("sweep heuristic") {
  CHECK(sweep_heuristic({{100.0, 0.5}}) == doctest::Approx(50.0));
  CHECK(sweep_heuristic({{100.0, 0.0}, {300.0, 0.0}}) == 0.0);
  CHECK(sweep_heuristic({{100.0, 0.5}, {300.0, 0.1}}) == doctest::Approx(80.0));
}

TEST_CASE("ridge_fit matches an SVD-route oracle on a random 100x16 instance") {
  Rng rng(85);
  Tensor x = oracles::random_tensor({100, 16}, rng, -2, 2);
  std::vector<double> y;
  for (int i = 0; i < 100; ++i) y.push_back(rng.uniform(-3, 3));
  const double alpha = 1e-3;
  const auto theta = ridge_fit(x, y, alpha);

  // independent route: SVD shrinkage on the same design matrix
  Eigen::MatrixXd design(100, 17);
  for (int i = 0; i < 100; ++i) {
    for (int c = 0; c < 16; ++c) design(i, c) = x.at(i, c);
    design(i, 16) = 1.0;
  }
  Eigen::VectorXd ty(100);
  for (int i = 0; i < 100; ++i) ty(i) = y[static_cast<size_t>(i)];
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  Eigen::VectorXd shrunk = svd.matrixU().transpose() * ty;
  for (int i = 0; i < s.size(); ++i) shrunk(i) *= s(i) / (s(i) * s(i) + alpha);
  Eigen::VectorXd oracle = svd.matrixV() * shrunk;
  for (int i = 0; i < 17; ++i)
    CHECK(theta[static_cast<size_t>(i)] == doctest::Approx(oracle(i)).epsilon(1e-5));
}

TEST_CASE("linear_probe: realizable regression reaches near-zero error") {
  Rng rng(87);
  Tensor emb = oracles::random_tensor({200, 8}, rng, -1, 1);
  std::vector<double> w{0.5, -1.0, 2.0, 0.0, 0.3, -0.7, 1.5, 0.1};
  std::vector<double> y;
  for (int i = 0; i < 200; ++i) {
    double acc = 0.25;
    for (int c = 0; c < 8; ++c) acc += w[static_cast<size_t>(c)] * emb.at(i, c);
    y.push_back(acc);
  }
  CHECK(linear_probe(emb, y, TaskKind::Regression, 1) < 1e-3);
}

TEST_CASE("linear_probe: independent binary targets stay near AUROC 0.5") {
  Rng rng(89);
  Tensor emb = oracles::random_tensor({400, 6}, rng, -1, 1);
  double acc = 0.0;
  for (uint64_t shuffle = 0; shuffle < 10; ++shuffle) {
    Rng lr(shuffle);
    std::vector<double> y;
    for (int i = 0; i < 400; ++i) y.push_back(lr.flip(0.5) ? 1.0 : 0.0);
    acc += linear_probe(emb, y, TaskKind::Binary, shuffle);
  }
  CHECK(std::fabs(acc / 10.0 - 0.5) < 0.05);
}

TEST_CASE("linear_probe: constant targets are rejected") {
  Tensor emb({10, 3});
  CHECK_THROWS_AS(linear_probe(emb, std::vector<double>(10, 1.0), TaskKind::Regression, 0),
                  std::invalid_argument);
}

TEST_CASE("finetune_graph_task: learns a constant target well below the initial error") {
  std::vector<Graph> data;
  for (int i = 0; i < 40; ++i) {
    Rng rng(Rng::derive(91, static_cast<uint64_t>(i)));
    Graph g = generate_er_fixed(rng, 10, 0.3);
    g.target = 3.0;  // untrained output is near 0, so the initial error is ~3
    data.push_back(std::move(g));
  }
  ModelSource fresh;
  fresh.config = tiny_config();
  FinetuneConfig cfg;
  cfg.runs = 2;
  cfg.epochs = 25;
  cfg.batch_size = 16;
  cfg.seed = 5;
  RunResult r = finetune_graph_task(fresh, data, TaskSpec::graph_regression(), cfg);
  CHECK(r.mean < 0.5);
  CHECK(r.metric == "rmse");
  CHECK(r.higher_better == false);
  CHECK(r.scores.size() == 2);
}

TEST_CASE("zeroed task head predicts a constant; RMSE equals the population std") {
  EncoderConfig cfg = tiny_config();
  Model m = build_model(cfg, InputKind::ConstantEmbedding, 93);
  Rng rng(94);
  swap_output_head(m, make_task_graph_head(cfg, rng));
  for (Tensor* t : {&m.output_head.mlp.weights[0], &m.output_head.mlp.weights[1],
                    &m.output_head.mlp.biases[0], &m.output_head.mlp.biases[1]})
    for (int i = 0; i < t->numel(); ++i) (*t)[i] = 0.0f;

  std::vector<Graph> data;
  std::vector<double> targets{-2.0, -1.0, 0.0, 1.0, 2.0};  // centered
  for (int i = 0; i < 5; ++i) {
    Rng grng(Rng::derive(95, static_cast<uint64_t>(i)));
    data.push_back(generate_er_fixed(grng, 8, 0.4));
  }
  Tensor pred = forward(m, batch_graphs(data), nullptr, Mode::Inference).graph_embeddings;
  std::vector<double> p;
  for (int i = 0; i < 5; ++i) {
    CHECK(pred[i] == 0.0f);
    p.push_back(pred[i]);
  }
  double pop_std = 0.0;
  for (double t : targets) pop_std += t * t;
  pop_std = std::sqrt(pop_std / targets.size());
  CHECK(rmse(p, targets) == doctest::Approx(pop_std));
}

TEST_CASE("finetune_graph_task: binary task reports a usable AUROC") {
  const auto data = density_dataset(60, 97, /*binary=*/true);
  ModelSource fresh;
  fresh.config = tiny_config();
  FinetuneConfig cfg;
  cfg.runs = 1;
  cfg.epochs = 20;
  cfg.batch_size = 16;
  cfg.seed = 3;
  RunResult r = finetune_graph_task(fresh, data, TaskSpec::graph_binary(), cfg);
  CHECK(r.metric == "auroc");
  CHECK(r.higher_better == true);
  CHECK(r.mean > 0.7);  // dense vs sparse is an easy separation
}

TEST_CASE("finetune_graph_task: deterministic and order-independent across threads") {
  const auto data = density_dataset(30, 99, /*binary=*/false);
  ModelSource fresh;
  fresh.config = tiny_config(1, 6);
  FinetuneConfig cfg;
  cfg.runs = 3;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.seed = 17;
  RunResult serial = finetune_graph_task(fresh, data, TaskSpec::graph_regression(), cfg);
  cfg.threads = 2;
  RunResult parallel = finetune_graph_task(fresh, data, TaskSpec::graph_regression(), cfg);
  REQUIRE(serial.scores.size() == parallel.scores.size());
  for (size_t i = 0; i < serial.scores.size(); ++i)
    CHECK(serial.scores[i] == parallel.scores[i]);  // bitwise
}

TEST_CASE("finetune_graph_task: contract errors") {
  ModelSource fresh;
  fresh.config = tiny_config();
  FinetuneConfig cfg;
  cfg.runs = 1;
  std::vector<Graph> no_target{Graph{}};
  no_target[0].n = 3;
  no_target.push_back(no_target[0]);
  CHECK_THROWS_AS(finetune_graph_task(fresh, no_target, TaskSpec::graph_regression(), cfg),
                  std::invalid_argument);

  auto data = density_dataset(10, 101, false);
  CHECK_THROWS_AS(
      finetune_graph_task(fresh, data, TaskSpec::graph_regression(/*with_features=*/true), cfg),
      std::invalid_argument);
}

TEST_CASE("make_edge_split: hygiene of the observed graph and negatives") {
  Rng g_rng(103);
  Graph g = generate_er_fixed(g_rng, 40, 0.25);
  Rng rng(104);
  EdgeSplit s = make_edge_split(g, 0.05, 0.05, rng);

  std::set<std::pair<int, int>> observed;
  for (const auto& [u, v] : s.observed.edges) observed.insert({std::min(u, v), std::max(u, v)});
  std::set<std::pair<int, int>> original;
  for (const auto& [u, v] : g.edges) original.insert({std::min(u, v), std::max(u, v)});

  const auto n_expect = static_cast<size_t>(std::floor(0.05 * g.num_edges()));
  CHECK(s.test_pos.size() == std::max<size_t>(1, n_expect));
  CHECK(s.train_pos.size() == s.train_neg.size());
  CHECK(s.test_pos.size() == s.test_neg.size());

  for (const auto& [u, v] : s.test_pos) {
    CHECK(observed.count({std::min(u, v), std::max(u, v)}) == 0);  // held out
    CHECK(original.count({std::min(u, v), std::max(u, v)}) == 1);  // real edge
  }
  for (const auto& [u, v] : s.train_pos)
    CHECK(observed.count({std::min(u, v), std::max(u, v)}) == 0);
  for (const auto& neg : {s.train_neg, s.test_neg})
    for (const auto& [u, v] : neg) CHECK(original.count({std::min(u, v), std::max(u, v)}) == 0);
  CHECK(observed.size() == original.size() - s.test_pos.size() - s.train_pos.size());
}

TEST_CASE("edge head with zero weights scores everything 0: accuracy is exactly one half") {
  EncoderConfig cfg = tiny_config();
  Model m = build_model(cfg, InputKind::ConstantEmbedding, 105);
  Rng rng(106);
  swap_output_head(m, make_task_edge_head(cfg, rng));
  for (Tensor* t : {&m.output_head.mlp.weights[0], &m.output_head.mlp.biases[0]})
    for (int i = 0; i < t->numel(); ++i) (*t)[i] = 0.0f;

  Rng g_rng(107);
  Graph g = generate_er_fixed(g_rng, 30, 0.3);
  GraphBatch batch = batch_graphs({g});
  Tensor nodes = forward(m, batch, nullptr, Mode::Inference).node_embeddings;
  Tensor pairs = concat_cols(gather_rows(nodes, {0, 1, 2, 3}), gather_rows(nodes, {4, 5, 6, 7}));
  Tensor logits = apply_output_head(m, pairs);
  std::vector<int> pred;
  for (int i = 0; i < 4; ++i) pred.push_back(logits[i] > 0.0f ? 1 : 0);
  CHECK(accuracy(pred, {1, 1, 0, 0}) == 0.5);
}

TEST_CASE("edge_prediction_experiment: planted separable structure is learned") {
  // K30 plus 30 isolated nodes: every non-edge touches an isolated node, so
  // held-out clique edges are linearly separable from sampled negatives.
  Graph g;
  g.n = 60;
  for (int u = 0; u < 30; ++u)
    for (int v = u + 1; v < 30; ++v) g.edges.emplace_back(u, v);

  ModelSource fresh;
  fresh.config = tiny_config();
  FinetuneConfig cfg;
  cfg.runs = 2;
  cfg.epochs = 15;
  cfg.batch_size = 32;
  cfg.seed = 23;
  RunResult r = edge_prediction_experiment(fresh, g, cfg);
  CHECK(r.metric == "accuracy");
  CHECK(r.mean > 0.9);
}

TEST_CASE("edge_prediction_experiment: too-small graphs are rejected") {
  Graph tiny;
  tiny.n = 4;
  tiny.edges = {{0, 1}, {1, 2}};
  ModelSource fresh;
  fresh.config = tiny_config();
  FinetuneConfig cfg;
  cfg.runs = 1;
  CHECK_THROWS_AS(edge_prediction_experiment(fresh, tiny, cfg), std::invalid_argument);
}

TEST_CASE("make_node_split covers the nodes disjointly at the requested fraction") {
  Rng rng(109);
  NodeSplit s = make_node_split(100, 0.2, rng);
  CHECK(s.train_nodes.size() == 20);
  CHECK(s.test_nodes.size() == 80);
  std::set<int> all(s.train_nodes.begin(), s.train_nodes.end());
  all.insert(s.test_nodes.begin(), s.test_nodes.end());
  CHECK(all.size() == 100);
}

TEST_CASE("node_classification_experiment: feature-determined labels are learned") {
  Rng rng(111);
  Graph g = generate_er_fixed(rng, 100, 0.05);
  g.node_feat_dim = 2;
  g.node_feats = std::vector<float>(200);
  g.node_labels = std::vector<int>(100);
  for (int v = 0; v < 100; ++v) {
    const int cls = static_cast<int>(rng.uniform_int(0, 1));
    (*g.node_labels)[static_cast<size_t>(v)] = cls;
    (*g.node_feats)[static_cast<size_t>(v) * 2] = cls == 1 ? 2.0f : -2.0f;
    (*g.node_feats)[static_cast<size_t>(v) * 2 + 1] = static_cast<float>(rng.uniform(-1, 1));
  }
  ModelSource fresh;
  fresh.config = tiny_config();
  FinetuneConfig cfg;
  cfg.runs = 2;
  cfg.epochs = 150;
  cfg.lr = 0.01f;
  cfg.batch_size = 64;
  cfg.seed = 29;
  RunResult r = node_classification_experiment(fresh, g, cfg);
  CHECK(r.metric == "accuracy");
  CHECK(r.mean > 0.95);
}

TEST_CASE("node_classification_experiment: chance level, majority floor, no label leakage") {
  Rng rng(113);
  Graph g = generate_er_fixed(rng, 200, 0.03);
  g.node_labels = std::vector<int>(200);
  for (int v = 0; v < 200; ++v) (*g.node_labels)[static_cast<size_t>(v)] = v % 4;  // balanced
  // shuffle label assignment so it is independent of structure
  for (int v = 0; v < 199; ++v) {
    const int u = v + static_cast<int>(rng.uniform_int(0, 199 - v));
    std::swap((*g.node_labels)[static_cast<size_t>(v)], (*g.node_labels)[static_cast<size_t>(u)]);
  }
  ModelSource fresh;
  fresh.config = tiny_config(1, 6);
  FinetuneConfig cfg;
  cfg.runs = 3;
  cfg.epochs = 20;
  cfg.batch_size = 64;
  cfg.seed = 31;
  std::vector<std::vector<int>> preds;
  RunResult r = node_classification_experiment(fresh, g, cfg, 0.2, 3, 5, &preds);

  const double sigma = std::sqrt(0.25 * 0.75 / 160.0) / std::sqrt(3.0);
  CHECK(std::fabs(r.mean - 0.25) < 3.0 * sigma + 0.02);
  CHECK(r.mean >= 0.25 - 0.05);  // majority-fraction floor on balanced labels

  // corrupting test labels must not change any prediction (labels unseen)
  Graph corrupted = g;
  Rng crng(114);
  Rng split_rng(Rng::derive(Rng::derive(cfg.seed, 0), 31));
  NodeSplit split = make_node_split(g.n, 0.2, split_rng);
  for (int v : split.test_nodes)
    (*corrupted.node_labels)[static_cast<size_t>(v)] =
        static_cast<int>(crng.uniform_int(0, 3));
  std::vector<std::vector<int>> preds2;
  node_classification_experiment(fresh, corrupted, cfg, 0.2, 3, 5, &preds2);
  REQUIRE(preds.size() == preds2.size());
  for (size_t run = 0; run < preds.size(); ++run) CHECK(preds[run] == preds2[run]);
}

TEST_CASE("node_classification_experiment: missing labels are rejected") {
  Graph g;
  g.n = 10;
  ModelSource fresh;
  fresh.config = tiny_config();
  FinetuneConfig cfg;
  CHECK_THROWS_AS(node_classification_experiment(fresh, g, cfg), std::invalid_argument);
}

TEST_CASE("encode_graphs: frozen embeddings are deterministic with the right shape") {
  EncoderConfig cfg = tiny_config();
  Model m = build_model(cfg, InputKind::ConstantEmbedding, 115);
  const auto data = density_dataset(12, 117, false);
  Tensor a = encode_graphs(m, data, false);
  Tensor b = encode_graphs(m, data, false);
  CHECK(a.shape() == std::vector<int>{12, cfg.hidden_dim});
  for (int i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("RunResult: finalize recomputes mean and sample std") {
  RunResult r;
  r.scores = {1.0, 2.0, 3.0, 4.0};
  r.finalize();
  CHECK(r.mean == doctest::Approx(2.5));
  CHECK(r.stddev == doctest::Approx(std::sqrt(5.0 / 3.0)));
}
