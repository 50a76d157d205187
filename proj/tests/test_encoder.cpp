#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "topo/encoder.hpp"
#include "topo/pretrain.hpp"

using namespace topo;

namespace {

EncoderConfig small_config(int layers = 3, int hidden = 16, bool bn = true) {
  EncoderConfig cfg;
  cfg.num_layers = layers;
  cfg.hidden_dim = hidden;
  cfg.projection_dim = hidden;
  cfg.batch_norm = bn;
  return cfg;
}

GraphBatch er_batch(int count, uint64_t seed, int n = 12, double p = 0.3) {
  std::vector<Graph> gs;
  for (int i = 0; i < count; ++i) {
    Rng rng(Rng::derive(seed, static_cast<uint64_t>(i)));
    gs.push_back(generate_er_fixed(rng, n, p));
  }
  return batch_graphs(gs);
}

double l2_diff(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (int i = 0; i < a.numel(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc);
}

double l2_norm(const Tensor& a) {
  double acc = 0.0;
  for (int i = 0; i < a.numel(); ++i) acc += static_cast<double>(a[i]) * a[i];
  return std::sqrt(acc);
}

}  // namespace

TEST_CASE("build_model: default architecture") {
  Model m = build_model(EncoderConfig{}, InputKind::ConstantEmbedding, 0);
  CHECK(m.layers.size() == 6);
  for (const GinLayer& l : m.layers) {
    CHECK(l.w1.shape() == std::vector<int>{300, 300});
    CHECK(l.w2.shape() == std::vector<int>{300, 300});
    CHECK(l.epsilon.item() == 0.0f);
    CHECK(l.bn.gamma[0] == 1.0f);
    CHECK(l.bn.beta[0] == 0.0f);
  }
  CHECK(m.output_head.kind == OutputKind::Projection);
}

TEST_CASE("build_model: deterministic in the seed") {
  Model a = build_model(small_config(), InputKind::ConstantEmbedding, 99);
  Model b = build_model(small_config(), InputKind::ConstantEmbedding, 99);
  auto pa = a.params();
  auto pb = b.params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    for (int j = 0; j < pa[i].tensor->numel(); ++j)
      CHECK((*pa[i].tensor)[j] == (*pb[i].tensor)[j]);  // bitwise
  }
  Model c = build_model(small_config(), InputKind::ConstantEmbedding, 100);
  bool any_diff = false;
  auto pc = c.params();
  for (int j = 0; j < pa[0].tensor->numel(); ++j)
    if ((*pa[0].tensor)[j] != (*pc[0].tensor)[j]) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("build_model: parameter count matches the closed form") {
  const EncoderConfig cfg;  // defaults: L=6, h=300, p=300
  Model m = build_model(cfg, InputKind::ConstantEmbedding, 1);
  long long total = 0;
  for (const ParamRef& p : m.params()) total += p.tensor->numel();
  const long long h = cfg.hidden_dim;
  const long long p = cfg.projection_dim;
  const long long L = cfg.num_layers;
  // input vector + L * (two h x h linears with bias, bn affine, epsilon)
  // + projection (h->h->p with biases)
  const long long expect =
      h + L * (2 * h * h + 2 * h + 2 * h + 1) + (h * h + h) + (h * p + p);
  CHECK(total == expect);
  CHECK(total == 1268106);
}

TEST_CASE("forward: zero edge weights reduce every node to the isolated case") {
  EncoderConfig cfg = small_config();
  Model m = build_model(cfg, InputKind::ConstantEmbedding, 5);
  GraphBatch batch = er_batch(4, 21);
  Tensor zeros({batch.total_edges, 1});
  Tensor nodes = forward(m, batch, &zeros, Mode::Inference).node_embeddings;

  Graph lone;
  lone.n = 1;
  GraphBatch single = batch_graphs({lone});
  Tensor iso = forward(m, single, nullptr, Mode::Inference).node_embeddings;

  for (int v = 0; v < batch.total_nodes; ++v)
    for (int c = 0; c < cfg.hidden_dim; ++c)
      CHECK(nodes.at(v, c) == doctest::Approx(iso.at(0, c)).epsilon(1e-5));
}

TEST_CASE("forward: graph embedding is invariant under node relabeling") {
  EncoderConfig cfg = small_config();
  Model m = build_model(cfg, InputKind::ConstantEmbedding, 6);
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    Graph g = generate_er_fixed(rng, 14, 0.3);
    std::vector<int> perm(static_cast<size_t>(g.n));
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = 0; i < g.n - 1; ++i)
      std::swap(perm[static_cast<size_t>(i)],
                perm[static_cast<size_t>(i + rng.uniform_int(0, g.n - 1 - i))]);
    Graph relabeled;
    relabeled.n = g.n;
    for (const auto& [u, v] : g.edges)
      relabeled.edges.emplace_back(perm[static_cast<size_t>(u)], perm[static_cast<size_t>(v)]);

    Tensor ea = forward(m, batch_graphs({g}), nullptr, Mode::Inference).graph_embeddings;
    Tensor eb = forward(m, batch_graphs({relabeled}), nullptr, Mode::Inference).graph_embeddings;
    const double rel = l2_diff(ea, eb) / std::max(1e-12, l2_norm(ea));
    CHECK(rel < 1e-5);
  }
}

TEST_CASE("forward: sum readout is also permutation invariant") {
  EncoderConfig cfg = small_config();
  cfg.readout = Readout::Sum;
  Model m = build_model(cfg, InputKind::ConstantEmbedding, 61);
  Rng rng(3);
  Graph g = generate_er_fixed(rng, 12, 0.4);
  Graph rev;
  rev.n = g.n;
  for (const auto& [u, v] : g.edges) rev.edges.emplace_back(g.n - 1 - u, g.n - 1 - v);
  Tensor ea = forward(m, batch_graphs({g}), nullptr, Mode::Inference).graph_embeddings;
  Tensor eb = forward(m, batch_graphs({rev}), nullptr, Mode::Inference).graph_embeddings;
  CHECK(l2_diff(ea, eb) / std::max(1e-12, l2_norm(ea)) < 1e-5);
}

TEST_CASE("forward: 1-WL-distinguishable graphs get different embeddings") {
  // star S5 vs path P6: different degree sequences, so 1-WL separates them
  Graph star;
  star.n = 6;
  for (int i = 1; i < 6; ++i) star.edges.emplace_back(0, i);
  Graph path;
  path.n = 6;
  for (int i = 0; i < 5; ++i) path.edges.emplace_back(i, i + 1);
  REQUIRE(oracles::wl_distinguishable(star, path));

  for (uint64_t seed = 0; seed < 10; ++seed) {
    Model m = build_model(small_config(), InputKind::ConstantEmbedding, seed);
    Tensor es = forward(m, batch_graphs({star}), nullptr, Mode::Inference).graph_embeddings;
    Tensor ep = forward(m, batch_graphs({path}), nullptr, Mode::Inference).graph_embeddings;
    CHECK(l2_diff(es, ep) > 1e-6);
  }
}

TEST_CASE("forward: feature head on a featureless batch is a contract error") {
  EncoderConfig cfg = small_config();
  Model m = build_model(cfg, InputKind::FeatureMlp, 9, 4, 0);
  GraphBatch batch = er_batch(2, 33);
  CHECK_THROWS_AS(forward(m, batch, nullptr, Mode::Inference), std::invalid_argument);
}

TEST_CASE("forward: edge weight validation") {
  Model m = build_model(small_config(), InputKind::ConstantEmbedding, 10);
  GraphBatch batch = er_batch(2, 34);
  Tensor bad_len({batch.total_edges + 2, 1});
  CHECK_THROWS_AS(forward(m, batch, &bad_len, Mode::Inference), std::invalid_argument);
  Tensor bad_range = Tensor::full({batch.total_edges, 1}, 1.5f);
  CHECK_THROWS_AS(forward(m, batch, &bad_range, Mode::Inference), std::invalid_argument);
}

TEST_CASE("head swaps preserve the encoder stack bitwise") {
  EncoderConfig cfg = small_config();
  Model m = build_model(cfg, InputKind::ConstantEmbedding, 11);
  std::vector<std::vector<float>> stack_before;
  for (const ParamRef& p : m.encoder_stack_params())
    stack_before.emplace_back(p.tensor->data(), p.tensor->data() + p.tensor->numel());
  InputHead original = m.input_head.clone();
  Tensor original_const = original.const_node.clone();

  Rng rng(12);
  swap_input_head(m, make_feature_head(cfg, 9, 0, rng));
  swap_output_head(m, make_task_graph_head(cfg, rng));
  auto stack_after = m.encoder_stack_params();
  size_t i = 0;
  for (const ParamRef& p : stack_after) {
    for (int j = 0; j < p.tensor->numel(); ++j)
      CHECK((*p.tensor)[j] == stack_before[i][static_cast<size_t>(j)]);  // bitwise
    ++i;
  }

  // swap back: model input head bitwise equal to the stored original
  swap_input_head(m, std::move(original));
  for (int j = 0; j < m.input_head.const_node.numel(); ++j)
    CHECK(m.input_head.const_node[j] == original_const[j]);

  // after swapping in a feature head, a featureless batch must be rejected
  swap_input_head(m, make_feature_head(cfg, 9, 0, rng));
  GraphBatch batch = er_batch(2, 35);
  CHECK_THROWS_AS(forward(m, batch, nullptr, Mode::Inference), std::invalid_argument);
}

TEST_CASE("head swaps validate dimensions") {
  Model m = build_model(small_config(3, 16), InputKind::ConstantEmbedding, 13);
  EncoderConfig other = small_config(3, 32);
  Rng rng(14);
  CHECK_THROWS_AS(swap_input_head(m, make_constant_head(other, rng)), std::invalid_argument);
  CHECK_THROWS_AS(swap_output_head(m, make_task_graph_head(other, rng)), std::invalid_argument);
}

TEST_CASE("output heads: shapes and the none case") {
  EncoderConfig cfg = small_config();
  Model m = build_model(cfg, InputKind::ConstantEmbedding, 15);
  GraphBatch batch = er_batch(5, 36);

  Rng rng(16);
  swap_output_head(m, make_task_graph_head(cfg, rng));
  Forward f = forward(m, batch, nullptr, Mode::Inference);
  CHECK(f.graph_embeddings.shape() == std::vector<int>{5, 1});

  swap_output_head(m, make_none_head());
  Forward fn = forward(m, batch, nullptr, Mode::Inference);
  CHECK(fn.node_embeddings.shape() == std::vector<int>{batch.total_nodes, cfg.hidden_dim});
  CHECK(fn.graph_embeddings.shape() == std::vector<int>{5, cfg.hidden_dim});
  CHECK_THROWS_AS(apply_output_head(m, fn.graph_embeddings), std::logic_error);

  swap_output_head(m, make_task_node_head(cfg, 4, rng));
  Tensor logits = apply_output_head(m, fn.node_embeddings);
  CHECK(logits.shape() == std::vector<int>{batch.total_nodes, 4});
}

TEST_CASE("feature input head consumes node and edge features") {
  EncoderConfig cfg = small_config(2, 8);
  Rng rng(17);
  Graph g = generate_er_fixed(rng, 6, 0.5);
  g.node_feat_dim = 3;
  g.node_feats = std::vector<float>(static_cast<size_t>(g.n) * 3);
  for (auto& f : *g.node_feats) f = static_cast<float>(rng.uniform(-1, 1));
  g.edge_feat_dim = 2;
  g.edge_feats = std::vector<float>(static_cast<size_t>(g.num_edges()) * 2);
  for (auto& f : *g.edge_feats) f = static_cast<float>(rng.uniform(-1, 1));

  Model m = build_model(cfg, InputKind::FeatureMlp, 18, 3, 2);
  GraphBatch batch = batch_graphs({g, g});
  Forward f = forward(m, batch, nullptr, Mode::Inference);
  CHECK(f.graph_embeddings.dim(0) == 2);
  // identical graphs produce identical embeddings
  for (int c = 0; c < cfg.hidden_dim; ++c)
    CHECK(f.graph_embeddings.at(0, c) == doctest::Approx(f.graph_embeddings.at(1, c)).epsilon(1e-6));
}

TEST_CASE("view learner: logit shape, symmetry, and gradient flow") {
  EncoderConfig cfg = small_config();
  ViewLearner view = build_view_learner(cfg, 19);
  GraphBatch batch = er_batch(3, 37);

  Tensor logits = view_logits(view, batch);
  CHECK(logits.numel() == batch.total_edges);
  for (int e = 0; e < batch.total_edges; ++e) {
    const int rev = batch.reverse_edge[static_cast<size_t>(e)];
    CHECK(logits[e] == doctest::Approx(logits[rev]).epsilon(1e-7));
  }

  Tape tape;
  TapeScope scope(tape);
  auto params = view.params();
  for (ParamRef& p : params) tape.watch(*p.tensor);
  Tensor loss = sum(view_logits(view, batch));
  tape.backward(loss);
  double norm = 0.0;
  for (ParamRef& p : params) norm += l2_norm(tape.grad_or_zeros(*p.tensor));
  CHECK(norm > 1e-6);
}

TEST_CASE("edge-weight continuity: embedding moves O(delta)") {
  EncoderConfig cfg = small_config();
  Model m = build_model(cfg, InputKind::ConstantEmbedding, 23);
  GraphBatch batch = er_batch(3, 38);
  Tensor w = Tensor::full({batch.total_edges, 1}, 0.7f);
  Tensor base = forward(m, batch, &w, Mode::Inference).graph_embeddings;

  auto shifted = [&](float delta) {
    Tensor w2 = Tensor::full({batch.total_edges, 1}, 0.7f + delta);
    Tensor e = forward(m, batch, &w2, Mode::Inference).graph_embeddings;
    return l2_diff(base, e);
  };
  const double d1 = shifted(1e-4f);
  const double d2 = shifted(2e-4f);
  const double scale = std::max(1.0, l2_norm(base));
  CHECK(d1 < 100.0 * 1e-4 * scale);  // bounded slope
  if (d1 > 1e-6) CHECK(d2 < 3.0 * d1 + 1e-6);  // roughly linear in delta
}

TEST_CASE("without batch norm, inference embeddings are batch-composition independent") {
  EncoderConfig cfg = small_config(3, 16, /*bn=*/false);
  Model m = build_model(cfg, InputKind::ConstantEmbedding, 29);
  Rng rng(39);
  Graph g = generate_er_fixed(rng, 10, 0.4);
  Graph other = generate_er_fixed(rng, 15, 0.2);

  Tensor alone = forward(m, batch_graphs({g}), nullptr, Mode::Inference).graph_embeddings;
  Tensor in_batch = forward(m, batch_graphs({other, g}), nullptr, Mode::Inference).graph_embeddings;
  for (int c = 0; c < in_batch.dim(1); ++c)
    CHECK(alone.at(0, c) == doctest::Approx(in_batch.at(1, c)).epsilon(1e-6));
}

TEST_CASE("constant head gives isolated nodes identical embeddings in one batch") {
  EncoderConfig cfg = small_config();
  Model m = build_model(cfg, InputKind::ConstantEmbedding, 31);
  Graph a;
  a.n = 3;
  a.edges = {{0, 1}};  // node 2 isolated
  Graph b;
  b.n = 2;  // both isolated
  GraphBatch batch = batch_graphs({a, b});
  Tensor nodes = forward(m, batch, nullptr, Mode::Inference).node_embeddings;
  for (int c = 0; c < cfg.hidden_dim; ++c) {
    CHECK(nodes.at(2, c) == doctest::Approx(nodes.at(3, c)).epsilon(1e-6));
    CHECK(nodes.at(3, c) == doctest::Approx(nodes.at(4, c)).epsilon(1e-6));
  }
}
