#include "topo/pretrain.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace topo {

std::string method_name(PretrainMethod m) {
  switch (m) {
    case PretrainMethod::Adgcl: return "adgcl";
    case PretrainMethod::GraphclEdge: return "graphcl_edge";
    case PretrainMethod::GraphclNode: return "graphcl_node";
  }
  return "?";
}

PretrainMethod method_from_name(const std::string& name) {
  if (name == "adgcl") return PretrainMethod::Adgcl;
  if (name == "graphcl_edge") return PretrainMethod::GraphclEdge;
  if (name == "graphcl_node") return PretrainMethod::GraphclNode;
  throw std::invalid_argument("unknown pretrain method: " + name);
}

std::vector<std::string> PretrainConfig::validate() const {
  std::vector<std::string> bad;
  if (epochs < 1) bad.push_back("epochs must be >= 1");
  if (batch_size < 2) bad.push_back("batch_size must be >= 2");
  if (!(lr_encoder > 0.0f)) bad.push_back("lr_encoder must be > 0");
  if (!(lr_view > 0.0f)) bad.push_back("lr_view must be > 0");
  if (!(temperature > 0.0f)) bad.push_back("temperature must be > 0");
  if (drop_prob < 0.0f || drop_prob >= 1.0f) bad.push_back("drop_prob must be in [0, 1)");
  if (reg_weight < 0.0f) bad.push_back("reg_weight must be >= 0");
  if (!(concrete_temperature > 0.0f)) bad.push_back("concrete_temperature must be > 0");
  return bad;
}

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os << "epoch,loss,keep_prob,seconds\n";
  for (const EpochLog& e : epochs) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.3f\n", e.epoch, e.loss, e.keep_prob,
                  e.seconds);
    os << buf;
  }
  return os.str();
}

// ---- loss -------------------------------------------------------------------

Tensor nt_xent(const Tensor& z1, const Tensor& z2, float temperature) {
  if (!(temperature > 0.0f)) throw std::invalid_argument("nt_xent: temperature must be > 0");
  if (z1.rank() != 2 || z2.rank() != 2 || z1.dim(0) != z2.dim(0) || z1.dim(1) != z2.dim(1))
    throw std::invalid_argument("nt_xent: incompatible shapes " + shape_str(z1.shape()) +
                                " and " + shape_str(z2.shape()));
  const int b = z1.dim(0);
  if (b < 2) throw std::invalid_argument("nt_xent: need a batch of >= 2, got " + std::to_string(b));
  Tensor s = matmul(normalize_rows(z1), transpose(normalize_rows(z2)));
  Tensor sc = scale(s, 1.0f / temperature);
  Tensor eye({b, b});
  for (int i = 0; i < b; ++i) eye[i * b + i] = 1.0f;
  Tensor positives = row_sum(mul(sc, eye));
  Tensor lse = row_log_sum_exp(sc);
  return mean(sub(lse, positives));
}

// ---- random augmentations ------------------------------------------------------

Graph random_edge_drop(const Graph& g, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("random_edge_drop: p must be in [0, 1)");
  Graph out;
  out.n = g.n;
  out.domain = g.domain;
  out.target = g.target;
  out.node_labels = g.node_labels;
  out.node_feats = g.node_feats;
  out.node_feat_dim = g.node_feat_dim;
  if (g.has_edge_feats()) {
    out.edge_feat_dim = g.edge_feat_dim;
    out.edge_feats = std::vector<float>();
  }
  for (size_t e = 0; e < g.edges.size(); ++e) {
    if (rng.flip(p)) continue;
    out.edges.push_back(g.edges[e]);
    if (g.has_edge_feats())
      for (int c = 0; c < g.edge_feat_dim; ++c)
        out.edge_feats->push_back((*g.edge_feats)[e * static_cast<size_t>(g.edge_feat_dim) + c]);
  }
  return out;
}

Graph random_node_drop(const Graph& g, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("random_node_drop: p must be in [0, 1)");
  std::vector<int> keep;
  do {
    keep.clear();
    for (int v = 0; v < g.n; ++v)
      if (!rng.flip(p)) keep.push_back(v);
  } while (keep.empty() && g.n > 0);

  std::vector<int> remap(static_cast<size_t>(g.n), -1);
  for (size_t i = 0; i < keep.size(); ++i) remap[static_cast<size_t>(keep[i])] = static_cast<int>(i);

  Graph out;
  out.n = static_cast<int>(keep.size());
  out.domain = g.domain;
  out.target = g.target;
  if (g.has_node_feats()) {
    out.node_feat_dim = g.node_feat_dim;
    out.node_feats = std::vector<float>();
    for (int v : keep)
      for (int c = 0; c < g.node_feat_dim; ++c)
        out.node_feats->push_back((*g.node_feats)[static_cast<size_t>(v) * g.node_feat_dim + c]);
  }
  if (g.node_labels.has_value()) {
    out.node_labels = std::vector<int>();
    for (int v : keep) out.node_labels->push_back((*g.node_labels)[static_cast<size_t>(v)]);
  }
  if (g.has_edge_feats()) {
    out.edge_feat_dim = g.edge_feat_dim;
    out.edge_feats = std::vector<float>();
  }
  for (size_t e = 0; e < g.edges.size(); ++e) {
    const int u = remap[static_cast<size_t>(g.edges[e].first)];
    const int v = remap[static_cast<size_t>(g.edges[e].second)];
    if (u < 0 || v < 0) continue;
    out.edges.emplace_back(u, v);
    if (g.has_edge_feats())
      for (int c = 0; c < g.edge_feat_dim; ++c)
        out.edge_feats->push_back((*g.edge_feats)[e * static_cast<size_t>(g.edge_feat_dim) + c]);
  }
  return out;
}

// ---- concrete relaxation ---------------------------------------------------------

Tensor concrete_noise(const GraphBatch& batch, Rng& rng) {
  std::vector<float> per_pair(static_cast<size_t>(batch.num_undirected));
  for (int k = 0; k < batch.num_undirected; ++k) {
    double u = rng.uniform();
    // keep the logistic noise finite
    u = std::min(std::max(u, 1e-7), 1.0 - 1e-7);
    per_pair[static_cast<size_t>(k)] = static_cast<float>(std::log(u) - std::log1p(-u));
  }
  Tensor noise({batch.total_edges, 1});
  for (int e = 0; e < batch.total_edges; ++e)
    noise[e] = per_pair[static_cast<size_t>(batch.undirected_id[static_cast<size_t>(e)])];
  return noise;
}

Tensor concrete_edge_weights_with_noise(const Tensor& logits, const Tensor& noise, float t) {
  if (!(t > 0.0f)) throw std::invalid_argument("concrete weights: temperature must be > 0");
  if (logits.numel() != noise.numel())
    throw std::invalid_argument("concrete weights: " + std::to_string(logits.numel()) +
                                " logits vs " + std::to_string(noise.numel()) + " noise values");
  return sigmoid(scale(add(logits, noise.detached()), 1.0f / t));
}

Tensor concrete_edge_weights(const Tensor& logits, const GraphBatch& batch, float t, Rng& rng) {
  if (logits.numel() != batch.total_edges)
    throw std::invalid_argument("concrete weights: " + std::to_string(logits.numel()) +
                                " logits for " + std::to_string(batch.total_edges) + " edges");
  return concrete_edge_weights_with_noise(logits, concrete_noise(batch, rng), t);
}

Tensor drop_ratio(const Tensor& weights, const GraphBatch& batch) {
  if (weights.numel() != batch.total_edges)
    throw std::invalid_argument("drop_ratio: " + std::to_string(weights.numel()) +
                                " weights for " + std::to_string(batch.total_edges) + " edges");
  for (int i = 0; i < weights.numel(); ++i)
    if (weights[i] < 0.0f || weights[i] > 1.0f)
      throw std::invalid_argument("drop_ratio: weight outside [0, 1]");
  Tensor dropped = sub(1.0f, weights.reshaped({batch.total_edges, 1}));
  Tensor per_graph = segment_sum(dropped, batch.edge_to_graph, batch.size());
  Tensor inv({batch.size(), 1});
  int with_edges = 0;
  for (int i = 0; i < batch.size(); ++i) {
    const int m = batch.edges_of(i);
    inv[i] = m > 0 ? 1.0f / static_cast<float>(m) : 0.0f;
    if (m > 0) ++with_edges;
  }
  if (with_edges == 0) return Tensor::scalar(0.0f);
  return scale(sum(mul(per_graph, inv)), 1.0f / static_cast<float>(with_edges));
}

// ---- training ----------------------------------------------------------------------

Graph topology_only(const Graph& g) {
  Graph t;
  t.n = g.n;
  t.edges = g.edges;
  t.domain = g.domain;
  return t;
}

std::vector<std::vector<size_t>> epoch_batches(size_t count, int batch_size, Rng& rng) {
  std::vector<size_t> order(count);
  for (size_t i = 0; i < count; ++i) order[i] = i;
  for (size_t i = 0; i + 1 < count; ++i) {
    const size_t j = i + static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(count - i - 1)));
    std::swap(order[i], order[j]);
  }
  std::vector<std::vector<size_t>> batches;
  for (size_t at = 0; at < count; at += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(count, at + static_cast<size_t>(batch_size));
    if (end - at < 2) break;  // a singleton batch has no contrastive negatives
    batches.emplace_back(order.begin() + static_cast<long>(at), order.begin() + static_cast<long>(end));
  }
  return batches;
}

namespace {

std::vector<Tensor> grads_of(Tape& tape, const std::vector<ParamRef>& params) {
  std::vector<Tensor> gs;
  gs.reserve(params.size());
  for (const ParamRef& p : params) gs.push_back(tape.grad_or_zeros(*p.tensor));
  return gs;
}

std::vector<Tensor*> tensors_of(const std::vector<ParamRef>& params) {
  std::vector<Tensor*> ts;
  ts.reserve(params.size());
  for (const ParamRef& p : params) ts.push_back(p.tensor);
  return ts;
}

double mean_weight(const Tensor& w) {
  if (w.numel() == 0) return 1.0;
  double acc = 0.0;
  for (int i = 0; i < w.numel(); ++i) acc += w[i];
  return acc / w.numel();
}

GraphBatch stripped_batch(const std::vector<Graph>& corpus, const std::vector<size_t>& idx) {
  std::vector<Graph> gs;
  gs.reserve(idx.size());
  for (size_t i : idx) gs.push_back(topology_only(corpus[i]));
  return batch_graphs(gs);
}

void check_corpus(const std::vector<Graph>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("pretrain: empty corpus");
  if (corpus.size() < 2) throw std::invalid_argument("pretrain: need >= 2 graphs for NT-Xent");
}

}  // namespace

ViewStepStats view_learner_step(Model& model, ViewLearner& view, const GraphBatch& batch,
                                const PretrainConfig& cfg, AdamState& opt_view, Rng& noise_rng) {
  Tape tape;
  TapeScope scope(tape);
  auto vparams = view.params();
  for (ParamRef& p : vparams) tape.watch(*p.tensor);

  Tensor logits = view_logits(view, batch, Mode::Training);
  Tensor w = concrete_edge_weights(logits, batch, cfg.concrete_temperature, noise_rng);
  Tensor z1 = forward(model, batch, nullptr, Mode::Training).graph_embeddings;
  Tensor z2 = forward(model, batch, &w, Mode::Training).graph_embeddings;
  Tensor contrast = nt_xent(z1, z2, cfg.temperature);
  Tensor loss = add(scale(contrast, -1.0f), scale(drop_ratio(w, batch), cfg.reg_weight));

  tape.backward(loss);
  adam_step(tensors_of(vparams), grads_of(tape, vparams), opt_view);
  return ViewStepStats{static_cast<double>(loss.item()), mean_weight(w)};
}

EncoderStepStats encoder_step(Model& model, ViewLearner& view, const GraphBatch& batch,
                              const PretrainConfig& cfg, AdamState& opt_encoder, Rng& noise_rng) {
  Tape tape;
  TapeScope scope(tape);
  auto mparams = model.params();
  for (ParamRef& p : mparams) tape.watch(*p.tensor);

  Tensor logits = view_logits(view, batch, Mode::Training);  // theta unwatched: constant here
  Tensor w = concrete_edge_weights(logits, batch, cfg.concrete_temperature, noise_rng);
  Tensor z1 = forward(model, batch, nullptr, Mode::Training).graph_embeddings;
  Tensor z2 = forward(model, batch, &w, Mode::Training).graph_embeddings;
  Tensor loss = nt_xent(z1, z2, cfg.temperature);

  tape.backward(loss);
  adam_step(tensors_of(mparams), grads_of(tape, mparams), opt_encoder);
  return EncoderStepStats{static_cast<double>(loss.item()), mean_weight(w)};
}

PretrainResult train_adgcl(const std::vector<Graph>& corpus, const EncoderConfig& enc_cfg,
                           const PretrainConfig& cfg, const AdgclHooks* hooks) {
  check_corpus(corpus);
  PretrainResult r;
  r.model = build_model(enc_cfg, InputKind::ConstantEmbedding, Rng::derive(cfg.seed, 1));
  r.view = build_view_learner(enc_cfg, Rng::derive(cfg.seed, 2));
  r.log.seed = cfg.seed;

  AdamState opt_enc = AdamState::make(tensors_of(r.model.params()), cfg.lr_encoder);
  AdamState opt_view = AdamState::make(tensors_of(r.view.params()), cfg.lr_view);
  Rng noise_rng(Rng::derive(cfg.seed, 3));

  int batch_index = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    Rng shuffle_rng(Rng::derive(cfg.seed, 100 + static_cast<uint64_t>(epoch)));
    double loss_acc = 0.0;
    double keep_acc = 0.0;
    int batches = 0;
    for (const auto& idx : epoch_batches(corpus.size(), cfg.batch_size, shuffle_rng)) {
      GraphBatch batch = stripped_batch(corpus, idx);
      if (hooks != nullptr && hooks->before_batch) hooks->before_batch(batch_index, r.model, r.view);
      view_learner_step(r.model, r.view, batch, cfg, opt_view, noise_rng);
      if (hooks != nullptr && hooks->after_view_step)
        hooks->after_view_step(batch_index, r.model, r.view);
      const EncoderStepStats es = encoder_step(r.model, r.view, batch, cfg, opt_enc, noise_rng);
      if (hooks != nullptr && hooks->after_batch) hooks->after_batch(batch_index, r.model, r.view);
      loss_acc += es.contrastive_loss;
      keep_acc += es.mean_keep_prob;
      ++batches;
      ++batch_index;
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    r.log.epochs.push_back(EpochLog{epoch, batches > 0 ? loss_acc / batches : 0.0,
                                    batches > 0 ? keep_acc / batches : 1.0, secs});
  }
  return r;
}

PretrainResult train_graphcl(const std::vector<Graph>& corpus, const EncoderConfig& enc_cfg,
                             const PretrainConfig& cfg) {
  check_corpus(corpus);
  if (cfg.method == PretrainMethod::Adgcl)
    throw std::invalid_argument("train_graphcl: config method is adgcl");
  PretrainResult r;
  r.model = build_model(enc_cfg, InputKind::ConstantEmbedding, Rng::derive(cfg.seed, 1));
  r.view = build_view_learner(enc_cfg, Rng::derive(cfg.seed, 2));  // unused; kept for parity
  r.log.seed = cfg.seed;

  AdamState opt = AdamState::make(tensors_of(r.model.params()), cfg.lr_encoder);
  Rng aug_rng(Rng::derive(cfg.seed, 4));
  const bool node_drop = cfg.method == PretrainMethod::GraphclNode;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    Rng shuffle_rng(Rng::derive(cfg.seed, 100 + static_cast<uint64_t>(epoch)));
    double loss_acc = 0.0;
    int batches = 0;
    for (const auto& idx : epoch_batches(corpus.size(), cfg.batch_size, shuffle_rng)) {
      std::vector<Graph> view1;
      std::vector<Graph> view2;
      view1.reserve(idx.size());
      view2.reserve(idx.size());
      for (size_t i : idx) {
        const Graph t = topology_only(corpus[i]);
        view1.push_back(node_drop ? random_node_drop(t, cfg.drop_prob, aug_rng)
                                  : random_edge_drop(t, cfg.drop_prob, aug_rng));
        view2.push_back(node_drop ? random_node_drop(t, cfg.drop_prob, aug_rng)
                                  : random_edge_drop(t, cfg.drop_prob, aug_rng));
      }
      GraphBatch b1 = batch_graphs(view1);
      GraphBatch b2 = batch_graphs(view2);

      Tape tape;
      TapeScope scope(tape);
      auto params = r.model.params();
      for (ParamRef& p : params) tape.watch(*p.tensor);
      Tensor z1 = forward(r.model, b1, nullptr, Mode::Training).graph_embeddings;
      Tensor z2 = forward(r.model, b2, nullptr, Mode::Training).graph_embeddings;
      Tensor loss = nt_xent(z1, z2, cfg.temperature);
      tape.backward(loss);
      adam_step(tensors_of(params), grads_of(tape, params), opt);

      loss_acc += loss.item();
      ++batches;
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    r.log.epochs.push_back(EpochLog{epoch, batches > 0 ? loss_acc / batches : 0.0,
                                    1.0 - static_cast<double>(cfg.drop_prob), secs});
  }
  return r;
}

}  // namespace topo
