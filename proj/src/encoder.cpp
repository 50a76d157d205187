#include "topo/encoder.hpp"

#include <stdexcept>

namespace topo {

void EncoderConfig::validate() const {
  if (num_layers < 1) throw std::invalid_argument("encoder config: num_layers must be >= 1");
  if (hidden_dim < 1) throw std::invalid_argument("encoder config: hidden_dim must be >= 1");
  if (projection_dim < 1) throw std::invalid_argument("encoder config: projection_dim must be >= 1");
}

// ---- Mlp --------------------------------------------------------------------

Mlp Mlp::make(const std::vector<int>& dims, Rng& rng) {
  Mlp m;
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    m.weights.push_back(glorot_uniform(dims[i], dims[i + 1], rng));
    m.biases.push_back(Tensor::zeros({1, dims[i + 1]}));
  }
  return m;
}

Tensor Mlp::forward(const Tensor& x) const {
  Tensor h = x;
  for (size_t i = 0; i < weights.size(); ++i) {
    h = add(matmul(h, weights[i]), biases[i]);
    if (i + 1 < weights.size()) h = relu(h);
  }
  return h;
}

void Mlp::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  for (size_t i = 0; i < weights.size(); ++i) {
    out.push_back({prefix + "." + std::to_string(i) + ".w", &weights[i]});
    out.push_back({prefix + "." + std::to_string(i) + ".b", &biases[i]});
  }
}

Mlp Mlp::clone() const {
  Mlp m;
  for (const Tensor& w : weights) m.weights.push_back(w.clone());
  for (const Tensor& b : biases) m.biases.push_back(b.clone());
  return m;
}

// ---- heads ---------------------------------------------------------------------

void InputHead::collect(std::vector<ParamRef>& out) {
  if (kind == InputKind::ConstantEmbedding) {
    out.push_back({"input.const", &const_node});
  } else {
    node_mlp.collect("input.node", out);
    if (edge_dim > 0) edge_mlp.collect("input.edge", out);
  }
}

InputHead InputHead::clone() const {
  InputHead h;
  h.kind = kind;
  h.node_dim = node_dim;
  h.edge_dim = edge_dim;
  if (const_node.defined()) h.const_node = const_node.clone();
  h.node_mlp = node_mlp.clone();
  h.edge_mlp = edge_mlp.clone();
  return h;
}

void OutputHead::collect(std::vector<ParamRef>& out) {
  if (kind == OutputKind::None) return;
  mlp.collect("output", out);
}

OutputHead OutputHead::clone() const {
  OutputHead h;
  h.kind = kind;
  h.num_classes = num_classes;
  h.mlp = mlp.clone();
  return h;
}

InputHead make_constant_head(const EncoderConfig& cfg, Rng& rng) {
  InputHead h;
  h.kind = InputKind::ConstantEmbedding;
  h.const_node = glorot_uniform(1, cfg.hidden_dim, rng);
  return h;
}

InputHead make_feature_head(const EncoderConfig& cfg, int node_dim, int edge_dim, Rng& rng) {
  if (node_dim < 1) throw std::invalid_argument("feature head: node_dim must be >= 1");
  InputHead h;
  h.kind = InputKind::FeatureMlp;
  h.node_dim = node_dim;
  h.edge_dim = edge_dim;
  h.node_mlp = Mlp::make({node_dim, cfg.hidden_dim, cfg.hidden_dim, cfg.hidden_dim}, rng);
  if (edge_dim > 0)
    h.edge_mlp = Mlp::make({edge_dim, cfg.hidden_dim, cfg.hidden_dim, cfg.hidden_dim}, rng);
  return h;
}

OutputHead make_projection_head(const EncoderConfig& cfg, Rng& rng) {
  OutputHead h;
  h.kind = OutputKind::Projection;
  h.mlp = Mlp::make({cfg.hidden_dim, cfg.hidden_dim, cfg.projection_dim}, rng);
  return h;
}

OutputHead make_task_graph_head(const EncoderConfig& cfg, Rng& rng) {
  OutputHead h;
  h.kind = OutputKind::TaskGraph;
  h.mlp = Mlp::make({cfg.hidden_dim, cfg.hidden_dim, 1}, rng);
  return h;
}

OutputHead make_task_node_head(const EncoderConfig& cfg, int num_classes, Rng& rng) {
  if (num_classes < 2) throw std::invalid_argument("node head: need >= 2 classes");
  OutputHead h;
  h.kind = OutputKind::TaskNode;
  h.num_classes = num_classes;
  h.mlp = Mlp::make({cfg.hidden_dim, num_classes}, rng);
  return h;
}

OutputHead make_task_edge_head(const EncoderConfig& cfg, Rng& rng) {
  OutputHead h;
  h.kind = OutputKind::TaskEdge;
  h.mlp = Mlp::make({2 * cfg.hidden_dim, 1}, rng);
  return h;
}

OutputHead make_none_head() {
  OutputHead h;
  h.kind = OutputKind::None;
  return h;
}

// ---- model -----------------------------------------------------------------------

namespace {

std::vector<GinLayer> make_layers(const EncoderConfig& cfg, Rng& rng) {
  std::vector<GinLayer> layers;
  layers.reserve(static_cast<size_t>(cfg.num_layers));
  for (int i = 0; i < cfg.num_layers; ++i) {
    GinLayer l;
    l.w1 = glorot_uniform(cfg.hidden_dim, cfg.hidden_dim, rng);
    l.b1 = Tensor::zeros({1, cfg.hidden_dim});
    l.w2 = glorot_uniform(cfg.hidden_dim, cfg.hidden_dim, rng);
    l.b2 = Tensor::zeros({1, cfg.hidden_dim});
    l.epsilon = Tensor::zeros({1});
    l.bn = BatchNormState::make(cfg.hidden_dim);
    layers.push_back(std::move(l));
  }
  return layers;
}

void collect_layers(const EncoderConfig& cfg, std::vector<GinLayer>& layers,
                    std::vector<ParamRef>& out) {
  for (size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "gin." + std::to_string(i);
    GinLayer& l = layers[i];
    out.push_back({p + ".lin1.w", &l.w1});
    out.push_back({p + ".lin1.b", &l.b1});
    if (cfg.batch_norm) {
      out.push_back({p + ".bn.gamma", &l.bn.gamma});
      out.push_back({p + ".bn.beta", &l.bn.beta});
    }
    out.push_back({p + ".lin2.w", &l.w2});
    out.push_back({p + ".lin2.b", &l.b2});
    if (cfg.epsilon_learnable) out.push_back({p + ".eps", &l.epsilon});
  }
}

GinLayer clone_layer(const GinLayer& l) {
  GinLayer c;
  c.w1 = l.w1.clone();
  c.b1 = l.b1.clone();
  c.w2 = l.w2.clone();
  c.b2 = l.b2.clone();
  c.epsilon = l.epsilon.clone();
  c.bn.gamma = l.bn.gamma.clone();
  c.bn.beta = l.bn.beta.clone();
  c.bn.running_mean = l.bn.running_mean.clone();
  c.bn.running_var = l.bn.running_var.clone();
  c.bn.momentum = l.bn.momentum;
  c.bn.eps = l.bn.eps;
  return c;
}

// Shared message-passing trunk for Model and ViewLearner.
Tensor gin_nodes(const EncoderConfig& cfg, InputHead& ih, std::vector<GinLayer>& layers,
                 const GraphBatch& b, const Tensor* edge_weights, Mode mode) {
  if (edge_weights != nullptr) {
    if (edge_weights->numel() != b.total_edges)
      throw std::invalid_argument("forward: " + std::to_string(edge_weights->numel()) +
                                  " edge weights for " + std::to_string(b.total_edges) + " edges");
    for (int i = 0; i < edge_weights->numel(); ++i) {
      const float w = (*edge_weights)[i];
      if (w < 0.0f || w > 1.0f)
        throw std::invalid_argument("forward: edge weight " + std::to_string(w) +
                                    " outside [0, 1]");
    }
  }

  Tensor h;
  Tensor edge_emb;
  if (ih.kind == InputKind::ConstantEmbedding) {
    h = gather_rows(ih.const_node, std::vector<int>(static_cast<size_t>(b.total_nodes), 0));
  } else {
    if (b.node_feat_dim == 0)
      throw std::invalid_argument("forward: feature input head on a featureless batch");
    if (b.node_feat_dim != ih.node_dim)
      throw std::invalid_argument("forward: batch node features have width " +
                                  std::to_string(b.node_feat_dim) + ", head wants " +
                                  std::to_string(ih.node_dim));
    Tensor feats({b.total_nodes, b.node_feat_dim}, b.node_feats);
    h = ih.node_mlp.forward(feats);
    if (ih.edge_dim > 0) {
      if (b.edge_feat_dim != ih.edge_dim)
        throw std::invalid_argument("forward: batch edge features have width " +
                                    std::to_string(b.edge_feat_dim) + ", head wants " +
                                    std::to_string(ih.edge_dim));
      if (b.total_edges > 0) {
        Tensor efeats({b.total_edges, b.edge_feat_dim}, b.edge_feats);
        edge_emb = ih.edge_mlp.forward(efeats);
      }
    }
  }

  Tensor w_col;
  if (edge_weights != nullptr && b.total_edges > 0) {
    w_col = edge_weights->reshaped({b.total_edges, 1});  // shared data and tape link
  }

  for (GinLayer& layer : layers) {
    Tensor agg;
    if (edge_emb.defined() && b.total_edges > 0) {
      // GINE-style message: relu(h_u + e_uv), optionally down-weighted.
      Tensor msgs = relu(add(gather_rows(h, b.edge_src), edge_emb));
      if (w_col.defined()) msgs = mul(msgs, w_col);
      agg = segment_sum(msgs, b.edge_dst, b.total_nodes);
    } else {
      agg = edge_aggregate(h, b.edge_src, b.edge_dst, w_col);
    }
    Tensor self = mul(h, add(layer.epsilon, 1.0f));
    Tensor z = add(self, agg);
    Tensor a1 = add(matmul(z, layer.w1), layer.b1);
    if (cfg.batch_norm) {
      layer.bn.training = (mode == Mode::Training);
      a1 = batch_norm(a1, layer.bn);
    }
    h = add(matmul(relu(a1), layer.w2), layer.b2);
  }
  return h;
}

}  // namespace

Tensor readout_graphs(const EncoderConfig& cfg, const Tensor& h, const GraphBatch& b) {
  Tensor pooled = segment_sum(h, b.node_to_graph, b.size());
  if (cfg.readout == Readout::Sum) return pooled;
  Tensor inv({b.size(), 1});
  for (int i = 0; i < b.size(); ++i) {
    const int n = b.graphs[static_cast<size_t>(i)].n;
    inv[i] = n > 0 ? 1.0f / static_cast<float>(n) : 0.0f;
  }
  return mul(pooled, inv);
}

std::vector<ParamRef> Model::params() {
  std::vector<ParamRef> out;
  input_head.collect(out);
  collect_layers(config, layers, out);
  output_head.collect(out);
  return out;
}

std::vector<ParamRef> Model::encoder_stack_params() {
  std::vector<ParamRef> out;
  collect_layers(config, layers, out);
  return out;
}

std::vector<ParamRef> Model::state_arrays() {
  std::vector<ParamRef> out = params();
  for (size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "gin." + std::to_string(i);
    out.push_back({p + ".bn.running_mean", &layers[i].bn.running_mean});
    out.push_back({p + ".bn.running_var", &layers[i].bn.running_var});
  }
  return out;
}

Model Model::clone() const {
  Model m;
  m.config = config;
  m.input_head = input_head.clone();
  m.output_head = output_head.clone();
  m.layers.reserve(layers.size());
  for (const GinLayer& l : layers) m.layers.push_back(clone_layer(l));
  return m;
}

Model build_model(const EncoderConfig& cfg, InputKind input_kind, uint64_t seed, int node_dim,
                  int edge_dim) {
  cfg.validate();
  Rng rng(seed);
  Model m;
  m.config = cfg;
  m.input_head = input_kind == InputKind::ConstantEmbedding
                     ? make_constant_head(cfg, rng)
                     : make_feature_head(cfg, node_dim, edge_dim, rng);
  m.layers = make_layers(cfg, rng);
  m.output_head = make_projection_head(cfg, rng);
  return m;
}

void swap_input_head(Model& m, InputHead head) {
  if (head.kind == InputKind::ConstantEmbedding) {
    if (head.const_node.cols() != m.config.hidden_dim)
      throw std::invalid_argument("swap_input_head: head width " +
                                  std::to_string(head.const_node.cols()) + " vs hidden_dim " +
                                  std::to_string(m.config.hidden_dim));
  } else {
    if (head.node_mlp.weights.back().cols() != m.config.hidden_dim)
      throw std::invalid_argument("swap_input_head: head output dim does not match hidden_dim");
  }
  m.input_head = std::move(head);
}

void swap_output_head(Model& m, OutputHead head) {
  if (head.kind != OutputKind::None) {
    const int in = head.mlp.weights.front().rows();
    const int want = head.kind == OutputKind::TaskEdge ? 2 * m.config.hidden_dim
                                                       : m.config.hidden_dim;
    if (in != want)
      throw std::invalid_argument("swap_output_head: head input dim " + std::to_string(in) +
                                  " vs " + std::to_string(want));
  }
  m.output_head = std::move(head);
}

Forward forward(Model& m, const GraphBatch& batch, const Tensor* edge_weights, Mode mode) {
  Forward f;
  f.node_embeddings = gin_nodes(m.config, m.input_head, m.layers, batch, edge_weights, mode);
  f.graph_embeddings = readout_graphs(m.config, f.node_embeddings, batch);
  if (m.output_head.kind == OutputKind::Projection || m.output_head.kind == OutputKind::TaskGraph)
    f.graph_embeddings = m.output_head.mlp.forward(f.graph_embeddings);
  return f;
}

Tensor apply_output_head(Model& m, const Tensor& x) {
  if (m.output_head.kind == OutputKind::None)
    throw std::logic_error("apply_output_head: model has no output head");
  return m.output_head.mlp.forward(x);
}

// ---- view learner ---------------------------------------------------------------

std::vector<ParamRef> ViewLearner::params() {
  std::vector<ParamRef> out;
  input_head.collect(out);
  collect_layers(config, layers, out);
  scorer.collect("scorer", out);
  for (ParamRef& p : out) p.name = "view." + p.name;
  return out;
}

std::vector<ParamRef> ViewLearner::state_arrays() {
  std::vector<ParamRef> out = params();
  for (size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "view.gin." + std::to_string(i);
    out.push_back({p + ".bn.running_mean", &layers[i].bn.running_mean});
    out.push_back({p + ".bn.running_var", &layers[i].bn.running_var});
  }
  return out;
}

ViewLearner ViewLearner::clone() const {
  ViewLearner v;
  v.config = config;
  v.input_head = input_head.clone();
  v.scorer = scorer.clone();
  v.layers.reserve(layers.size());
  for (const GinLayer& l : layers) v.layers.push_back(clone_layer(l));
  return v;
}

ViewLearner build_view_learner(const EncoderConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ViewLearner v;
  v.config = cfg;
  v.input_head = make_constant_head(cfg, rng);
  v.layers = make_layers(cfg, rng);
  v.scorer = Mlp::make({2 * cfg.hidden_dim, cfg.hidden_dim, 1}, rng);
  return v;
}

Tensor view_logits(ViewLearner& view, const GraphBatch& batch, Mode mode) {
  Tensor h = gin_nodes(view.config, view.input_head, view.layers, batch, nullptr, mode);
  Tensor pair = concat_cols(gather_rows(h, batch.edge_src), gather_rows(h, batch.edge_dst));
  Tensor raw = view.scorer.forward(pair);  // [M, 1]
  return scale(add(raw, gather_rows(raw, batch.reverse_edge)), 0.5f);
}

}  // namespace topo
