#pragma once

#include <string>
#include <vector>

#include "topo/graph.hpp"
#include "topo/nn.hpp"
#include "topo/tensor.hpp"

namespace topo {

enum class InputKind { ConstantEmbedding, FeatureMlp };
enum class OutputKind { Projection, TaskGraph, TaskNode, TaskEdge, None };
enum class Readout { Mean, Sum };
enum class Mode { Training, Inference };

struct EncoderConfig {
  int num_layers = 6;
  int hidden_dim = 300;
  int projection_dim = 300;
  Readout readout = Readout::Mean;
  bool batch_norm = true;
  bool epsilon_learnable = true;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

/// Named handle on a model parameter; valid while the owning model is alive
/// and not moved.
struct ParamRef {
  std::string name;
  Tensor* tensor;
};

/// Plain MLP: linear layers with relu between (none after the last).
struct Mlp {
  std::vector<Tensor> weights;  // [in, out]
  std::vector<Tensor> biases;   // [1, out]

  static Mlp make(const std::vector<int>& dims, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
  Mlp clone() const;
  bool empty() const { return weights.empty(); }
};

/// First block of the model: either one learned vector shared by every node
/// (pre-training) or a 3-layer MLP per feature set (transfer).
struct InputHead {
  InputKind kind = InputKind::ConstantEmbedding;
  int node_dim = 0;  // feature case
  int edge_dim = 0;  // feature case; 0 = no edge MLP
  Tensor const_node;  // [1, hidden]
  Mlp node_mlp;
  Mlp edge_mlp;

  void collect(std::vector<ParamRef>& out);
  InputHead clone() const;
};

struct OutputHead {
  OutputKind kind = OutputKind::Projection;
  Mlp mlp;
  int num_classes = 0;  // TaskNode

  void collect(std::vector<ParamRef>& out);
  OutputHead clone() const;
};

struct GinLayer {
  Tensor w1, b1, w2, b2;
  Tensor epsilon;  // [1]
  BatchNormState bn;
};

/// GIN encoder with swappable heads. Move-only; use clone() for a deep copy.
struct Model {
  EncoderConfig config;
  InputHead input_head;
  std::vector<GinLayer> layers;
  OutputHead output_head;

  Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  /// Trainable parameters in stable, serialization-contract order.
  std::vector<ParamRef> params();
  /// GIN stack parameters only (both heads excluded).
  std::vector<ParamRef> encoder_stack_params();
  /// params() plus batch-norm running statistics, for serialization.
  std::vector<ParamRef> state_arrays();

  Model clone() const;
};

InputHead make_constant_head(const EncoderConfig& cfg, Rng& rng);
InputHead make_feature_head(const EncoderConfig& cfg, int node_dim, int edge_dim, Rng& rng);
OutputHead make_projection_head(const EncoderConfig& cfg, Rng& rng);
OutputHead make_task_graph_head(const EncoderConfig& cfg, Rng& rng);
OutputHead make_task_node_head(const EncoderConfig& cfg, int num_classes, Rng& rng);
OutputHead make_task_edge_head(const EncoderConfig& cfg, Rng& rng);
OutputHead make_none_head();

/// Fresh model: Glorot-uniform linear maps, epsilon 0, batch-norm gamma 1 /
/// beta 0, projection output head. Deterministic in the seed.
Model build_model(const EncoderConfig& cfg, InputKind input_kind, uint64_t seed,
                  int node_dim = 0, int edge_dim = 0);

/// Replaces one head; the encoder stack and the other head stay bitwise intact.
void swap_input_head(Model& m, InputHead head);
void swap_output_head(Model& m, OutputHead head);

struct Forward {
  Tensor node_embeddings;   // [N, hidden]
  Tensor graph_embeddings;  // readout, with projection/task head applied when set
};

/// Full pass. edge_weights, when given, has one value in [0, 1] per directed
/// edge and scales the incoming messages.
Forward forward(Model& m, const GraphBatch& batch, const Tensor* edge_weights, Mode mode);

/// Runs the model's output head on rows of x (node embeddings, readouts, or
/// concatenated endpoint pairs, depending on the head kind).
Tensor apply_output_head(Model& m, const Tensor& x);

/// Per-graph pooling of node embeddings (mean or sum per config).
Tensor readout_graphs(const EncoderConfig& cfg, const Tensor& node_embeddings,
                      const GraphBatch& batch);

/// The adversarial augmenter: an independent GIN stack plus an edge scorer on
/// concatenated endpoint embeddings.
struct ViewLearner {
  EncoderConfig config;
  InputHead input_head;
  std::vector<GinLayer> layers;
  Mlp scorer;  // [2*hidden -> hidden -> 1]

  ViewLearner() = default;
  ViewLearner(const ViewLearner&) = delete;
  ViewLearner& operator=(const ViewLearner&) = delete;
  ViewLearner(ViewLearner&&) = default;
  ViewLearner& operator=(ViewLearner&&) = default;

  std::vector<ParamRef> params();
  /// params() plus batch-norm running statistics, for serialization.
  std::vector<ParamRef> state_arrays();
  ViewLearner clone() const;
};

ViewLearner build_view_learner(const EncoderConfig& cfg, uint64_t seed);

/// One logit per directed edge; the two orientations of an undirected edge
/// are averaged so they share one effective logit.
Tensor view_logits(ViewLearner& view, const GraphBatch& batch, Mode mode = Mode::Training);

}  // namespace topo
