#pragma once

#include <functional>
#include <string>
#include <vector>

#include "topo/encoder.hpp"
#include "topo/graph.hpp"
#include "topo/nn.hpp"

namespace topo {

enum class PretrainMethod { Adgcl, GraphclEdge, GraphclNode };

std::string method_name(PretrainMethod m);
PretrainMethod method_from_name(const std::string& name);

struct PretrainConfig {
  PretrainMethod method = PretrainMethod::Adgcl;
  int epochs = 100;
  int batch_size = 512;
  float lr_encoder = 0.001f;
  float lr_view = 0.001f;
  float temperature = 0.2f;          // NT-Xent tau
  float drop_prob = 0.2f;            // graphcl random drop rate
  float reg_weight = 0.2f;           // adgcl drop-ratio penalty
  float concrete_temperature = 1.0f;
  uint64_t seed = 0;

  /// Returns a list of violated-field messages; empty when valid.
  std::vector<std::string> validate() const;
};

struct EpochLog {
  int epoch;
  double loss;
  double keep_prob;
  double seconds;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  uint64_t seed = 0;
  std::string corpus_digest;

  /// CSV with header epoch,loss,keep_prob,seconds.
  std::string to_csv() const;
};

// ---- contrastive loss and augmentations ------------------------------------

/// NT-Xent with a cross-view denominator: for row i,
/// l_i = -log(exp(s_ii/tau) / sum_j exp(s_ij/tau)), s = cosine similarity,
/// loss = mean_i l_i. Identical inputs give exactly log(B).
Tensor nt_xent(const Tensor& z1, const Tensor& z2, float temperature);

/// Removes each undirected edge independently with probability p.
Graph random_edge_drop(const Graph& g, double p, Rng& rng);
/// Removes each node independently with probability p (redrawing if nothing
/// survives), drops incident edges, renumbers.
Graph random_node_drop(const Graph& g, double p, Rng& rng);

/// Relaxed-Bernoulli keep weights: w = sigmoid((logit + log u - log(1-u)) / t)
/// with one uniform u per undirected edge, shared by both orientations.
/// `noise` carries the logistic noise per directed edge.
Tensor concrete_edge_weights_with_noise(const Tensor& logits, const Tensor& noise, float t);
Tensor concrete_edge_weights(const Tensor& logits, const GraphBatch& batch, float t, Rng& rng);
/// The logistic noise tensor used above; one draw per undirected edge.
Tensor concrete_noise(const GraphBatch& batch, Rng& rng);

/// Mean over graphs of the per-graph mean dropped fraction sum(1 - w) / M_g.
/// Edgeless graphs are excluded from the mean.
Tensor drop_ratio(const Tensor& weights, const GraphBatch& batch);

// ---- training loops -----------------------------------------------------------

struct PretrainResult {
  Model model;
  ViewLearner view;
  TrainLog log;
};

/// Test/observation hooks invoked around each AD-GCL batch.
struct AdgclHooks {
  std::function<void(int batch_index, Model&, ViewLearner&)> before_batch;
  std::function<void(int batch_index, Model&, ViewLearner&)> after_view_step;
  std::function<void(int batch_index, Model&, ViewLearner&)> after_batch;
};

struct ViewStepStats {
  double view_loss;
  double mean_keep_prob;
};

struct EncoderStepStats {
  double contrastive_loss;
  double mean_keep_prob;
};

/// One adversarial update of the view learner only: minimizes
/// -nt_xent + reg_weight * drop_ratio over theta.
ViewStepStats view_learner_step(Model& model, ViewLearner& view, const GraphBatch& batch,
                                const PretrainConfig& cfg, AdamState& opt_view, Rng& noise_rng);

/// One contrastive update of the encoder + projection only, against fresh
/// concrete noise through the current view learner.
EncoderStepStats encoder_step(Model& model, ViewLearner& view, const GraphBatch& batch,
                              const PretrainConfig& cfg, AdamState& opt_encoder, Rng& noise_rng);

/// Full AD-GCL pre-training on a featureless rendering of the corpus.
PretrainResult train_adgcl(const std::vector<Graph>& corpus, const EncoderConfig& enc_cfg,
                           const PretrainConfig& cfg, const AdgclHooks* hooks = nullptr);

/// GraphCL-style pre-training: two independent random augmentations per graph,
/// NT-Xent between their projections, one optimizer step per batch.
PretrainResult train_graphcl(const std::vector<Graph>& corpus, const EncoderConfig& enc_cfg,
                             const PretrainConfig& cfg);

/// Copy of g with features, labels and target stripped (topology plus domain).
Graph topology_only(const Graph& g);

/// Shuffled index batches; a trailing singleton batch is dropped (NT-Xent
/// needs at least two graphs).
std::vector<std::vector<size_t>> epoch_batches(size_t count, int batch_size, Rng& rng);

}  // namespace topo
