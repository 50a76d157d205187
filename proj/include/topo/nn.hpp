#pragma once

#include <vector>

#include "topo/rng.hpp"
#include "topo/tensor.hpp"

namespace topo {

/// Per-channel batch normalization state. gamma/beta are trainable; the
/// running statistics are buffers updated only in training mode.
struct BatchNormState {
  Tensor gamma;         // [1, d]
  Tensor beta;          // [1, d]
  Tensor running_mean;  // [1, d]
  Tensor running_var;   // [1, d]
  float momentum = 0.1f;
  float eps = 1e-5f;
  bool training = true;

  static BatchNormState make(int channels);
  int channels() const { return gamma.numel(); }
};

/// Batch normalization over the row dimension of x [n, d]. Training mode
/// normalizes with batch statistics (biased variance) and folds them into the
/// running estimates; inference mode uses the running statistics.
Tensor batch_norm(const Tensor& x, BatchNormState& state);

/// Adam with bias correction. m/v mirror the parameter list by position.
struct AdamState {
  int step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float lr = 0.001f;

  static AdamState make(const std::vector<Tensor*>& params, float lr = 0.001f);
};

/// One Adam update, in place. grads[i] pairs with params[i].
void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
               AdamState& state);

/// Glorot-uniform initialized weight matrix [fan_in, fan_out].
Tensor glorot_uniform(int fan_in, int fan_out, Rng& rng);

/// Rows scaled to unit L2 norm, with an eps guard against zero rows.
Tensor normalize_rows(const Tensor& x, float eps = 1e-8f);

/// log(sum(exp(x), rows)) computed against a detached row max -> [n, 1].
Tensor row_log_sum_exp(const Tensor& x);

Tensor mse_loss(const Tensor& pred, const Tensor& target);
/// mean(softplus(logit) - y * logit); y in {0, 1}.
Tensor binary_ce_with_logits(const Tensor& logits, const Tensor& targets);
/// Softmax cross-entropy over rows of logits [n, C] against class labels.
Tensor softmax_ce(const Tensor& logits, const std::vector<int>& labels);

}  // namespace topo
