#include "topo/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace topo {

BatchNormState BatchNormState::make(int channels) {
  BatchNormState s;
  s.gamma = Tensor::ones({1, channels});
  s.beta = Tensor::zeros({1, channels});
  s.running_mean = Tensor::zeros({1, channels});
  s.running_var = Tensor::ones({1, channels});
  return s;
}

Tensor batch_norm(const Tensor& x, BatchNormState& state) {
  if (x.rank() != 2 || x.dim(1) != state.channels())
    throw std::invalid_argument("batch_norm: input " + shape_str(x.shape()) + " vs " +
                                std::to_string(state.channels()) + " channels");
  const int n = x.dim(0);
  const int d = x.dim(1);
  if (n < 1) throw std::invalid_argument("batch_norm: empty batch");

  if (!state.training) {
    // y = gamma * (x - rm) / sqrt(rv + eps) + beta, affine in x.
    Tensor scale_row({1, d});
    Tensor shift_row({1, d});
    for (int c = 0; c < d; ++c) {
      const float inv = 1.0f / std::sqrt(state.running_var[c] + state.eps);
      scale_row[c] = inv;
      shift_row[c] = -state.running_mean[c] * inv;
    }
    Tensor xhat = add(mul(x, scale_row), shift_row);
    return add(mul(xhat, state.gamma), state.beta);
  }

  // Batch statistics (biased variance), computed outside the tape; the
  // gradient is handled by the closed-form batch-norm backward below.
  Tensor mu({1, d});
  Tensor var({1, d});
  for (int c = 0; c < d; ++c) {
    float m = 0.0f;
    for (int r = 0; r < n; ++r) m += x.at(r, c);
    m /= static_cast<float>(n);
    float v = 0.0f;
    for (int r = 0; r < n; ++r) {
      const float t = x.at(r, c) - m;
      v += t * t;
    }
    v /= static_cast<float>(n);
    mu[c] = m;
    var[c] = v;
  }
  for (int c = 0; c < d; ++c) {
    state.running_mean[c] =
        (1.0f - state.momentum) * state.running_mean[c] + state.momentum * mu[c];
    state.running_var[c] =
        (1.0f - state.momentum) * state.running_var[c] + state.momentum * var[c];
  }

  Tensor inv_std({1, d});
  for (int c = 0; c < d; ++c) inv_std[c] = 1.0f / std::sqrt(var[c] + state.eps);

  Tensor xhat({n, d});
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < d; ++c) xhat[r * d + c] = (x.at(r, c) - mu[c]) * inv_std[c];

  Tensor out({n, d});
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < d; ++c)
      out[r * d + c] = state.gamma[c] * xhat[r * d + c] + state.beta[c];

  const int xid = x.attached() ? x.tape_id() : -1;
  const int gid = state.gamma.attached() ? state.gamma.tape_id() : -1;
  const int bid = state.beta.attached() ? state.beta.tape_id() : -1;
  if (Tape* tp = active_tape(); tp != nullptr && (xid >= 0 || gid >= 0 || bid >= 0)) {
    Tensor gamma = state.gamma;
    tp->record(out, [xid, gid, bid, gamma, xhat, inv_std, n, d](const Tensor& g, Tape& t) {
      if (gid >= 0) {
        Tensor dg({1, d});
        for (int c = 0; c < d; ++c) {
          float acc = 0.0f;
          for (int r = 0; r < n; ++r) acc += g.at(r, c) * xhat.at(r, c);
          dg[c] = acc;
        }
        t.accumulate(gid, dg);
      }
      if (bid >= 0) {
        Tensor db({1, d});
        for (int c = 0; c < d; ++c) {
          float acc = 0.0f;
          for (int r = 0; r < n; ++r) acc += g.at(r, c);
          db[c] = acc;
        }
        t.accumulate(bid, db);
      }
      if (xid >= 0) {
        // dx = gamma * inv_std * (g - mean(g) - xhat * mean(g * xhat))
        Tensor dx({n, d});
        for (int c = 0; c < d; ++c) {
          float gsum = 0.0f;
          float gxsum = 0.0f;
          for (int r = 0; r < n; ++r) {
            gsum += g.at(r, c);
            gxsum += g.at(r, c) * xhat.at(r, c);
          }
          const float gmean = gsum / static_cast<float>(n);
          const float gxmean = gxsum / static_cast<float>(n);
          const float k = gamma[c] * inv_std[c];
          for (int r = 0; r < n; ++r)
            dx[r * d + c] = k * (g.at(r, c) - gmean - xhat.at(r, c) * gxmean);
        }
        t.accumulate(xid, dx);
      }
    });
  }
  return out;
}

AdamState AdamState::make(const std::vector<Tensor*>& params, float lr) {
  AdamState s;
  s.lr = lr;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const Tensor* p : params) {
    s.m.emplace_back(Tensor(p->shape()));
    s.v.emplace_back(Tensor(p->shape()));
  }
  return s;
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
               AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: got " + std::to_string(params.size()) + " params, " +
                                std::to_string(grads.size()) + " grads, state for " +
                                std::to_string(state.m.size()));
  state.step += 1;
  const float bc1 = 1.0f - std::pow(state.beta1, static_cast<float>(state.step));
  const float bc2 = 1.0f - std::pow(state.beta2, static_cast<float>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    if (g.numel() != p.numel())
      throw std::invalid_argument("adam_step: grad " + shape_str(g.shape()) +
                                  " vs param " + shape_str(p.shape()));
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (int j = 0; j < p.numel(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0f - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0f - state.beta2) * g[j] * g[j];
      const float mhat = m[j] / bc1;
      const float vhat = v[j] / bc2;
      p[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

Tensor glorot_uniform(int fan_in, int fan_out, Rng& rng) {
  const float limit = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
  Tensor w({fan_in, fan_out});
  for (int i = 0; i < w.numel(); ++i)
    w[i] = static_cast<float>(rng.uniform(-limit, limit));
  return w;
}

Tensor normalize_rows(const Tensor& x, float eps) {
  Tensor norms = sqrt(row_sum(mul(x, x)));
  return div(x, add(norms, eps));
}

Tensor row_log_sum_exp(const Tensor& x) {
  Tensor m = row_max(x);  // detached
  return add(log(row_sum(exp(sub(x, m)))), m);
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.numel() != target.numel())
    throw std::invalid_argument("mse_loss: " + shape_str(pred.shape()) + " vs " +
                                shape_str(target.shape()));
  Tensor d = sub(pred, target);
  return mean(mul(d, d));
}

Tensor binary_ce_with_logits(const Tensor& logits, const Tensor& targets) {
  if (logits.numel() != targets.numel())
    throw std::invalid_argument("binary_ce_with_logits: " + shape_str(logits.shape()) + " vs " +
                                shape_str(targets.shape()));
  return mean(sub(softplus(logits), mul(logits, targets)));
}

Tensor softmax_ce(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2 || static_cast<size_t>(logits.dim(0)) != labels.size())
    throw std::invalid_argument("softmax_ce: logits " + shape_str(logits.shape()) + " vs " +
                                std::to_string(labels.size()) + " labels");
  const int n = logits.dim(0);
  const int k = logits.dim(1);
  Tensor onehot({n, k});
  for (int i = 0; i < n; ++i) {
    const int y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= k)
      throw std::out_of_range("softmax_ce: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(k) + ")");
    onehot[i * k + y] = 1.0f;
  }
  Tensor lse = row_log_sum_exp(logits);
  Tensor picked = row_sum(mul(logits, onehot));
  return mean(sub(lse, picked));
}

}  // namespace topo
