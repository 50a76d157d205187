#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace topo {

class Tape;

/// Dense row-major f32 tensor. Copies share the underlying buffer; a tensor
/// is linked into the active gradient tape via (tape_serial, tape_id).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<float> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, float value);
  static Tensor ones(std::vector<int> shape) { return full(std::move(shape), 1.0f); }
  static Tensor scalar(float value) { return Tensor({1}, {value}); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  /// Rows/cols of a rank-2 tensor; rank-1 is treated as a single row.
  int rows() const;
  int cols() const;
  int numel() const { return numel_; }
  bool is_scalar() const { return numel_ == 1; }

  float* data() { return data_->data(); }
  const float* data() const { return data_->data(); }
  float operator[](int i) const { return (*data_)[static_cast<size_t>(i)]; }
  float& operator[](int i) { return (*data_)[static_cast<size_t>(i)]; }
  float at(int r, int c) const { return (*data_)[static_cast<size_t>(r) * cols() + c]; }

  /// Scalar value; throws if numel != 1.
  float item() const;

  bool defined() const { return data_ != nullptr; }
  int tape_id() const { return tape_id_; }
  /// Same buffer and tape link under a new shape with equal numel.
  Tensor reshaped(std::vector<int> shape) const;
  /// Same buffer, no tape link.
  Tensor detached() const;
  /// Deep copy of the buffer (detached).
  Tensor clone() const;

  /// True when this tensor is linked into the currently active tape.
  bool attached() const;

 private:
  std::vector<int> shape_;
  int numel_ = 0;
  std::shared_ptr<std::vector<float>> data_;
  uint64_t tape_serial_ = 0;
  int tape_id_ = -1;

  friend class Tape;
};

std::string shape_str(const std::vector<int>& shape);

/// Reverse-mode gradient tape. Records one node per primitive op, in
/// execution order; backward() walks the record in reverse. One tape per
/// forward/backward pass.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  uint64_t serial() const { return serial_; }
  size_t size() const { return nodes_.size(); }

  /// Marks a leaf (typically a parameter) so backward() reports its gradient.
  void watch(Tensor& t);

  /// Assigns an id to `out` and records its backward closure. Called by ops.
  void record(Tensor& out, std::function<void(const Tensor&, Tape&)> backward);

  /// Accumulates a gradient contribution into slot `id`. No-op for id < 0.
  void accumulate(int id, const Tensor& g);

  /// Reverse sweep from a scalar loss. Populates gradients for every watched
  /// leaf (zeros when the leaf does not reach the loss).
  void backward(const Tensor& loss);

  /// Gradient of `t`, or nullptr when none was produced.
  const Tensor* grad(const Tensor& t) const;
  Tensor grad_or_zeros(const Tensor& t) const;

 private:
  struct Node {
    int output;
    std::function<void(const Tensor&, Tape&)> backward;
  };

  int assign_id(Tensor& t);

  uint64_t serial_;
  std::vector<Node> nodes_;
  std::vector<Tensor> values_;   // by id
  std::vector<Tensor> grads_;    // by id; undefined Tensor = no gradient
  std::vector<int> watched_;
};

/// RAII activation of a tape for the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

Tape* active_tape();

// ---- primitive ops ------------------------------------------------------
// Each op computes in f32 and records itself on the active tape when any
// tensor input is attached.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, float b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, float b);
Tensor sub(float a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, float b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, float b);
/// Alias of mul(a, s).
Tensor scale(const Tensor& a, float s);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
/// log(1 + e^x), evaluated in overflow-safe form; gradient is sigmoid(x).
Tensor softplus(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Row-wise sum of a rank-2 tensor -> [n, 1].
Tensor row_sum(const Tensor& a);
/// Row-wise max -> [n, 1]. Always detached (treated as a constant).
Tensor row_max(const Tensor& a);

/// out[i] = a[ids[i]], rows gathered from a rank-2 tensor.
Tensor gather_rows(const Tensor& a, const std::vector<int>& ids);
/// out[s] = sum of rows of `values` whose id == s; empty segments are zero.
Tensor segment_sum(const Tensor& values, const std::vector<int>& segment_ids,
                   int num_segments);
/// out[dst[e]] += w[e] * h[src[e]] without materialising per-edge messages.
/// Pass an empty weight tensor for unweighted aggregation.
Tensor edge_aggregate(const Tensor& h, const std::vector<int>& src,
                      const std::vector<int>& dst, const Tensor& w);
Tensor concat_cols(const Tensor& a, const Tensor& b);

}  // namespace topo
