#include "topo/tensor.hpp"

#include <Eigen/Core>

#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace topo {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ArrMap = Eigen::Map<Eigen::ArrayXf>;
using ConstArrMap = Eigen::Map<const Eigen::ArrayXf>;

thread_local Tape* g_active_tape = nullptr;

std::atomic<uint64_t> g_tape_serial{1};

int checked_numel(const std::vector<int>& shape) {
  long long n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("tensor: negative dimension in " + shape_str(shape));
    n *= d;
  }
  if (n > (1LL << 31) - 1) throw std::invalid_argument("tensor: too large: " + shape_str(shape));
  return static_cast<int>(n);
}

ConstMatMap mat(const Tensor& t) { return ConstMatMap(t.data(), t.rows(), t.cols()); }
MatMap mat(Tensor& t) { return MatMap(t.data(), t.rows(), t.cols()); }
ConstArrMap arr(const Tensor& t) { return ConstArrMap(t.data(), t.numel()); }
ArrMap arr(Tensor& t) { return ArrMap(t.data(), t.numel()); }

// Tape id of t, but only when t is linked into the currently active tape.
int live_id(const Tensor& t) { return t.attached() ? t.tape_id() : -1; }

// Broadcast pattern of operand b against a.
enum class Bcast { Same, BScalar, BCol, BRow };

Bcast bcast_of(const Tensor& a, const Tensor& b, const char* op) {
  if (a.numel() == b.numel()) return Bcast::Same;
  if (b.numel() == 1) return Bcast::BScalar;
  if (a.rank() == 2) {
    if (b.rank() == 2 && b.dim(0) == a.dim(0) && b.dim(1) == 1) return Bcast::BCol;
    if (b.numel() == a.dim(1)) return Bcast::BRow;
  }
  throw std::invalid_argument(std::string(op) + ": shape mismatch: " + shape_str(a.shape()) +
                              " vs " + shape_str(b.shape()));
}

// Value of b seen by element i of a under the broadcast pattern.
inline float bval(const float* pb, Bcast bc, int i, int cols) {
  switch (bc) {
    case Bcast::Same: return pb[i];
    case Bcast::BScalar: return pb[0];
    case Bcast::BCol: return pb[i / cols];
    case Bcast::BRow: return pb[i % cols];
  }
  return 0.0f;
}

// Sum a gradient of a's shape down to b's broadcast shape.
Tensor reduce_to_b(const Tensor& full, const Tensor& b_like, Bcast bc, int rows, int cols) {
  Tensor g(b_like.shape());
  const float* p = full.data();
  float* q = g.data();
  switch (bc) {
    case Bcast::Same:
      arr(g) = arr(full);
      break;
    case Bcast::BScalar:
      q[0] = arr(full).sum();
      break;
    case Bcast::BCol:
      for (int r = 0; r < rows; ++r) {
        float acc = 0.0f;
        for (int c = 0; c < cols; ++c) acc += p[r * cols + c];
        q[r] = acc;
      }
      break;
    case Bcast::BRow:
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) q[c] += p[r * cols + c];
      break;
  }
  return g;
}

void maybe_record(Tensor& out, bool any_attached,
                  std::function<void(const Tensor&, Tape&)> backward) {
  Tape* tp = active_tape();
  if (tp != nullptr && any_attached) tp->record(out, std::move(backward));
}

void segment_sum_into(float* out, const float* values, const std::vector<int>& ids,
                      int num_segments, int cols) {
  for (size_t i = 0; i < ids.size(); ++i) {
    const int s = ids[i];
    if (s < 0 || s >= num_segments)
      throw std::out_of_range("segment_sum: id " + std::to_string(s) + " outside [0, " +
                              std::to_string(num_segments) + ")");
    const float* row = values + i * static_cast<size_t>(cols);
    float* dst = out + static_cast<size_t>(s) * cols;
    for (int c = 0; c < cols; ++c) dst[c] += row[c];
  }
}

template <typename F, typename G>
Tensor unary_op(const Tensor& a, F f, G grad_of) {
  Tensor out(a.shape());
  const float* pa = a.data();
  float* po = out.data();
  for (int i = 0; i < a.numel(); ++i) po[i] = f(pa[i]);
  const int aid = live_id(a);
  maybe_record(out, aid >= 0, [a, aid, grad_of](const Tensor& g, Tape& t) {
    Tensor da(a.shape());
    const float* pg = g.data();
    const float* pa2 = a.data();
    float* pd = da.data();
    for (int i = 0; i < a.numel(); ++i) pd[i] = pg[i] * grad_of(pa2[i]);
    t.accumulate(aid, da);
  });
  return out;
}

// Broadcasting binary op; da_of/db_of give the per-element partials.
template <typename F, typename DA, typename DB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, F f, DA da_of, DB db_of) {
  const Bcast bc = bcast_of(a, b, name);
  Tensor out(a.shape());
  {
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
    const int n = a.numel();
    const int c = a.cols();
    for (int i = 0; i < n; ++i) po[i] = f(pa[i], bval(pb, bc, i, c));
  }
  const int aid = live_id(a);
  const int bid = live_id(b);
  maybe_record(out, aid >= 0 || bid >= 0,
               [a, b, aid, bid, bc, da_of, db_of](const Tensor& g, Tape& t) {
                 const int rows = a.rows();
                 const int cols = a.cols();
                 const int n = a.numel();
                 const float* pg = g.data();
                 const float* pa = a.data();
                 const float* pb = b.data();
                 if (aid >= 0) {
                   Tensor da(a.shape());
                   float* pd = da.data();
                   for (int i = 0; i < n; ++i)
                     pd[i] = pg[i] * da_of(pa[i], bval(pb, bc, i, cols));
                   t.accumulate(aid, da);
                 }
                 if (bid >= 0) {
                   Tensor full(a.shape());
                   float* pf = full.data();
                   for (int i = 0; i < n; ++i)
                     pf[i] = pg[i] * db_of(pa[i], bval(pb, bc, i, cols));
                   t.accumulate(bid, reduce_to_b(full, b, bc, rows, cols));
                 }
               });
  return out;
}

float stable_sigmoid(float x) {
  if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
  const float e = std::exp(x);
  return e / (1.0f + e);
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)),
      numel_(checked_numel(shape_)),
      data_(std::make_shared<std::vector<float>>(static_cast<size_t>(numel_), 0.0f)) {}

Tensor::Tensor(std::vector<int> shape, std::vector<float> data)
    : shape_(std::move(shape)), numel_(checked_numel(shape_)) {
  if (static_cast<size_t>(numel_) != data.size())
    throw std::invalid_argument("tensor: shape " + shape_str(shape_) + " wants " +
                                std::to_string(numel_) + " values, got " +
                                std::to_string(data.size()));
  data_ = std::make_shared<std::vector<float>>(std::move(data));
}

Tensor Tensor::full(std::vector<int> shape, float value) {
  Tensor t(std::move(shape));
  std::fill(t.data_->begin(), t.data_->end(), value);
  return t;
}

int Tensor::rows() const { return rank() >= 2 ? shape_[0] : 1; }

int Tensor::cols() const {
  if (rank() == 0) return 1;
  return rank() >= 2 ? shape_[1] : shape_[0];
}

float Tensor::item() const {
  if (numel_ != 1) throw std::logic_error("item(): tensor has " + std::to_string(numel_) + " elements");
  return (*data_)[0];
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  if (checked_numel(shape) != numel_)
    throw std::invalid_argument("reshaped: " + shape_str(shape) + " does not hold " +
                                std::to_string(numel_) + " elements");
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

Tensor Tensor::detached() const {
  Tensor t = *this;
  t.tape_serial_ = 0;
  t.tape_id_ = -1;
  return t;
}

Tensor Tensor::clone() const {
  Tensor t;
  t.shape_ = shape_;
  t.numel_ = numel_;
  t.data_ = std::make_shared<std::vector<float>>(*data_);
  return t;
}

bool Tensor::attached() const {
  Tape* tp = active_tape();
  return tp != nullptr && tape_id_ >= 0 && tape_serial_ == tp->serial();
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

// ---- Tape -------------------------------------------------------------------

Tape::Tape() : serial_(g_tape_serial.fetch_add(1)) {}

int Tape::assign_id(Tensor& t) {
  t.tape_serial_ = serial_;
  t.tape_id_ = static_cast<int>(values_.size());
  values_.push_back(t);
  grads_.emplace_back();
  return t.tape_id_;
}

void Tape::watch(Tensor& t) {
  if (!t.defined()) throw std::logic_error("watch(): undefined tensor");
  if (t.tape_serial_ == serial_ && t.tape_id_ >= 0) return;
  watched_.push_back(assign_id(t));
}

void Tape::record(Tensor& out, std::function<void(const Tensor&, Tape&)> backward) {
  int id = assign_id(out);
  nodes_.push_back(Node{id, std::move(backward)});
}

void Tape::accumulate(int id, const Tensor& g) {
  if (id < 0) return;
  Tensor& slot = grads_[static_cast<size_t>(id)];
  const Tensor& v = values_[static_cast<size_t>(id)];
  if (g.numel() != v.numel())
    throw std::logic_error("gradient shape " + shape_str(g.shape()) + " does not match value " +
                           shape_str(v.shape()));
  if (!slot.defined()) {
    slot = Tensor(v.shape());
    arr(slot) = ConstArrMap(g.data(), g.numel());
  } else {
    arr(slot) += ConstArrMap(g.data(), g.numel());
  }
}

void Tape::backward(const Tensor& loss) {
  if (!loss.is_scalar())
    throw std::logic_error("backward(): loss must be scalar, got " + shape_str(loss.shape()));
  if (loss.tape_serial_ != serial_ || loss.tape_id_ < 0)
    throw std::logic_error("backward(): loss is not attached to this tape");
  grads_[static_cast<size_t>(loss.tape_id_)] = Tensor::ones(loss.shape());
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    const Tensor& g = grads_[static_cast<size_t>(it->output)];
    if (g.defined()) it->backward(g, *this);
  }
  for (int id : watched_) {
    Tensor& slot = grads_[static_cast<size_t>(id)];
    if (!slot.defined()) slot = Tensor(values_[static_cast<size_t>(id)].shape());
  }
}

const Tensor* Tape::grad(const Tensor& t) const {
  if (t.tape_serial_ != serial_ || t.tape_id_ < 0) return nullptr;
  const Tensor& g = grads_[static_cast<size_t>(t.tape_id_)];
  return g.defined() ? &g : nullptr;
}

Tensor Tape::grad_or_zeros(const Tensor& t) const {
  const Tensor* g = grad(t);
  return g != nullptr ? *g : Tensor(t.shape());
}

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

Tape* active_tape() { return g_active_tape; }

// ---- ops --------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  Tensor out({a.dim(0), b.dim(1)});
  mat(out).noalias() = mat(a) * mat(b);
  const int aid = live_id(a);
  const int bid = live_id(b);
  maybe_record(out, aid >= 0 || bid >= 0, [a, b, aid, bid](const Tensor& g, Tape& t) {
    if (aid >= 0) {
      Tensor da({a.dim(0), a.dim(1)});
      mat(da).noalias() = mat(g) * mat(b).transpose();
      t.accumulate(aid, da);
    }
    if (bid >= 0) {
      Tensor db({b.dim(0), b.dim(1)});
      mat(db).noalias() = mat(a).transpose() * mat(g);
      t.accumulate(bid, db);
    }
  });
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw std::invalid_argument("transpose: want rank 2, got " + shape_str(a.shape()));
  Tensor out({a.dim(1), a.dim(0)});
  mat(out) = mat(a).transpose();
  const int aid = live_id(a);
  maybe_record(out, aid >= 0, [a, aid](const Tensor& g, Tape& t) {
    Tensor da({a.dim(0), a.dim(1)});
    mat(da) = mat(g).transpose();
    t.accumulate(aid, da);
  });
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](float x, float y) { return x + y; }, [](float, float) { return 1.0f; },
      [](float, float) { return 1.0f; });
}

Tensor add(const Tensor& a, float b) {
  return unary_op(
      a, [b](float x) { return x + b; }, [](float) { return 1.0f; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](float x, float y) { return x - y; }, [](float, float) { return 1.0f; },
      [](float, float) { return -1.0f; });
}

Tensor sub(const Tensor& a, float b) { return add(a, -b); }

Tensor sub(float a, const Tensor& b) {
  return unary_op(
      b, [a](float x) { return a - x; }, [](float) { return -1.0f; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](float x, float y) { return x * y; }, [](float, float y) { return y; },
      [](float x, float) { return x; });
}

Tensor mul(const Tensor& a, float b) {
  return unary_op(
      a, [b](float x) { return x * b; }, [b](float) { return b; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](float x, float y) { return x / y; },
      [](float, float y) { return 1.0f / y; },
      [](float x, float y) { return -x / (y * y); });
}

Tensor div(const Tensor& a, float b) { return mul(a, 1.0f / b); }

Tensor scale(const Tensor& a, float s) { return mul(a, s); }

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](float x) { return x > 0.0f ? x : 0.0f; },
      [](float x) { return x > 0.0f ? 1.0f : 0.0f; });
}

Tensor sigmoid(const Tensor& a) {
  Tensor out(a.shape());
  const float* pa = a.data();
  float* po = out.data();
  for (int i = 0; i < a.numel(); ++i) po[i] = stable_sigmoid(pa[i]);
  const int aid = live_id(a);
  maybe_record(out, aid >= 0, [a, aid, out](const Tensor& g, Tape& t) {
    Tensor da(a.shape());
    const float* pg = g.data();
    const float* ps = out.data();
    float* pd = da.data();
    for (int i = 0; i < a.numel(); ++i) pd[i] = pg[i] * ps[i] * (1.0f - ps[i]);
    t.accumulate(aid, da);
  });
  return out;
}

Tensor exp(const Tensor& a) {
  Tensor out(a.shape());
  const float* pa = a.data();
  float* po = out.data();
  for (int i = 0; i < a.numel(); ++i) po[i] = std::exp(pa[i]);
  const int aid = live_id(a);
  maybe_record(out, aid >= 0, [a, aid, out](const Tensor& g, Tape& t) {
    Tensor da(a.shape());
    const float* pg = g.data();
    const float* pe = out.data();
    float* pd = da.data();
    for (int i = 0; i < a.numel(); ++i) pd[i] = pg[i] * pe[i];
    t.accumulate(aid, da);
  });
  return out;
}

Tensor log(const Tensor& a) {
  for (int i = 0; i < a.numel(); ++i)
    if (a[i] <= 0.0f)
      throw std::domain_error("log: non-positive input " + std::to_string(a[i]) + " at index " +
                              std::to_string(i));
  return unary_op(
      a, [](float x) { return std::log(x); }, [](float x) { return 1.0f / x; });
}

Tensor sqrt(const Tensor& a) {
  for (int i = 0; i < a.numel(); ++i)
    if (a[i] < 0.0f)
      throw std::domain_error("sqrt: negative input " + std::to_string(a[i]) + " at index " +
                              std::to_string(i));
  return unary_op(
      a, [](float x) { return std::sqrt(x); },
      [](float x) { return 0.5f / std::sqrt(x > 0.0f ? x : 1e-12f); });
}

Tensor softplus(const Tensor& a) {
  return unary_op(
      a,
      [](float x) { return x > 0.0f ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](float x) { return stable_sigmoid(x); });
}

Tensor sum(const Tensor& a) {
  Tensor out = Tensor::scalar(arr(a).sum());
  const int aid = live_id(a);
  maybe_record(out, aid >= 0, [a, aid](const Tensor& g, Tape& t) {
    t.accumulate(aid, Tensor::full(a.shape(), g[0]));
  });
  return out;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0f / static_cast<float>(a.numel())); }

Tensor row_sum(const Tensor& a) {
  if (a.rank() != 2) throw std::invalid_argument("row_sum: want rank 2, got " + shape_str(a.shape()));
  const int r = a.dim(0);
  const int c = a.dim(1);
  Tensor out({r, 1});
  for (int i = 0; i < r; ++i) {
    float acc = 0.0f;
    const float* row = a.data() + static_cast<size_t>(i) * c;
    for (int j = 0; j < c; ++j) acc += row[j];
    out[i] = acc;
  }
  const int aid = live_id(a);
  maybe_record(out, aid >= 0, [aid, r, c](const Tensor& g, Tape& t) {
    Tensor da({r, c});
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) da[i * c + j] = g[i];
    t.accumulate(aid, da);
  });
  return out;
}

Tensor row_max(const Tensor& a) {
  if (a.rank() != 2) throw std::invalid_argument("row_max: want rank 2, got " + shape_str(a.shape()));
  const int r = a.dim(0);
  const int c = a.dim(1);
  if (c == 0) throw std::invalid_argument("row_max: empty rows");
  Tensor out({r, 1});
  for (int i = 0; i < r; ++i) {
    const float* row = a.data() + static_cast<size_t>(i) * c;
    float m = row[0];
    for (int j = 1; j < c; ++j) m = std::max(m, row[j]);
    out[i] = m;
  }
  return out;  // constant w.r.t. the tape
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& ids) {
  if (a.rank() != 2) throw std::invalid_argument("gather_rows: want rank 2, got " + shape_str(a.shape()));
  const int s = a.dim(0);
  const int c = a.dim(1);
  for (int id : ids)
    if (id < 0 || id >= s)
      throw std::out_of_range("gather_rows: id " + std::to_string(id) + " outside [0, " +
                              std::to_string(s) + ")");
  Tensor out({static_cast<int>(ids.size()), c});
  for (size_t i = 0; i < ids.size(); ++i)
    std::copy_n(a.data() + static_cast<size_t>(ids[i]) * c, c, out.data() + i * c);
  const int aid = live_id(a);
  maybe_record(out, aid >= 0, [aid, ids, s, c](const Tensor& g, Tape& t) {
    Tensor da({s, c});
    segment_sum_into(da.data(), g.data(), ids, s, c);
    t.accumulate(aid, da);
  });
  return out;
}

Tensor segment_sum(const Tensor& values, const std::vector<int>& segment_ids, int num_segments) {
  if (values.rank() != 2)
    throw std::invalid_argument("segment_sum: want rank 2, got " + shape_str(values.shape()));
  if (static_cast<size_t>(values.dim(0)) != segment_ids.size())
    throw std::invalid_argument("segment_sum: " + std::to_string(values.dim(0)) + " rows vs " +
                                std::to_string(segment_ids.size()) + " ids");
  const int c = values.dim(1);
  Tensor out({num_segments, c});
  segment_sum_into(out.data(), values.data(), segment_ids, num_segments, c);
  const int vid = live_id(values);
  maybe_record(out, vid >= 0, [vid, segment_ids, c](const Tensor& g, Tape& t) {
    const int rows = static_cast<int>(segment_ids.size());
    Tensor da({rows, c});
    for (int i = 0; i < rows; ++i)
      std::copy_n(g.data() + static_cast<size_t>(segment_ids[static_cast<size_t>(i)]) * c, c,
                  da.data() + static_cast<size_t>(i) * c);
    t.accumulate(vid, da);
  });
  return out;
}

Tensor edge_aggregate(const Tensor& h, const std::vector<int>& src, const std::vector<int>& dst,
                      const Tensor& w) {
  if (h.rank() != 2)
    throw std::invalid_argument("edge_aggregate: want rank 2, got " + shape_str(h.shape()));
  if (src.size() != dst.size())
    throw std::invalid_argument("edge_aggregate: src/dst length mismatch");
  const bool weighted = w.defined();
  if (weighted && static_cast<size_t>(w.numel()) != src.size())
    throw std::invalid_argument("edge_aggregate: " + std::to_string(w.numel()) + " weights vs " +
                                std::to_string(src.size()) + " edges");
  const int n = h.dim(0);
  const int c = h.dim(1);
  for (size_t e = 0; e < src.size(); ++e)
    if (src[e] < 0 || src[e] >= n || dst[e] < 0 || dst[e] >= n)
      throw std::out_of_range("edge_aggregate: endpoint outside [0, " + std::to_string(n) + ")");
  Tensor out({n, c});
  for (size_t e = 0; e < src.size(); ++e) {
    const float we = weighted ? w[static_cast<int>(e)] : 1.0f;
    const float* hrow = h.data() + static_cast<size_t>(src[e]) * c;
    float* orow = out.data() + static_cast<size_t>(dst[e]) * c;
    for (int j = 0; j < c; ++j) orow[j] += we * hrow[j];
  }
  const int hid = live_id(h);
  const int wid = weighted ? live_id(w) : -1;
  maybe_record(out, hid >= 0 || wid >= 0,
               [h, src, dst, w, weighted, hid, wid, c](const Tensor& g, Tape& t) {
                 if (hid >= 0) {
                   Tensor dh(h.shape());
                   for (size_t e = 0; e < src.size(); ++e) {
                     const float we = weighted ? w[static_cast<int>(e)] : 1.0f;
                     const float* grow = g.data() + static_cast<size_t>(dst[e]) * c;
                     float* drow = dh.data() + static_cast<size_t>(src[e]) * c;
                     for (int j = 0; j < c; ++j) drow[j] += we * grow[j];
                   }
                   t.accumulate(hid, dh);
                 }
                 if (wid >= 0) {
                   Tensor dw(w.shape());
                   for (size_t e = 0; e < src.size(); ++e) {
                     const float* hrow = h.data() + static_cast<size_t>(src[e]) * c;
                     const float* grow = g.data() + static_cast<size_t>(dst[e]) * c;
                     float acc = 0.0f;
                     for (int j = 0; j < c; ++j) acc += hrow[j] * grow[j];
                     dw[static_cast<int>(e)] = acc;
                   }
                   t.accumulate(wid, dw);
                 }
               });
  return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
    throw std::invalid_argument("concat_cols: incompatible shapes " + shape_str(a.shape()) +
                                " and " + shape_str(b.shape()));
  const int r = a.dim(0);
  const int ca = a.dim(1);
  const int cb = b.dim(1);
  Tensor out({r, ca + cb});
  for (int i = 0; i < r; ++i) {
    std::copy_n(a.data() + static_cast<size_t>(i) * ca, ca,
                out.data() + static_cast<size_t>(i) * (ca + cb));
    std::copy_n(b.data() + static_cast<size_t>(i) * cb, cb,
                out.data() + static_cast<size_t>(i) * (ca + cb) + ca);
  }
  const int aid = live_id(a);
  const int bid = live_id(b);
  maybe_record(out, aid >= 0 || bid >= 0, [aid, bid, r, ca, cb](const Tensor& g, Tape& t) {
    if (aid >= 0) {
      Tensor da({r, ca});
      for (int i = 0; i < r; ++i)
        std::copy_n(g.data() + static_cast<size_t>(i) * (ca + cb), ca,
                    da.data() + static_cast<size_t>(i) * ca);
      t.accumulate(aid, da);
    }
    if (bid >= 0) {
      Tensor db({r, cb});
      for (int i = 0; i < r; ++i)
        std::copy_n(g.data() + static_cast<size_t>(i) * (ca + cb) + ca, cb,
                    db.data() + static_cast<size_t>(i) * cb);
      t.accumulate(bid, db);
    }
  });
  return out;
}

}  // namespace topo
