#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape owns every node created during a forward pass. Nodes are appended in
// evaluation order, so walking them backwards is a valid reverse topological
// order. Broadcasting is limited to: a 1 x C row added to every row (add/sub)
// and an N x 1 column multiplied into every column (mul).

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace vsr::ad {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tape;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Mat& value() const;
  const Mat& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  Var leaf(Mat value, bool requires_grad = true) { return push(std::move(value), requires_grad, {}); }
  Var constant(Mat value) { return leaf(std::move(value), false); }

  const Mat& value(std::size_t id) const { return nodes_[id].value; }
  const Mat& grad(std::size_t id) const { return nodes_[id].grad; }
  Mat& grad_mut(std::size_t id) { return nodes_[id].grad; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Appends an op result. `backward` reads the node's grad and accumulates
  /// into parents; it only runs if some parent needs a gradient.
  Var push(Mat value, bool needs_grad, Backward backward) {
    Node n;
    n.needs_grad = needs_grad;
    if (needs_grad) n.grad = Mat::Zero(value.rows(), value.cols());
    n.value = std::move(value);
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  void backward(Var loss) {
    if (loss.tape() != this) throw std::invalid_argument("backward: loss belongs to another tape");
    if (loss.rows() != 1 || loss.cols() != 1) throw std::invalid_argument("backward: loss must be scalar");
    for (auto& n : nodes_)
      if (n.needs_grad) n.grad.setZero();
    if (!nodes_[loss.id()].needs_grad) return;
    nodes_[loss.id()].grad(0, 0) = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.needs_grad && n.backward) n.backward(*this, i);
    }
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    Backward backward;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
};

inline const Mat& Var::value() const { return tape_->value(id_); }
inline const Mat& Var::grad() const { return tape_->grad(id_); }

namespace detail {

inline void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

inline Tape& same_tape(Var a, Var b) {
  require(a.tape() == b.tape() && a.tape() != nullptr, "operands live on different tapes");
  return *a.tape();
}

inline bool any_grad(Tape& t, std::initializer_list<Var> vs) {
  for (auto v : vs)
    if (t.needs_grad(v.id())) return true;
  return false;
}

/// Adds g into parent's grad when the parent needs one.
template <typename Expr>
inline void accum(Tape& t, Var parent, const Expr& g) {
  if (t.needs_grad(parent.id())) t.grad_mut(parent.id()) += g;
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::require(a.cols() == b.rows(), "matmul: shape mismatch");
  Mat out = a.value() * b.value();
  return t.push(std::move(out), detail::any_grad(t, {a, b}), [a, b](Tape& tp, std::size_t self) {
    const Mat& g = tp.grad(self);
    if (tp.needs_grad(a.id())) tp.grad_mut(a.id()).noalias() += g * b.value().transpose();
    if (tp.needs_grad(b.id())) tp.grad_mut(b.id()).noalias() += a.value().transpose() * g;
  });
}

inline Var transpose(Var a) {
  Tape& t = *a.tape();
  Mat out = a.value().transpose();
  return t.push(std::move(out), t.needs_grad(a.id()), [a](Tape& tp, std::size_t self) {
    detail::accum(tp, a, tp.grad(self).transpose());
  });
}

/// a + b, where b has a's shape or is a 1 x C row broadcast over rows.
inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const bool row_bcast = b.rows() == 1 && a.rows() != 1;
  detail::require(a.cols() == b.cols() && (a.rows() == b.rows() || row_bcast), "add: shape mismatch");
  Mat out = a.value();
  if (row_bcast) out.rowwise() += b.value().row(0);
  else out += b.value();
  return t.push(std::move(out), detail::any_grad(t, {a, b}), [a, b, row_bcast](Tape& tp, std::size_t self) {
    const Mat& g = tp.grad(self);
    detail::accum(tp, a, g);
    if (row_bcast) detail::accum(tp, b, g.colwise().sum());
    else detail::accum(tp, b, g);
  });
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const bool row_bcast = b.rows() == 1 && a.rows() != 1;
  detail::require(a.cols() == b.cols() && (a.rows() == b.rows() || row_bcast), "sub: shape mismatch");
  Mat out = a.value();
  if (row_bcast) out.rowwise() -= b.value().row(0);
  else out -= b.value();
  return t.push(std::move(out), detail::any_grad(t, {a, b}), [a, b, row_bcast](Tape& tp, std::size_t self) {
    const Mat& g = tp.grad(self);
    detail::accum(tp, a, g);
    if (row_bcast) detail::accum(tp, b, -g.colwise().sum());
    else detail::accum(tp, b, -g);
  });
}

/// Elementwise a * b, where b has a's shape or is an N x 1 column broadcast
/// over columns.
inline Var mul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const bool col_bcast = b.cols() == 1 && a.cols() != 1;
  detail::require(a.rows() == b.rows() && (a.cols() == b.cols() || col_bcast), "mul: shape mismatch");
  Mat out = a.value();
  if (col_bcast) out.array().colwise() *= b.value().col(0).array();
  else out.array() *= b.value().array();
  return t.push(std::move(out), detail::any_grad(t, {a, b}), [a, b, col_bcast](Tape& tp, std::size_t self) {
    const Mat& g = tp.grad(self);
    if (col_bcast) {
      if (tp.needs_grad(a.id())) {
        Mat ga = g;
        ga.array().colwise() *= b.value().col(0).array();
        tp.grad_mut(a.id()) += ga;
      }
      if (tp.needs_grad(b.id()))
        tp.grad_mut(b.id()) += (g.array() * a.value().array()).rowwise().sum().matrix();
    } else {
      detail::accum(tp, a, (g.array() * b.value().array()).matrix());
      detail::accum(tp, b, (g.array() * a.value().array()).matrix());
    }
  });
}

inline Var scale(Var a, double c) {
  Tape& t = *a.tape();
  Mat out = a.value() * c;
  return t.push(std::move(out), t.needs_grad(a.id()), [a, c](Tape& tp, std::size_t self) {
    detail::accum(tp, a, tp.grad(self) * c);
  });
}

inline Var add_scalar(Var a, double c) {
  Tape& t = *a.tape();
  Mat out = a.value().array() + c;
  return t.push(std::move(out), t.needs_grad(a.id()), [a](Tape& tp, std::size_t self) {
    detail::accum(tp, a, tp.grad(self));
  });
}

inline Var square(Var a) { return mul(a, a); }

/// Stacks row blocks vertically. All parts need the same column count.
inline Var concat_rows(std::span<const Var> parts) {
  detail::require(!parts.empty(), "concat_rows: no inputs");
  Tape& t = *parts.front().tape();
  Eigen::Index rows = 0;
  bool grad = false;
  for (auto p : parts) {
    detail::require(p.tape() == &t && p.cols() == parts.front().cols(), "concat_rows: shape mismatch");
    rows += p.rows();
    grad = grad || t.needs_grad(p.id());
  }
  Mat out(rows, parts.front().cols());
  Eigen::Index r = 0;
  for (auto p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.push(std::move(out), grad, [ps](Tape& tp, std::size_t self) {
    Eigen::Index r0 = 0;
    for (auto p : ps) {
      detail::accum(tp, p, tp.grad(self).middleRows(r0, p.rows()));
      r0 += p.rows();
    }
  });
}

/// out[k] = a[index[k]].
inline Var gather_rows(Var a, std::span<const int> index) {
  Tape& t = *a.tape();
  Mat out(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    detail::require(index[k] >= 0 && index[k] < a.rows(), "gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(k)) = a.value().row(index[k]);
  }
  std::vector<int> idx(index.begin(), index.end());
  return t.push(std::move(out), t.needs_grad(a.id()), [a, idx = std::move(idx)](Tape& tp, std::size_t self) {
    if (!tp.needs_grad(a.id())) return;
    const Mat& g = tp.grad(self);
    Mat& ga = tp.grad_mut(a.id());
    for (std::size_t k = 0; k < idx.size(); ++k) ga.row(idx[k]) += g.row(static_cast<Eigen::Index>(k));
  });
}

/// out[index[k]] += a[k], out has out_rows rows.
inline Var scatter_add_rows(Var a, std::span<const int> index, Eigen::Index out_rows) {
  Tape& t = *a.tape();
  detail::require(static_cast<Eigen::Index>(index.size()) == a.rows(), "scatter_add_rows: index length mismatch");
  Mat out = Mat::Zero(out_rows, a.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    detail::require(index[k] >= 0 && index[k] < out_rows, "scatter_add_rows: index out of range");
    out.row(index[k]) += a.value().row(static_cast<Eigen::Index>(k));
  }
  std::vector<int> idx(index.begin(), index.end());
  return t.push(std::move(out), t.needs_grad(a.id()), [a, idx = std::move(idx)](Tape& tp, std::size_t self) {
    if (!tp.needs_grad(a.id())) return;
    const Mat& g = tp.grad(self);
    Mat& ga = tp.grad_mut(a.id());
    for (std::size_t k = 0; k < idx.size(); ++k) ga.row(static_cast<Eigen::Index>(k)) += g.row(idx[k]);
  });
}

inline Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = *a.tape();
  detail::require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols: range out of bounds");
  Mat out = a.value().middleCols(start, count);
  return t.push(std::move(out), t.needs_grad(a.id()), [a, start, count](Tape& tp, std::size_t self) {
    if (tp.needs_grad(a.id())) tp.grad_mut(a.id()).middleCols(start, count) += tp.grad(self);
  });
}

/// Repeats a 1 x C row n times.
inline Var broadcast_rows(Var row, Eigen::Index n) {
  Tape& t = *row.tape();
  detail::require(row.rows() == 1, "broadcast_rows: input must be a single row");
  Mat out = row.value().replicate(n, 1);
  return t.push(std::move(out), t.needs_grad(row.id()), [row](Tape& tp, std::size_t self) {
    detail::accum(tp, row, tp.grad(self).colwise().sum());
  });
}

inline Var leaky_relu(Var a, double slope) {
  Tape& t = *a.tape();
  Mat out = a.value().unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
  return t.push(std::move(out), t.needs_grad(a.id()), [a, slope](Tape& tp, std::size_t self) {
    Mat d = a.value().unaryExpr([slope](double x) { return x > 0.0 ? 1.0 : slope; });
    detail::accum(tp, a, (tp.grad(self).array() * d.array()).matrix());
  });
}

inline Var tanh(Var a) {
  Tape& t = *a.tape();
  Mat out = a.value().array().tanh().matrix();
  return t.push(std::move(out), t.needs_grad(a.id()), [a](Tape& tp, std::size_t self) {
    const Mat& y = tp.value(self);
    detail::accum(tp, a, (tp.grad(self).array() * (1.0 - y.array().square())).matrix());
  });
}

/// exp with the argument clamped at 700 to stay finite.
inline Var exp(Var a) {
  Tape& t = *a.tape();
  Mat out = a.value().array().min(700.0).exp().matrix();
  return t.push(std::move(out), t.needs_grad(a.id()), [a](Tape& tp, std::size_t self) {
    Mat d = tp.value(self);
    for (Eigen::Index i = 0; i < d.size(); ++i)
      if (a.value().data()[i] > 700.0) d.data()[i] = 0.0;
    detail::accum(tp, a, (tp.grad(self).array() * d.array()).matrix());
  });
}

/// log with the argument floored at 1e-300.
inline Var log(Var a) {
  Tape& t = *a.tape();
  constexpr double kFloor = 1e-300;
  Mat out = a.value().array().max(kFloor).log().matrix();
  return t.push(std::move(out), t.needs_grad(a.id()), [a](Tape& tp, std::size_t self) {
    Mat d = a.value().unaryExpr([](double x) { return x > kFloor ? 1.0 / x : 0.0; });
    detail::accum(tp, a, (tp.grad(self).array() * d.array()).matrix());
  });
}

/// Softmax of an E x 1 column within segments [offsets[s], offsets[s+1]).
inline Var segment_softmax(Var logits, std::span<const int> offsets) {
  Tape& t = *logits.tape();
  detail::require(logits.cols() == 1, "segment_softmax: logits must be a column");
  detail::require(!offsets.empty() && offsets.back() == logits.rows() && offsets.front() == 0,
                  "segment_softmax: offsets do not cover the input");
  const Mat& x = logits.value();
  Mat out(x.rows(), 1);
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const int lo = offsets[s], hi = offsets[s + 1];
    if (lo == hi) continue;
    double mx = x(lo, 0);
    for (int k = lo + 1; k < hi; ++k) mx = std::max(mx, x(k, 0));
    double z = 0.0;
    for (int k = lo; k < hi; ++k) z += (out(k, 0) = std::exp(x(k, 0) - mx));
    for (int k = lo; k < hi; ++k) out(k, 0) /= z;
  }
  std::vector<int> offs(offsets.begin(), offsets.end());
  return t.push(std::move(out), t.needs_grad(logits.id()), [logits, offs = std::move(offs)](Tape& tp, std::size_t self) {
    if (!tp.needs_grad(logits.id())) return;
    const Mat& y = tp.value(self);
    const Mat& g = tp.grad(self);
    Mat& gx = tp.grad_mut(logits.id());
    for (std::size_t s = 0; s + 1 < offs.size(); ++s) {
      double dot = 0.0;
      for (int k = offs[s]; k < offs[s + 1]; ++k) dot += g(k, 0) * y(k, 0);
      for (int k = offs[s]; k < offs[s + 1]; ++k) gx(k, 0) += y(k, 0) * (g(k, 0) - dot);
    }
  });
}

/// Mean over all rows: 1 x C.
inline Var mean_rows(Var a) {
  Tape& t = *a.tape();
  detail::require(a.rows() > 0, "mean_rows: no rows");
  Mat out = a.value().colwise().mean();
  return t.push(std::move(out), t.needs_grad(a.id()), [a](Tape& tp, std::size_t self) {
    if (!tp.needs_grad(a.id())) return;
    const double inv = 1.0 / static_cast<double>(a.rows());
    tp.grad_mut(a.id()).rowwise() += tp.grad(self).row(0) * inv;
  });
}

/// Mean of rows within each segment: S x C.
inline Var segment_mean_rows(Var a, std::span<const int> offsets) {
  Tape& t = *a.tape();
  detail::require(!offsets.empty() && offsets.back() == a.rows(), "segment_mean_rows: offsets do not cover the input");
  const auto segs = static_cast<Eigen::Index>(offsets.size() - 1);
  Mat out = Mat::Zero(segs, a.cols());
  for (Eigen::Index s = 0; s < segs; ++s) {
    const int lo = offsets[static_cast<std::size_t>(s)], hi = offsets[static_cast<std::size_t>(s) + 1];
    detail::require(hi > lo, "segment_mean_rows: empty segment");
    out.row(s) = a.value().middleRows(lo, hi - lo).colwise().mean();
  }
  std::vector<int> offs(offsets.begin(), offsets.end());
  return t.push(std::move(out), t.needs_grad(a.id()), [a, offs = std::move(offs)](Tape& tp, std::size_t self) {
    if (!tp.needs_grad(a.id())) return;
    const Mat& g = tp.grad(self);
    Mat& ga = tp.grad_mut(a.id());
    for (std::size_t s = 0; s + 1 < offs.size(); ++s) {
      const double inv = 1.0 / (offs[s + 1] - offs[s]);
      ga.middleRows(offs[s], offs[s + 1] - offs[s]).rowwise() += g.row(static_cast<Eigen::Index>(s)) * inv;
    }
  });
}

inline Var sum(Var a) {
  Tape& t = *a.tape();
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return t.push(std::move(out), t.needs_grad(a.id()), [a](Tape& tp, std::size_t self) {
    if (tp.needs_grad(a.id())) tp.grad_mut(a.id()).array() += tp.grad(self)(0, 0);
  });
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// Row sums: N x 1.
inline Var sum_cols(Var a) {
  Tape& t = *a.tape();
  Mat out = a.value().rowwise().sum();
  return t.push(std::move(out), t.needs_grad(a.id()), [a](Tape& tp, std::size_t self) {
    if (tp.needs_grad(a.id())) tp.grad_mut(a.id()).colwise() += tp.grad(self).col(0);
  });
}

/// Elementwise minimum; the gradient goes to the smaller operand (a on ties).
inline Var minimum(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "minimum: shape mismatch");
  Mat out = a.value().cwiseMin(b.value());
  return t.push(std::move(out), detail::any_grad(t, {a, b}), [a, b](Tape& tp, std::size_t self) {
    const Mat& g = tp.grad(self);
    const auto pick_a = (a.value().array() <= b.value().array()).cast<double>();
    detail::accum(tp, a, (g.array() * pick_a).matrix());
    detail::accum(tp, b, (g.array() * (1.0 - pick_a)).matrix());
  });
}

/// Clamp to [lo, hi]; zero gradient outside the open interval.
inline Var clamp(Var a, double lo, double hi) {
  Tape& t = *a.tape();
  Mat out = a.value().cwiseMax(lo).cwiseMin(hi);
  return t.push(std::move(out), t.needs_grad(a.id()), [a, lo, hi](Tape& tp, std::size_t self) {
    const auto inside = (a.value().array() > lo && a.value().array() < hi).cast<double>();
    detail::accum(tp, a, (tp.grad(self).array() * inside).matrix());
  });
}

}  // namespace vsr::ad
