#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gnn_esr/random.hpp"
#include "gnn_esr/types.hpp"

namespace gnn_esr::ad {

using gnn_esr::Matrix;
using gnn_esr::RowVector;
using gnn_esr::SparseMatrix;

/// A trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Handle to a node on a Tape.
struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
  bool valid() const { return id != std::numeric_limits<std::size_t>::max(); }
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Records forward computations for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, which is a topological order;
/// backward() walks them in reverse. Gradients fan in additively. Parameters
/// are referenced, not copied, so a Parameter must outlive every tape that
/// uses it.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

  explicit Tape(std::uint64_t seed = 0) : rng_(seed) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Value with no gradient.
  Var constant(Matrix v) { return push(std::move(v), false, nullptr, {}); }
  /// Differentiable leaf; its gradient is readable through grad().
  Var input(Matrix v) { return push(std::move(v), true, nullptr, {}); }
  /// Leaf bound to a parameter; backward() adds into p.grad.
  Var param(Parameter& p) { return push(p.value, true, &p, {}); }

  /// Appends a computed node. `backward` runs only if some input needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
  }
  Var record(Matrix value, std::span<const Var> inputs, BackwardFn backward) {
    bool needs = false;
    for (Var v : inputs) needs = needs || nodes_.at(v.id).requires_grad;
#ifndef NDEBUG
    if (!value.allFinite()) throw std::domain_error("tape: non-finite value produced");
#endif
    return push(std::move(value), needs, nullptr, needs ? std::move(backward) : BackwardFn{});
  }

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  /// Gradient of the last backward() wrt v; zeros if none reached it.
  Matrix grad(Var v) const {
    const auto& n = nodes_.at(v.id);
    if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Adds `g` into the gradient of v (no-op for constants).
  template <typename Expr>
  void accumulate(Var v, const Expr& g) {
    auto& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  /// Block-wise accumulation into rows [begin, begin + g.rows()).
  void accumulate_rows(Var v, Eigen::Index begin, const Matrix& g) {
    auto& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.grad.middleRows(begin, g.rows()) += g;
  }

  /// Reverse sweep from a 1x1 loss.
  void backward(Var loss) {
    const auto& l = nodes_.at(loss.id);
    if (l.value.rows() != 1 || l.value.cols() != 1) throw ShapeError("backward: loss must be a 1x1 tensor");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    nodes_[loss.id].grad = Matrix::Ones(1, 1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      // accumulate() only touches earlier nodes, so n.grad stays put
      if (n.backward) {
        n.backward(*this, n.grad);
      } else if (n.parameter) {
        n.parameter->grad += n.grad;
      }
    }
  }

  Rng& rng() { return rng_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Parameter* parameter = nullptr;
    BackwardFn backward;
  };

  Var push(Matrix v, bool requires_grad, Parameter* p, BackwardFn fn) {
    nodes_.push_back(Node{std::move(v), Matrix(), requires_grad, p, std::move(fn)});
    return Var{nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  Rng rng_;
};

namespace detail {
inline std::string shape_str(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }
inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

inline Var matmul(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  detail::require(av.cols() == bv.rows(), "matmul: " + detail::shape_str(av) + " * " + detail::shape_str(bv));
  Matrix out = av * bv;
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.requires_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

/// a * b^T
inline Var matmul_nt(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  detail::require(av.cols() == bv.cols(), "matmul_nt: " + detail::shape_str(av) + " * T(" + detail::shape_str(bv) + ")");
  Matrix out = av * bv.transpose();
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * t.value(b));
    if (t.requires_grad(b)) t.accumulate(b, g.transpose() * t.value(a));
  });
}

namespace detail {
/// out += s * x, one dense row per stored entry.
inline void sparse_rows_accumulate(const SparseMatrix& s, const Matrix& x, Matrix& out) {
  for (Eigen::Index r = 0; r < s.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(s, r); it; ++it) out.row(r).noalias() += it.value() * x.row(it.col());
}
}  // namespace detail

/// Constant sparse matrix times x. `s` must stay alive until backward()
/// returns. With `symmetric`, s is used in place of its transpose.
inline Var sparse_matmul(Tape& t, const SparseMatrix& s, Var x, bool symmetric = false) {
  const Matrix& xv = t.value(x);
  detail::require(s.cols() == xv.rows(), "sparse_matmul: sparse " + std::to_string(s.rows()) + "x" +
                                             std::to_string(s.cols()) + " * " + detail::shape_str(xv));
  Matrix out = Matrix::Zero(s.rows(), xv.cols());
  detail::sparse_rows_accumulate(s, xv, out);
  const SparseMatrix* sp = &s;
  return t.record(std::move(out), {x}, [sp, x, symmetric](Tape& t, const Matrix& g) {
    Matrix gx = Matrix::Zero(sp->cols(), g.cols());
    if (symmetric) {
      detail::sparse_rows_accumulate(*sp, g, gx);
    } else {
      SparseMatrix st = sp->transpose();
      detail::sparse_rows_accumulate(st, g, gx);
    }
    t.accumulate(x, gx);
  });
}

inline Var add(Tape& t, Var a, Var b) {
  detail::require(t.value(a).rows() == t.value(b).rows() && t.value(a).cols() == t.value(b).cols(),
                  "add: " + detail::shape_str(t.value(a)) + " + " + detail::shape_str(t.value(b)));
  Matrix out = t.value(a) + t.value(b);
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

/// x + 1 * bias, where bias is 1 x cols.
inline Var add_bias(Tape& t, Var x, Var bias) {
  const Matrix& xv = t.value(x);
  const Matrix& bv = t.value(bias);
  detail::require(bv.rows() == 1 && bv.cols() == xv.cols(),
                  "add_bias: " + detail::shape_str(xv) + " + " + detail::shape_str(bv));
  Matrix out = xv.rowwise() + bv.row(0);
  return t.record(std::move(out), {x, bias}, [x, bias](Tape& t, const Matrix& g) {
    t.accumulate(x, g);
    if (t.requires_grad(bias)) t.accumulate(bias, g.colwise().sum());
  });
}

inline Var scale(Tape& t, Var x, double s) {
  Matrix out = t.value(x) * s;
  return t.record(std::move(out), {x}, [x, s](Tape& t, const Matrix& g) { t.accumulate(x, g * s); });
}

inline Var relu(Tape& t, Var x) {
  Matrix out = t.value(x).cwiseMax(0.0);
  return t.record(std::move(out), {x}, [x](Tape& t, const Matrix& g) {
    t.accumulate(x, (t.value(x).array() > 0.0).select(g.array(), 0.0).matrix());
  });
}

/// 1x1 sum of all entries.
inline Var sum(Tape& t, Var x) {
  Matrix out(1, 1);
  out(0, 0) = t.value(x).sum();
  return t.record(std::move(out), {x}, [x](Tape& t, const Matrix& g) {
    t.accumulate(x, Matrix::Constant(t.value(x).rows(), t.value(x).cols(), g(0, 0)));
  });
}

inline Var concat_cols(Tape& t, std::span<const Var> parts) {
  detail::require(!parts.empty(), "concat_cols: no inputs");
  const Eigen::Index rows = t.value(parts[0]).rows();
  Eigen::Index cols = 0;
  for (Var p : parts) {
    detail::require(t.value(p).rows() == rows, "concat_cols: row counts differ");
    cols += t.value(p).cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (Var p : parts) {
    out.middleCols(c, t.value(p).cols()) = t.value(p);
    c += t.value(p).cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [inputs](Tape& t, const Matrix& g) {
    Eigen::Index c = 0;
    for (Var p : inputs) {
      const Eigen::Index w = t.value(p).cols();
      if (t.requires_grad(p)) t.accumulate(p, g.middleCols(c, w));
      c += w;
    }
  });
}

inline Var concat_rows(Tape& t, std::span<const Var> parts) {
  detail::require(!parts.empty(), "concat_rows: no inputs");
  const Eigen::Index cols = t.value(parts[0]).cols();
  Eigen::Index rows = 0;
  for (Var p : parts) {
    detail::require(t.value(p).cols() == cols, "concat_rows: column counts differ");
    rows += t.value(p).rows();
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (Var p : parts) {
    out.middleRows(r, t.value(p).rows()) = t.value(p);
    r += t.value(p).rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [inputs](Tape& t, const Matrix& g) {
    Eigen::Index r = 0;
    for (Var p : inputs) {
      const Eigen::Index h = t.value(p).rows();
      if (t.requires_grad(p)) t.accumulate(p, g.middleRows(r, h));
      r += h;
    }
  });
}

/// Rows [begin, begin + count) of x.
inline Var slice_rows(Tape& t, Var x, Eigen::Index begin, Eigen::Index count) {
  const Matrix& xv = t.value(x);
  detail::require(begin >= 0 && count >= 0 && begin + count <= xv.rows(), "slice_rows: range out of bounds");
  Matrix out = xv.middleRows(begin, count);
  return t.record(std::move(out), {x}, [x, begin](Tape& t, const Matrix& g) { t.accumulate_rows(x, begin, g); });
}

/// Rows of x at `indices`, in that order. Backward scatters (adds) into those rows.
inline Var gather_rows(Tape& t, Var x, std::vector<Eigen::Index> indices) {
  const Matrix& xv = t.value(x);
  Matrix out(static_cast<Eigen::Index>(indices.size()), xv.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    detail::require(indices[i] >= 0 && indices[i] < xv.rows(), "gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = xv.row(indices[i]);
  }
  return t.record(std::move(out), {x}, [x, idx = std::move(indices)](Tape& t, const Matrix& g) {
    Matrix gx = Matrix::Zero(t.value(x).rows(), t.value(x).cols());
    for (std::size_t i = 0; i < idx.size(); ++i) gx.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(x, gx);
  });
}

/// Column-wise max over each row segment [offsets[b], offsets[b+1]); result is
/// (segments x cols). Ties send the gradient to the first maximal row.
inline Var segment_max(Tape& t, Var x, std::span<const Eigen::Index> offsets) {
  const Matrix& xv = t.value(x);
  detail::require(offsets.size() >= 2 && offsets.front() == 0 && offsets.back() == xv.rows(),
                  "segment_max: offsets must span all rows");
  const auto segments = static_cast<Eigen::Index>(offsets.size() - 1);
  const Eigen::Index cols = xv.cols();
  Matrix out(segments, cols);
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(segments * cols));
  for (Eigen::Index s = 0; s < segments; ++s) {
    const Eigen::Index b = offsets[static_cast<std::size_t>(s)], e = offsets[static_cast<std::size_t>(s) + 1];
    detail::require(e > b, "segment_max: empty segment");
    Eigen::Index* best = &arg[static_cast<std::size_t>(s * cols)];
    double* top = out.row(s).data();
    const double* first = xv.row(b).data();
    for (Eigen::Index c = 0; c < cols; ++c) {
      best[c] = b;
      top[c] = first[c];
    }
    for (Eigen::Index r = b + 1; r < e; ++r) {
      const double* row = xv.row(r).data();
      for (Eigen::Index c = 0; c < cols; ++c)
        if (row[c] > top[c]) {
          top[c] = row[c];
          best[c] = r;
        }
    }
  }
  return t.record(std::move(out), {x}, [x, arg = std::move(arg), cols](Tape& t, const Matrix& g) {
    Matrix gx = Matrix::Zero(t.value(x).rows(), cols);
    for (Eigen::Index s = 0; s < g.rows(); ++s)
      for (Eigen::Index c = 0; c < cols; ++c) gx(arg[static_cast<std::size_t>(s * cols + c)], c) += g(s, c);
    t.accumulate(x, gx);
  });
}

/// Softmax along each row.
inline Matrix row_softmax_value(const Matrix& x) {
  Matrix y = x;
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    y.row(r).array() -= y.row(r).maxCoeff();
    y.row(r) = y.row(r).array().exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

inline Var row_softmax(Tape& t, Var x) {
  Matrix y = row_softmax_value(t.value(x));
  Matrix out = y;
  return t.record(std::move(out), {x}, [x, y = std::move(y)](Tape& t, const Matrix& g) {
    Eigen::VectorXd dots = (g.array() * y.array()).rowwise().sum();
    Matrix gx = y.array() * (g.colwise() - dots).array();
    t.accumulate(x, gx);
  });
}

/// Inverted dropout: in training, zeroes entries with probability `p` and
/// scales survivors by 1 / (1 - p). The mask comes from the tape's RNG.
inline Var dropout(Tape& t, Var x, double p, bool training) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: probability must be in [0, 1)");
  if (!training || p == 0.0) return x;
  const Matrix& xv = t.value(x);
  std::bernoulli_distribution keep(1.0 - p);
  Matrix mask(xv.rows(), xv.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(t.rng()) ? 1.0 / (1.0 - p) : 0.0;
  Matrix out = xv.cwiseProduct(mask);
  return t.record(std::move(out), {x}, [x, mask = std::move(mask)](Tape& t, const Matrix& g) {
    t.accumulate(x, g.cwiseProduct(mask));
  });
}

/// Running statistics of a batch-normalization layer.
struct BatchNormState {
  RowVector running_mean;
  RowVector running_var;
  double momentum = 0.9;
  double eps = 1e-5;

  BatchNormState() = default;
  explicit BatchNormState(Eigen::Index width)
      : running_mean(RowVector::Zero(width)), running_var(RowVector::Ones(width)) {}
};

/// Per-column normalization over all rows. Training mode normalizes with the
/// batch statistics and folds them into `state`; evaluation mode uses the
/// running statistics only.
inline Var batch_norm(Tape& t, Var x, Var gamma, Var beta, BatchNormState& state, bool training) {
  const Matrix& xv = t.value(x);
  const Matrix& gv = t.value(gamma);
  const Matrix& bv = t.value(beta);
  detail::require(gv.rows() == 1 && gv.cols() == xv.cols() && bv.rows() == 1 && bv.cols() == xv.cols(),
                  "batch_norm: gamma/beta must be 1x" + std::to_string(xv.cols()));
  detail::require(state.running_mean.size() == xv.cols(), "batch_norm: state width mismatch");
  detail::require(xv.rows() > 0, "batch_norm: empty batch");

  if (!training) {
    RowVector inv_std = (state.running_var.array() + state.eps).rsqrt();
    Matrix xhat = (xv.rowwise() - state.running_mean).array().rowwise() * inv_std.array();
    Matrix out = (xhat.array().rowwise() * gv.row(0).array()).rowwise() + bv.row(0).array();
    return t.record(std::move(out), {x, gamma, beta},
                    [x, gamma, beta, inv_std, xhat = std::move(xhat)](Tape& t, const Matrix& g) {
                      if (t.requires_grad(x))
                        t.accumulate(x, (g.array().rowwise() * (t.value(gamma).row(0).array() * inv_std.array())).matrix());
                      if (t.requires_grad(gamma)) t.accumulate(gamma, (g.array() * xhat.array()).colwise().sum().matrix());
                      if (t.requires_grad(beta)) t.accumulate(beta, g.colwise().sum());
                    });
  }

  const double n = static_cast<double>(xv.rows());
  RowVector mean = xv.colwise().mean();
  Matrix centered = xv.rowwise() - mean;
  RowVector var = centered.array().square().colwise().sum() / n;
  RowVector inv_std = (var.array() + state.eps).rsqrt();
  Matrix xhat = centered.array().rowwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * gv.row(0).array()).rowwise() + bv.row(0).array();

  state.running_mean = state.momentum * state.running_mean + (1.0 - state.momentum) * mean;
  state.running_var = state.momentum * state.running_var + (1.0 - state.momentum) * var;

  return t.record(std::move(out), {x, gamma, beta},
                  [x, gamma, beta, inv_std, n, xhat = std::move(xhat)](Tape& t, const Matrix& g) {
                    if (t.requires_grad(gamma)) t.accumulate(gamma, (g.array() * xhat.array()).colwise().sum().matrix());
                    if (t.requires_grad(beta)) t.accumulate(beta, g.colwise().sum());
                    if (!t.requires_grad(x)) return;
                    Matrix dxhat = g.array().rowwise() * t.value(gamma).row(0).array();
                    RowVector sum_d = dxhat.colwise().sum();
                    RowVector sum_dx = (dxhat.array() * xhat.array()).colwise().sum();
                    Matrix dx = ((dxhat * n).rowwise() - sum_d).array() - xhat.array().rowwise() * sum_dx.array();
                    dx = dx.array().rowwise() * (inv_std.array() / n);
                    t.accumulate(x, dx);
                  });
}

/// Mean softmax cross-entropy of logits (B x C) against integer targets; 1x1.
inline Var softmax_cross_entropy(Tape& t, Var logits, std::span<const int> targets) {
  const Matrix& z = t.value(logits);
  detail::require(static_cast<std::size_t>(z.rows()) == targets.size(), "softmax_cross_entropy: target count mismatch");
  detail::require(z.rows() > 0, "softmax_cross_entropy: empty batch");
  Matrix p = row_softmax_value(z);
  double loss = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const int c = targets[static_cast<std::size_t>(r)];
    detail::require(c >= 0 && c < z.cols(), "softmax_cross_entropy: target out of range");
    const double m = z.row(r).maxCoeff();
    const double lse = m + std::log((z.row(r).array() - m).exp().sum());
    loss += lse - z(r, c);
  }
  const double b = static_cast<double>(z.rows());
  Matrix out(1, 1);
  out(0, 0) = loss / b;
  std::vector<int> tg(targets.begin(), targets.end());
  return t.record(std::move(out), {logits}, [logits, p = std::move(p), tg, b](Tape& t, const Matrix& g) {
    Matrix gz = p;
    for (std::size_t r = 0; r < tg.size(); ++r) gz(static_cast<Eigen::Index>(r), tg[r]) -= 1.0;
    t.accumulate(logits, gz * (g(0, 0) / b));
  });
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

struct FiniteDifferenceResult {
  bool pass = false;
  double max_error = 0.0;
  Matrix analytic;
  Matrix numeric;
};

/// Builds the scalar under test from a differentiable input on a fresh tape.
using ScalarFn = std::function<Var(Tape&, Var)>;

/// Compares the tape gradient of `fn` at `point` with central differences.
/// Error per entry is |a - n| / max(1, |a|, |n|). Every evaluation runs on a
/// tape seeded with `tape_seed`, so dropout masks repeat across evaluations.
inline FiniteDifferenceResult finite_difference_check(const ScalarFn& fn, const Matrix& point, double tolerance,
                                                      double step = 1e-5, std::uint64_t tape_seed = 0) {
  FiniteDifferenceResult r;
  {
    Tape t(tape_seed);
    Var x = t.input(point);
    Var y = fn(t, x);
    t.backward(y);
    r.analytic = t.grad(x);
  }
  auto eval = [&](const Matrix& p) {
    Tape t(tape_seed);
    Var x = t.input(p);
    return t.value(fn(t, x))(0, 0);
  };
  r.numeric.resize(point.rows(), point.cols());
  Matrix probe = point;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + step;
    const double up = eval(probe);
    probe.data()[i] = orig - step;
    const double down = eval(probe);
    probe.data()[i] = orig;
    r.numeric.data()[i] = (up - down) / (2.0 * step);
  }
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    const double a = r.analytic.data()[i], n = r.numeric.data()[i];
    r.max_error = std::max(r.max_error, std::abs(a - n) / std::max({1.0, std::abs(a), std::abs(n)}));
  }
  r.pass = r.max_error < tolerance;
  return r;
}

}  // namespace gnn_esr::ad
