#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace lowmt {

// Dense row-major matrix, the only tensor shape in the toolkit. Scalar is
// float for training and double for gradient verification.
template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct TensorError : std::runtime_error {
  explicit TensorError(const std::string& what) : std::runtime_error(what) {}
};

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename Scalar>
class Tape;

// Lightweight handle to a node on a tape.
template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  int32_t id = -1;

  const MatX<Scalar>& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

// Recorded-operation tape. Nodes are appended in evaluation order, which is a
// topological order by construction; backward walks it in reverse.
template <typename Scalar>
class Tape {
public:
  using Mat = MatX<Scalar>;
  using V = Var<Scalar>;

  struct Node {
    const char* op;
    std::vector<int32_t> inputs;
    Mat value;
    std::function<void(Tape&, const Mat&)> backward;  // empty for leaves
  };

  V leaf(Mat value, const char* op = "input") {
    nodes_.push_back(Node{op, {}, std::move(value), nullptr});
    return V{this, static_cast<int32_t>(nodes_.size() - 1)};
  }

  V emit(const char* op, std::vector<int32_t> inputs, Mat value,
         std::function<void(Tape&, const Mat&)> backward) {
    nodes_.push_back(Node{op, std::move(inputs), std::move(value), std::move(backward)});
    return V{this, static_cast<int32_t>(nodes_.size() - 1)};
  }

  // Id the next emitted node will receive; lets a closure refer to its own output.
  int32_t next_id() const { return static_cast<int32_t>(nodes_.size()); }

  const Mat& value(int32_t id) const { return nodes_[id].value; }
  const char* op(int32_t id) const { return nodes_[id].op; }
  size_t size() const { return nodes_.size(); }

  void accumulate(int32_t id, const Mat& g) {
    if (!has_grad_[id]) {
      grads_[id] = g;
      has_grad_[id] = true;
    } else {
      grads_[id] += g;
    }
  }

  template <typename Expr>
  void accumulate_expr(int32_t id, const Expr& g) {
    if (!has_grad_[id]) {
      grads_[id] = g;
      has_grad_[id] = true;
    } else {
      grads_[id] += g;
    }
  }

  // Mutable gradient slot for scatter-style backward rules; zero-initialized.
  Mat& grad_slot(int32_t id) {
    if (!has_grad_[id]) {
      grads_[id] = Mat::Zero(nodes_[id].value.rows(), nodes_[id].value.cols());
      has_grad_[id] = true;
    }
    return grads_[id];
  }

  bool has_grad(int32_t id) const { return !has_grad_.empty() && has_grad_[id]; }

  // Gradient of the last backward() loss w.r.t. node `id`; zero if unused.
  Mat grad(int32_t id) const {
    if (has_grad(id)) return grads_[id];
    return Mat::Zero(nodes_[id].value.rows(), nodes_[id].value.cols());
  }

  // Reverse accumulation from a scalar loss node.
  void backward(V loss) {
    const Mat& lv = value(loss.id);
    if (lv.rows() != 1 || lv.cols() != 1)
      throw TensorError("backward: loss must be a 1x1 scalar, got " +
                        shape_str(lv.rows(), lv.cols()));
    grads_.assign(nodes_.size(), Mat());
    has_grad_.assign(nodes_.size(), 0);
    grads_[loss.id] = Mat::Ones(1, 1);
    has_grad_[loss.id] = 1;
    for (int32_t id = loss.id; id >= 0; --id) {
      if (!has_grad_[id] || !nodes_[id].backward) continue;
      nodes_[id].backward(*this, grads_[id]);
    }
  }

private:
  std::vector<Node> nodes_;
  std::vector<Mat> grads_;
  std::vector<char> has_grad_;
};

template <typename Scalar>
const MatX<Scalar>& Var<Scalar>::value() const {
  return tape->value(id);
}

namespace detail {

template <typename Scalar>
void require_same_shape(const char* op, const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw TensorError(std::string(op) + ": shape mismatch " +
                      shape_str(a.rows(), a.cols()) + " vs " + shape_str(b.rows(), b.cols()));
}

template <typename Scalar>
void require_same_tape(const char* op, const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.tape != b.tape) throw TensorError(std::string(op) + ": operands on different tapes");
}

}  // namespace detail

// -- Elementwise and linear primitives -----------------------------------------

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape("matmul", a, b);
  if (a.cols() != b.rows())
    throw TensorError("matmul: inner dimensions differ, " + shape_str(a.rows(), a.cols()) +
                      " * " + shape_str(b.rows(), b.cols()));
  MatX<Scalar> out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  int32_t ai = a.id, bi = b.id;
  return a.tape->emit("matmul", {ai, bi}, std::move(out),
                      [ai, bi](Tape<Scalar>& t, const MatX<Scalar>& g) {
                        t.accumulate_expr(ai, g * t.value(bi).transpose());
                        t.accumulate_expr(bi, t.value(ai).transpose() * g);
                      });
}

// a * b^T without materializing the transpose.
template <typename Scalar>
Var<Scalar> matmul_nt(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape("matmul_nt", a, b);
  if (a.cols() != b.cols())
    throw TensorError("matmul_nt: inner dimensions differ, " + shape_str(a.rows(), a.cols()) +
                      " * " + shape_str(b.rows(), b.cols()) + "^T");
  MatX<Scalar> out(a.rows(), b.rows());
  out.noalias() = a.value() * b.value().transpose();
  int32_t ai = a.id, bi = b.id;
  return a.tape->emit("matmul_nt", {ai, bi}, std::move(out),
                      [ai, bi](Tape<Scalar>& t, const MatX<Scalar>& g) {
                        t.accumulate_expr(ai, g * t.value(bi));
                        t.accumulate_expr(bi, g.transpose() * t.value(ai));
                      });
}

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape("add", a, b);
  detail::require_same_shape("add", a, b);
  int32_t ai = a.id, bi = b.id;
  return a.tape->emit("add", {ai, bi}, a.value() + b.value(),
                      [ai, bi](Tape<Scalar>& t, const MatX<Scalar>& g) {
                        t.accumulate(ai, g);
                        t.accumulate(bi, g);
                      });
}

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape("sub", a, b);
  detail::require_same_shape("sub", a, b);
  int32_t ai = a.id, bi = b.id;
  return a.tape->emit("sub", {ai, bi}, a.value() - b.value(),
                      [ai, bi](Tape<Scalar>& t, const MatX<Scalar>& g) {
                        t.accumulate(ai, g);
                        t.accumulate_expr(bi, -g);
                      });
}

// Elementwise (Hadamard) product.
template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape("mul", a, b);
  detail::require_same_shape("mul", a, b);
  int32_t ai = a.id, bi = b.id;
  return a.tape->emit("mul", {ai, bi}, a.value().cwiseProduct(b.value()),
                      [ai, bi](Tape<Scalar>& t, const MatX<Scalar>& g) {
                        t.accumulate_expr(ai, g.cwiseProduct(t.value(bi)));
                        t.accumulate_expr(bi, g.cwiseProduct(t.value(ai)));
                      });
}

// Matrix plus broadcast row-vector bias, the only broadcast addition.
template <typename Scalar>
Var<Scalar> add_bias(Var<Scalar> m, Var<Scalar> bias) {
  detail::require_same_tape("add_bias", m, bias);
  if (bias.rows() != 1 || bias.cols() != m.cols())
    throw TensorError("add_bias: bias must be 1x" + std::to_string(m.cols()) + ", got " +
                      shape_str(bias.rows(), bias.cols()));
  int32_t mi = m.id, bi = bias.id;
  MatX<Scalar> out = m.value();
  out.rowwise() += bias.value().row(0);
  return m.tape->emit("add_bias", {mi, bi}, std::move(out),
                      [mi, bi](Tape<Scalar>& t, const MatX<Scalar>& g) {
                        t.accumulate(mi, g);
                        t.accumulate_expr(bi, g.colwise().sum());
                      });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> x, Scalar c) {
  int32_t xi = x.id;
  return x.tape->emit("scale", {xi}, (x.value().array() * c).matrix(),
                      [xi, c](Tape<Scalar>& t, const MatX<Scalar>& g) {
                        t.accumulate_expr(xi, (g.array() * c).matrix());
                      });
}

template <typename Scalar>
Var<Scalar> add_scalar(Var<Scalar> x, Scalar c) {
  int32_t xi = x.id;
  return x.tape->emit("add_scalar", {xi}, (x.value().array() + c).matrix(),
                      [xi](Tape<Scalar>& t, const MatX<Scalar>& g) { t.accumulate(xi, g); });
}

// 1 - x, a convenience composition used by gate updates.
template <typename Scalar>
Var<Scalar> one_minus(Var<Scalar> x) {
  return add_scalar(scale(x, Scalar(-1)), Scalar(1));
}

template <typename Scalar>
Var<Scalar> tanh(Var<Scalar> x) {
  int32_t xi = x.id, yi = x.tape->next_id();
  return x.tape->emit("tanh", {xi}, x.value().array().tanh().matrix(),
                      [xi, yi](Tape<Scalar>& t, const MatX<Scalar>& g) {
                        const auto& yv = t.value(yi);
                        t.accumulate_expr(xi,
                            (g.array() * (Scalar(1) - yv.array().square())).matrix());
                      });
}

template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> x) {
  int32_t xi = x.id, yi = x.tape->next_id();
  MatX<Scalar> out = (Scalar(1) / (Scalar(1) + (-x.value().array()).exp())).matrix();
  return x.tape->emit("sigmoid", {xi}, std::move(out),
                      [xi, yi](Tape<Scalar>& t, const MatX<Scalar>& g) {
                        const auto& yv = t.value(yi);
                        t.accumulate_expr(xi,
                            (g.array() * yv.array() * (Scalar(1) - yv.array())).matrix());
                      });
}

// Elementwise product with a constant mask (dropout application, word dropout,
// sequence masking). The mask is data, not a differentiated input.
template <typename Scalar>
Var<Scalar> apply_mask(Var<Scalar> x, MatX<Scalar> mask) {
  if (mask.rows() != x.rows() || mask.cols() != x.cols())
    throw TensorError("apply_mask: mask shape " + shape_str(mask.rows(), mask.cols()) +
                      " does not match input " + shape_str(x.rows(), x.cols()));
  int32_t xi = x.id;
  MatX<Scalar> out = x.value().cwiseProduct(mask);
  return x.tape->emit("apply_mask", {xi}, std::move(out),
                      [xi, mask = std::move(mask)](Tape<Scalar>& t, const MatX<Scalar>& g) {
                        t.accumulate_expr(xi, g.cwiseProduct(mask));
                      });
}

// Entries where mask != 0 are replaced by `fill`; others pass through.
template <typename Scalar>
Var<Scalar> masked_fill(Var<Scalar> x, MatX<Scalar> mask, Scalar fill) {
  if (mask.rows() != x.rows() || mask.cols() != x.cols())
    throw TensorError("masked_fill: mask shape " + shape_str(mask.rows(), mask.cols()) +
                      " does not match input " + shape_str(x.rows(), x.cols()));
  int32_t xi = x.id;
  MatX<Scalar> out = x.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    for (Eigen::Index c = 0; c < out.cols(); ++c)
      if (mask(r, c) != Scalar(0)) out(r, c) = fill;
  return x.tape->emit("masked_fill", {xi}, std::move(out),
                      [xi, mask = std::move(mask)](Tape<Scalar>& t, const MatX<Scalar>& g) {
                        MatX<Scalar> gi = g;
                        for (Eigen::Index r = 0; r < gi.rows(); ++r)
                          for (Eigen::Index c = 0; c < gi.cols(); ++c)
                            if (mask(r, c) != Scalar(0)) gi(r, c) = Scalar(0);
                        t.accumulate(xi, std::move(gi));
                      });
}

// Scales row i of x by w(i, 0).
template <typename Scalar>
Var<Scalar> scale_rows(Var<Scalar> x, Var<Scalar> w) {
  detail::require_same_tape("scale_rows", x, w);
  if (w.cols() != 1 || w.rows() != x.rows())
    throw TensorError("scale_rows: weight must be " + std::to_string(x.rows()) +
                      "x1, got " + shape_str(w.rows(), w.cols()));
  int32_t xi = x.id, wi = w.id;
  MatX<Scalar> out = w.value().col(0).asDiagonal() * x.value();
  return x.tape->emit("scale_rows", {xi, wi}, std::move(out),
                      [xi, wi](Tape<Scalar>& t, const MatX<Scalar>& g) {
                        t.accumulate_expr(xi, t.value(wi).col(0).asDiagonal() * g);
                        t.accumulate_expr(wi, g.cwiseProduct(t.value(xi)).rowwise().sum());
                      });
}

// -- Softmax family --------------------------------------------------------------

// Softmax along axis: 1 = across each row, 0 = down each column.
template <typename Scalar>
Var<Scalar> softmax(Var<Scalar> x, int axis = 1) {
  if (axis != 0 && axis != 1) throw TensorError("softmax: axis must be 0 or 1");
  MatX<Scalar> out = x.value();
  if (axis == 1) {
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      auto row = out.row(r);
      Scalar m = row.maxCoeff();
      row = (row.array() - m).exp().matrix();
      row /= row.sum();
    }
  } else {
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      auto col = out.col(c);
      Scalar m = col.maxCoeff();
      col = (col.array() - m).exp().matrix();
      col /= col.sum();
    }
  }
  int32_t xi = x.id, yi = x.tape->next_id();
  return x.tape->emit("softmax", {xi}, std::move(out),
                      [xi, yi, axis](Tape<Scalar>& t, const MatX<Scalar>& g) {
                        const MatX<Scalar>& y = t.value(yi);
                        MatX<Scalar> gy = g.cwiseProduct(y);
                        if (axis == 1) {
                          auto s = gy.rowwise().sum();
                          t.accumulate_expr(xi, gy - s.asDiagonal() * y);
                        } else {
                          auto s = gy.colwise().sum();
                          t.accumulate_expr(xi, gy - y * s.asDiagonal());
                        }
                      });
}

// Row-wise softmax restricted to positions where mask != 0; masked outputs are
// exactly zero. Throws if any row is fully masked.
template <typename Scalar>
Var<Scalar> masked_softmax_rows(Var<Scalar> x, MatX<Scalar> mask) {
  if (mask.rows() != x.rows() || mask.cols() != x.cols())
    throw TensorError("masked_softmax_rows: mask shape " + shape_str(mask.rows(), mask.cols()) +
                      " does not match input " + shape_str(x.rows(), x.cols()));
  MatX<Scalar> out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    Scalar m = -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      if (mask(r, c) != Scalar(0)) m = std::max(m, x.value()(r, c));
    if (m == -std::numeric_limits<Scalar>::infinity())
      throw TensorError("masked_softmax_rows: row " + std::to_string(r) + " is fully masked");
    Scalar z = 0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      Scalar e = mask(r, c) != Scalar(0) ? std::exp(x.value()(r, c) - m) : Scalar(0);
      out(r, c) = e;
      z += e;
    }
    out.row(r) /= z;
  }
  int32_t xi = x.id, yi = x.tape->next_id();
  return x.tape->emit("masked_softmax_rows", {xi}, std::move(out),
                      [xi, yi](Tape<Scalar>& t, const MatX<Scalar>& g) {
                        const MatX<Scalar>& y = t.value(yi);
                        MatX<Scalar> gy = g.cwiseProduct(y);
                        auto s = gy.rowwise().sum();
                        t.accumulate_expr(xi, gy - s.asDiagonal() * y);
                      });
}

template <typename Scalar>
Var<Scalar> log_softmax(Var<Scalar> x, int axis = 1) {
  if (axis != 0 && axis != 1) throw TensorError("log_softmax: axis must be 0 or 1");
  MatX<Scalar> out = x.value();
  if (axis == 1) {
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      auto row = out.row(r);
      Scalar m = row.maxCoeff();
      Scalar lse = std::log((row.array() - m).exp().sum()) + m;
      row.array() -= lse;
    }
  } else {
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      auto col = out.col(c);
      Scalar m = col.maxCoeff();
      Scalar lse = std::log((col.array() - m).exp().sum()) + m;
      col.array() -= lse;
    }
  }
  int32_t xi = x.id, yi = x.tape->next_id();
  return x.tape->emit("log_softmax", {xi}, std::move(out),
                      [xi, yi, axis](Tape<Scalar>& t, const MatX<Scalar>& g) {
                        const MatX<Scalar>& y = t.value(yi);
                        if (axis == 1) {
                          auto s = g.rowwise().sum();
                          t.accumulate_expr(xi, g - s.asDiagonal() * y.array().exp().matrix());
                        } else {
                          auto s = g.colwise().sum();
                          t.accumulate_expr(xi, g - y.array().exp().matrix() * s.asDiagonal());
                        }
                      });
}

// -- Structure: concat / slice / gather ------------------------------------------

template <typename Scalar>
Var<Scalar> concat(const std::vector<Var<Scalar>>& parts, int axis) {
  if (parts.empty()) throw TensorError("concat: no inputs");
  if (axis != 0 && axis != 1) throw TensorError("concat: axis must be 0 or 1");
  Tape<Scalar>* tape = parts[0].tape;
  Eigen::Index rows = parts[0].rows(), cols = parts[0].cols();
  Eigen::Index total = axis == 0 ? rows : cols;
  std::vector<int32_t> ids{parts[0].id};
  for (size_t i = 1; i < parts.size(); ++i) {
    detail::require_same_tape("concat", parts[0], parts[i]);
    if (axis == 0) {
      if (parts[i].cols() != cols)
        throw TensorError("concat: column mismatch " + shape_str(parts[i].rows(), parts[i].cols()));
      total += parts[i].rows();
    } else {
      if (parts[i].rows() != rows)
        throw TensorError("concat: row mismatch " + shape_str(parts[i].rows(), parts[i].cols()));
      total += parts[i].cols();
    }
    ids.push_back(parts[i].id);
  }
  MatX<Scalar> out(axis == 0 ? total : rows, axis == 0 ? cols : total);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    if (axis == 0) {
      out.middleRows(at, p.rows()) = p.value();
      at += p.rows();
    } else {
      out.middleCols(at, p.cols()) = p.value();
      at += p.cols();
    }
  }
  return tape->emit("concat", ids, std::move(out),
                    [ids, axis](Tape<Scalar>& t, const MatX<Scalar>& g) {
                      Eigen::Index at = 0;
                      for (int32_t id : ids) {
                        const auto& v = t.value(id);
                        if (axis == 0) {
                          t.accumulate(id, g.middleRows(at, v.rows()));
                          at += v.rows();
                        } else {
                          t.accumulate(id, g.middleCols(at, v.cols()));
                          at += v.cols();
                        }
                      }
                    });
}

template <typename Scalar>
Var<Scalar> slice(Var<Scalar> x, Eigen::Index r0, Eigen::Index nr, Eigen::Index c0,
                  Eigen::Index nc) {
  if (r0 < 0 || c0 < 0 || nr < 0 || nc < 0 || r0 + nr > x.rows() || c0 + nc > x.cols())
    throw TensorError("slice: window [" + std::to_string(r0) + "+" + std::to_string(nr) + ", " +
                      std::to_string(c0) + "+" + std::to_string(nc) + "] outside " +
                      shape_str(x.rows(), x.cols()));
  int32_t xi = x.id;
  return x.tape->emit("slice", {xi}, x.value().block(r0, c0, nr, nc),
                      [xi, r0, c0, nr, nc](Tape<Scalar>& t, const MatX<Scalar>& g) {
                        t.grad_slot(xi).block(r0, c0, nr, nc) += g;
                      });
}

// Gathers rows of an embedding table: out.row(i) = table.row(ids[i]).
template <typename Scalar>
Var<Scalar> embedding_rows(Var<Scalar> table, std::vector<int32_t> ids) {
  for (int32_t id : ids)
    if (id < 0 || id >= table.rows())
      throw TensorError("embedding_rows: index " + std::to_string(id) + " outside table with " +
                        std::to_string(table.rows()) + " rows");
  MatX<Scalar> out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (size_t i = 0; i < ids.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  int32_t ti = table.id;
  return table.tape->emit("embedding_rows", {ti}, std::move(out),
                          [ti, ids = std::move(ids)](Tape<Scalar>& t, const MatX<Scalar>& g) {
                            auto& slot = t.grad_slot(ti);
                            for (size_t i = 0; i < ids.size(); ++i)
                              slot.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
                          });
}

// Picks one entry per row: out(i, 0) = x(i, ids[i]).
template <typename Scalar>
Var<Scalar> pick(Var<Scalar> x, std::vector<int32_t> ids) {
  if (static_cast<Eigen::Index>(ids.size()) != x.rows())
    throw TensorError("pick: need one index per row, got " + std::to_string(ids.size()) +
                      " for " + shape_str(x.rows(), x.cols()));
  for (int32_t id : ids)
    if (id < 0 || id >= x.cols())
      throw TensorError("pick: column index " + std::to_string(id) + " outside " +
                        shape_str(x.rows(), x.cols()));
  MatX<Scalar> out(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) out(i, 0) = x.value()(i, ids[i]);
  int32_t xi = x.id;
  return x.tape->emit("pick", {xi}, std::move(out),
                      [xi, ids = std::move(ids)](Tape<Scalar>& t, const MatX<Scalar>& g) {
                        auto& slot = t.grad_slot(xi);
                        for (Eigen::Index i = 0; i < g.rows(); ++i) slot(i, ids[i]) += g(i, 0);
                      });
}

// -- Reductions ------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> sum_all(Var<Scalar> x) {
  int32_t xi = x.id;
  Eigen::Index r = x.rows(), c = x.cols();
  MatX<Scalar> out(1, 1);
  out(0, 0) = x.value().sum();
  return x.tape->emit("sum", {xi}, std::move(out),
                      [xi, r, c](Tape<Scalar>& t, const MatX<Scalar>& g) {
                        t.accumulate_expr(xi, MatX<Scalar>::Constant(r, c, g(0, 0)));
                      });
}

template <typename Scalar>
Var<Scalar> mean_all(Var<Scalar> x) {
  int32_t xi = x.id;
  Eigen::Index r = x.rows(), c = x.cols();
  Scalar n = static_cast<Scalar>(r * c);
  MatX<Scalar> out(1, 1);
  out(0, 0) = x.value().sum() / n;
  return x.tape->emit("mean", {xi}, std::move(out),
                      [xi, r, c, n](Tape<Scalar>& t, const MatX<Scalar>& g) {
                        t.accumulate_expr(xi, MatX<Scalar>::Constant(r, c, g(0, 0) / n));
                      });
}

template <typename Scalar>
Var<Scalar> rowsum(Var<Scalar> x) {
  int32_t xi = x.id;
  Eigen::Index c = x.cols();
  return x.tape->emit("rowsum", {xi}, x.value().rowwise().sum(),
                      [xi, c](Tape<Scalar>& t, const MatX<Scalar>& g) {
                        t.accumulate_expr(xi, g * MatX<Scalar>::Ones(1, c));
                      });
}

// -- Block helpers for batched attention ------------------------------------------
// A (S*B x D) matrix is treated as S stacked (B x D) blocks.

template <typename Scalar>
Var<Scalar> repeat_blocks(Var<Scalar> x, Eigen::Index count) {
  if (count < 1) throw TensorError("repeat_blocks: count must be >= 1");
  Eigen::Index b = x.rows(), d = x.cols();
  MatX<Scalar> out(b * count, d);
  for (Eigen::Index s = 0; s < count; ++s) out.middleRows(s * b, b) = x.value();
  int32_t xi = x.id;
  return x.tape->emit("repeat_blocks", {xi}, std::move(out),
                      [xi, b, count](Tape<Scalar>& t, const MatX<Scalar>& g) {
                        auto& slot = t.grad_slot(xi);
                        for (Eigen::Index s = 0; s < count; ++s) slot += g.middleRows(s * b, b);
                      });
}

template <typename Scalar>
Var<Scalar> sum_blocks(Var<Scalar> x, Eigen::Index count) {
  if (count < 1 || x.rows() % count != 0)
    throw TensorError("sum_blocks: rows " + std::to_string(x.rows()) +
                      " not divisible into " + std::to_string(count) + " blocks");
  Eigen::Index b = x.rows() / count, d = x.cols();
  MatX<Scalar> out = MatX<Scalar>::Zero(b, d);
  for (Eigen::Index s = 0; s < count; ++s) out += x.value().middleRows(s * b, b);
  int32_t xi = x.id;
  return x.tape->emit("sum_blocks", {xi}, std::move(out),
                      [xi, b, count](Tape<Scalar>& t, const MatX<Scalar>& g) {
                        auto& slot = t.grad_slot(xi);
                        for (Eigen::Index s = 0; s < count; ++s) slot.middleRows(s * b, b) += g;
                      });
}

// (S*B x 1) column of stacked blocks -> (B x S): out(i, s) = in(s*B + i, 0).
template <typename Scalar>
Var<Scalar> stacked_to_cols(Var<Scalar> x, Eigen::Index count) {
  if (count < 1 || x.cols() != 1 || x.rows() % count != 0)
    throw TensorError("stacked_to_cols: need (S*B x 1) input, got " +
                      shape_str(x.rows(), x.cols()) + " with S=" + std::to_string(count));
  Eigen::Index b = x.rows() / count;
  MatX<Scalar> out(b, count);
  for (Eigen::Index s = 0; s < count; ++s) out.col(s) = x.value().block(s * b, 0, b, 1);
  int32_t xi = x.id;
  return x.tape->emit("stacked_to_cols", {xi}, std::move(out),
                      [xi, b, count](Tape<Scalar>& t, const MatX<Scalar>& g) {
                        auto& slot = t.grad_slot(xi);
                        for (Eigen::Index s = 0; s < count; ++s)
                          slot.block(s * b, 0, b, 1) += g.col(s);
                      });
}

// (B x S) -> (S*B x 1), the inverse layout of stacked_to_cols.
template <typename Scalar>
Var<Scalar> cols_to_stacked(Var<Scalar> x) {
  Eigen::Index b = x.rows(), count = x.cols();
  MatX<Scalar> out(b * count, 1);
  for (Eigen::Index s = 0; s < count; ++s) out.block(s * b, 0, b, 1) = x.value().col(s);
  int32_t xi = x.id;
  return x.tape->emit("cols_to_stacked", {xi}, std::move(out),
                      [xi, b, count](Tape<Scalar>& t, const MatX<Scalar>& g) {
                        auto& slot = t.grad_slot(xi);
                        for (Eigen::Index s = 0; s < count; ++s)
                          slot.col(s) += g.block(s * b, 0, b, 1);
                      });
}

// -- Layer normalization -----------------------------------------------------------

// Per-row normalization to zero mean and unit (population) variance, then
// elementwise scale by gain and shift by bias: y = g .* (x - mu) / sqrt(var + eps) + b.
template <typename Scalar>
Var<Scalar> layer_norm(Var<Scalar> x, Var<Scalar> gain, Var<Scalar> bias, Scalar eps) {
  detail::require_same_tape("layer_norm", x, gain);
  detail::require_same_tape("layer_norm", x, bias);
  if (gain.rows() != 1 || gain.cols() != x.cols() || bias.rows() != 1 || bias.cols() != x.cols())
    throw TensorError("layer_norm: gain/bias must be 1x" + std::to_string(x.cols()) +
                      ", got " + shape_str(gain.rows(), gain.cols()) + " and " +
                      shape_str(bias.rows(), bias.cols()));
  if (eps <= Scalar(0)) throw TensorError("layer_norm: eps must be positive");
  Eigen::Index rows = x.rows();
  MatX<Scalar> xhat(rows, x.cols());
  MatX<Scalar> inv_std(rows, 1);
  for (Eigen::Index r = 0; r < rows; ++r) {
    Scalar mu = x.value().row(r).mean();
    Scalar var = (x.value().row(r).array() - mu).square().mean();
    Scalar is = Scalar(1) / std::sqrt(var + eps);
    inv_std(r, 0) = is;
    xhat.row(r) = ((x.value().row(r).array() - mu) * is).matrix();
  }
  MatX<Scalar> out = xhat * gain.value().row(0).asDiagonal();
  out.rowwise() += bias.value().row(0);
  int32_t xi = x.id, gi = gain.id, bi = bias.id;
  return x.tape->emit(
      "layer_norm", {xi, gi, bi}, std::move(out),
      [xi, gi, bi, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape<Scalar>& t, const MatX<Scalar>& g) {
        t.accumulate_expr(bi, g.colwise().sum());
        t.accumulate_expr(gi, g.cwiseProduct(xhat).colwise().sum());
        // dxhat = g .* gain;  dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat .* xhat))
        MatX<Scalar> dxhat = g * t.value(gi).row(0).asDiagonal();
        MatX<Scalar> m1 = dxhat.rowwise().mean();
        MatX<Scalar> m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
        MatX<Scalar> dx = dxhat;
        dx.colwise() -= m1.col(0);
        dx -= m2.col(0).asDiagonal() * xhat;
        dx = inv_std.col(0).asDiagonal() * dx;
        t.accumulate(xi, std::move(dx));
      });
}

}  // namespace lowmt
