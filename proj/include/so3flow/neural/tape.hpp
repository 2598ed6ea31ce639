// Copyright 2026 The so3flow Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reverse-mode differentiation over a Wengert list of matrix-valued nodes.
// The op set is exactly what the pose network needs; nothing more.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "so3flow/neural/parameters.hpp"

namespace so3flow::neural {

/// Handle to a node on a specific tape.
struct Var {
  std::size_t id = 0;
  const void* owner = nullptr;
  std::uint64_t generation = 0;
};

template <typename T>
class Tape {
 public:
  using Matrix = Mat<T>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Constant input; receives no gradient.
  Var input(const Matrix& value) {
    Node& n = emplace(Op::Input);
    n.value = value;
    return commit();
  }

  /// Leaf bound to a named tensor of `store`. All parameters on one tape must
  /// come from the same store.
  Var param(const BasicParameterStore<T>& store, const std::string& name) {
    if (store_ == nullptr) store_ = &store;
    if (store_ != &store) throw Error(ErrorKind::ShapeMismatch, "tape already bound to another store");
    Node& n = emplace(Op::Param);
    n.param_index = store.index_of(name);
    n.value = store.at(n.param_index).matrix();
    n.requires_grad = true;
    return commit();
  }

  /// y = x w^T + b, with x (n x in), w (out x in), b (1 x out) broadcast over rows.
  Var linear(Var x, Var w, Var b) {
    const Matrix& xv = value(x);
    const Matrix& wv = value(w);
    const Matrix& bv = value(b);
    if (xv.cols() != wv.cols() || bv.rows() != 1 || bv.cols() != wv.rows()) {
      throw Error(ErrorKind::DimMismatch, "linear: incompatible shapes");
    }
    Node& n = emplace(Op::Linear, {x.id, w.id, b.id});
    n.value.resize(xv.rows(), wv.rows());
    n.value.noalias() = xv * wv.transpose();
    n.value.rowwise() += bv.row(0);
    return commit();
  }

  Var relu(Var x) {
    const Matrix& xv = value(x);
    Node& n = emplace(Op::Relu, {x.id});
    n.value = xv.cwiseMax(T(0));
    return commit();
  }

  Var softplus(Var x) {
    const Matrix& xv = value(x);
    Node& n = emplace(Op::Softplus, {x.id});
    n.value = xv.unaryExpr([](T v) { return softplus_scalar(v); });
    return commit();
  }

  /// Column-wise max over rows: (n x c) -> (1 x c). Ties go to the lowest row.
  Var max_rows(Var x) {
    const Matrix& xv = value(x);
    if (xv.rows() == 0) throw Error(ErrorKind::DimMismatch, "max over zero rows");
    Node& n = emplace(Op::MaxRows, {x.id});
    n.value = xv.row(0);
    n.argmax.assign(static_cast<std::size_t>(xv.cols()), 0);
    for (Eigen::Index r = 1; r < xv.rows(); ++r) {
      const T* row = xv.data() + r * xv.cols();
      for (Eigen::Index c = 0; c < xv.cols(); ++c) {
        if (row[c] > n.value(0, c)) {
          n.value(0, c) = row[c];
          n.argmax[static_cast<std::size_t>(c)] = r;
        }
      }
    }
    return commit();
  }

  Var mul(Var a, Var b) {
    check_same_shape(a, b, "mul");
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    Node& n = emplace(Op::Mul, {a.id, b.id});
    n.value = av.cwiseProduct(bv);
    return commit();
  }

  Var add(Var a, Var b) {
    check_same_shape(a, b, "add");
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    Node& n = emplace(Op::Add, {a.id, b.id});
    n.value = av + bv;
    return commit();
  }

  /// Horizontal concatenation of row vectors / matrices with equal row counts.
  Var concat_cols(std::initializer_list<Var> parts) {
    Eigen::Index rows = -1;
    Eigen::Index cols = 0;
    for (Var p : parts) {
      const Matrix& pv = value(p);
      if (rows >= 0 && pv.rows() != rows) throw Error(ErrorKind::DimMismatch, "concat: row mismatch");
      rows = pv.rows();
      cols += pv.cols();
    }
    Node& n = emplace(Op::Concat);
    for (Var p : parts) n.inputs.push_back(p.id);
    n.value.resize(rows, cols);
    Eigen::Index off = 0;
    for (Var p : parts) {
      const Matrix& pv = value(p);
      n.value.middleCols(off, pv.cols()) = pv;
      off += pv.cols();
    }
    return commit();
  }

  /// Row lookup into a table node: (r x c) -> (1 x c).
  Var gather_row(Var table, std::size_t row) {
    const Matrix& tv = value(table);
    if (static_cast<Eigen::Index>(row) >= tv.rows()) throw Error(ErrorKind::DimMismatch, "gather_row out of range");
    Node& n = emplace(Op::GatherRow, {table.id});
    n.row = static_cast<Eigen::Index>(row);
    n.value = tv.row(n.row);
    return commit();
  }

  /// sum((pred - target)^2), evaluated in double. Scalar node.
  Var squared_error(Var pred, const Matrix& target) {
    const Matrix& pv = value(pred);
    if (pv.rows() != target.rows() || pv.cols() != target.cols()) {
      throw Error(ErrorKind::DimMismatch, "squared_error: shape mismatch");
    }
    Node& n = emplace(Op::SquaredError, {pred.id});
    n.target = target;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < pv.size(); ++i) {
      const double d = static_cast<double>(pv.data()[i]) - static_cast<double>(target.data()[i]);
      acc += d * d;
    }
    n.scalar = acc;
    n.value = Matrix::Constant(1, 1, static_cast<T>(acc));
    return commit();
  }

  /// sum_i w_i * s_i over scalar nodes, evaluated in double.
  Var weighted_sum(std::initializer_list<std::pair<Var, double>> terms) {
    for (const auto& [v, w] : terms) {
      if (value(v).size() != 1) throw Error(ErrorKind::DimMismatch, "weighted_sum expects scalars");
    }
    Node& n = emplace(Op::WeightedSum);
    double acc = 0.0;
    for (const auto& [v, w] : terms) {
      n.inputs.push_back(v.id);
      n.weights.push_back(w);
      acc += w * nodes_[v.id].scalar;
    }
    n.scalar = acc;
    n.value = Matrix::Constant(1, 1, static_cast<T>(acc));
    return commit();
  }

  const Matrix& value(Var v) const { return nodes_[checked(v)].value; }

  /// Double-precision value of a scalar loss node.
  double scalar(Var v) const { return nodes_[checked(v)].scalar; }

  std::size_t size() const { return size_; }

  /// Forgets the recorded graph but keeps node buffers for reuse, so a tape
  /// recycled across samples stops allocating after the first pass.
  void reset() {
    size_ = 0;
    store_ = nullptr;
    ++generation_;
  }

  /// Gradient of a scalar node with respect to every tensor of the bound store,
  /// in the store's layout. Tensors the loss does not touch get zeros.
  BasicParameterStore<T> backward(Var loss) {
    if (store_ == nullptr) throw Error(ErrorKind::GraphNotRecorded, "no parameters recorded on tape");
    BasicParameterStore<T> grads = store_->zeros_like();
    backward_into(loss, grads);
    return grads;
  }

  /// Adds the gradient of `loss` into `grads` (same layout as the bound store).
  void backward_into(Var loss, BasicParameterStore<T>& grads) {
    if (loss.owner != this || loss.generation != generation_ || loss.id >= size_) {
      throw Error(ErrorKind::GraphNotRecorded, "loss node is not on this tape");
    }
    if (nodes_[loss.id].value.size() != 1) throw Error(ErrorKind::GraphNotRecorded, "loss must be a scalar node");
    if (store_ == nullptr) throw Error(ErrorKind::GraphNotRecorded, "no parameters recorded on tape");
    if (grads.tensor_count() != store_->tensor_count()) {
      throw Error(ErrorKind::ShapeMismatch, "gradient store layout differs from parameters");
    }

    if (grad_.size() < loss.id + 1) grad_.resize(loss.id + 1);
    live_.assign(loss.id + 1, 0);
    slot(loss.id, 1, 1)(0, 0) = T(1);

    for (std::size_t k = loss.id + 1; k-- > 0;) {
      if (!live_[k]) continue;
      const Node& n = nodes_[k];
      const Matrix& dy = grad_[k];
      switch (n.op) {
        case Op::Input:
          break;
        case Op::Param:
          grads.at(n.param_index).matrix() += dy;
          break;
        case Op::Linear:
          linear_backward(n, dy);
          break;
        case Op::Relu: {
          if (!needs_grad(n.inputs[0])) break;
          Matrix& dx = slot(n.inputs[0], dy.rows(), dy.cols());
          dx.array() += (n.value.array() > T(0)).select(dy.array(), T(0));
          break;
        }
        case Op::Softplus: {
          if (!needs_grad(n.inputs[0])) break;
          const Matrix& x = nodes_[n.inputs[0]].value;
          Matrix& dx = slot(n.inputs[0], dy.rows(), dy.cols());
          dx.array() += dy.array() * x.array().unaryExpr([](T v) { return sigmoid_scalar(v); });
          break;
        }
        case Op::MaxRows: {
          if (!needs_grad(n.inputs[0])) break;
          const Matrix& x = nodes_[n.inputs[0]].value;
          Matrix& dx = slot(n.inputs[0], x.rows(), x.cols());
          for (std::size_t c = 0; c < n.argmax.size(); ++c) {
            dx(n.argmax[c], static_cast<Eigen::Index>(c)) += dy(0, static_cast<Eigen::Index>(c));
          }
          break;
        }
        case Op::Mul: {
          const Matrix& a = nodes_[n.inputs[0]].value;
          const Matrix& b = nodes_[n.inputs[1]].value;
          if (needs_grad(n.inputs[0])) slot(n.inputs[0], a.rows(), a.cols()).array() += dy.array() * b.array();
          if (needs_grad(n.inputs[1])) slot(n.inputs[1], b.rows(), b.cols()).array() += dy.array() * a.array();
          break;
        }
        case Op::Add:
          for (std::size_t in : n.inputs) {
            if (needs_grad(in)) slot(in, dy.rows(), dy.cols()) += dy;
          }
          break;
        case Op::Concat: {
          Eigen::Index off = 0;
          for (std::size_t in : n.inputs) {
            const Eigen::Index c = nodes_[in].value.cols();
            if (needs_grad(in)) slot(in, dy.rows(), c) += dy.middleCols(off, c);
            off += c;
          }
          break;
        }
        case Op::GatherRow: {
          if (!needs_grad(n.inputs[0])) break;
          const Matrix& t = nodes_[n.inputs[0]].value;
          slot(n.inputs[0], t.rows(), t.cols()).row(n.row) += dy.row(0);
          break;
        }
        case Op::SquaredError: {
          if (!needs_grad(n.inputs[0])) break;
          const Matrix& p = nodes_[n.inputs[0]].value;
          slot(n.inputs[0], p.rows(), p.cols()) += T(2) * dy(0, 0) * (p - n.target);
          break;
        }
        case Op::WeightedSum:
          for (std::size_t i = 0; i < n.inputs.size(); ++i) {
            if (needs_grad(n.inputs[i])) slot(n.inputs[i], 1, 1)(0, 0) += dy(0, 0) * static_cast<T>(n.weights[i]);
          }
          break;
      }
    }
  }

  static T softplus_scalar(T v) {
    // log(1 + e^v) without overflow
    return v > T(0) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  }
  static T sigmoid_scalar(T v) {
    if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
    const T e = std::exp(v);
    return e / (T(1) + e);
  }

 private:
  enum class Op { Input, Param, Linear, Relu, Softplus, MaxRows, Mul, Add, Concat, GatherRow, SquaredError, WeightedSum };

  struct Node {
    Op op = Op::Input;
    Matrix value;
    std::vector<std::size_t> inputs;
    bool requires_grad = false;
    std::size_t param_index = 0;
    std::vector<Eigen::Index> argmax;
    Eigen::Index row = 0;
    Matrix target;
    std::vector<double> weights;
    double scalar = 0.0;
  };

  // Nodes live in a deque so references stay valid while new nodes are added.
  Node& emplace(Op op, std::initializer_list<std::size_t> inputs = {}) {
    if (size_ == nodes_.size()) nodes_.emplace_back();
    Node& n = nodes_[size_];
    n.op = op;
    n.inputs.assign(inputs.begin(), inputs.end());
    n.requires_grad = false;
    n.weights.clear();
    n.scalar = 0.0;
    return n;
  }

  Var commit() {
    Node& n = nodes_[size_];
    if (n.op != Op::Input && n.op != Op::Param) {
      for (std::size_t in : n.inputs) n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
    }
    return Var{size_++, this, generation_};
  }

  std::size_t checked(Var v) const {
    if (v.owner != this || v.generation != generation_ || v.id >= size_) {
      throw Error(ErrorKind::GraphNotRecorded, "variable is not on this tape");
    }
    return v.id;
  }

  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer for node `id`, zeroed on first touch in this pass.
  Matrix& slot(std::size_t id, Eigen::Index rows, Eigen::Index cols) {
    Matrix& g = grad_[id];
    if (!live_[id]) {
      g.setZero(rows, cols);
      live_[id] = 1;
    }
    return g;
  }

  void linear_backward(const Node& n, const Matrix& dy) {
    const std::size_t xi = n.inputs[0];
    const std::size_t wi = n.inputs[1];
    const std::size_t bi = n.inputs[2];
    const Matrix& x = nodes_[xi].value;
    const Matrix& w = nodes_[wi].value;
    if (needs_grad(bi)) slot(bi, 1, dy.cols()) += dy.colwise().sum();

    // Behind a max pool only a few rows of dy are nonzero; gather them.
    sparse_rows_.clear();
    if (dy.rows() > 16) {
      for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        if ((dy.row(r).array() != T(0)).any()) sparse_rows_.push_back(r);
      }
    }
    if (dy.rows() > 16 && 2 * static_cast<Eigen::Index>(sparse_rows_.size()) < dy.rows()) {
      const auto k = static_cast<Eigen::Index>(sparse_rows_.size());
      dy_rows_.resize(k, dy.cols());
      x_rows_.resize(k, x.cols());
      for (Eigen::Index i = 0; i < k; ++i) {
        dy_rows_.row(i) = dy.row(sparse_rows_[static_cast<std::size_t>(i)]);
        x_rows_.row(i) = x.row(sparse_rows_[static_cast<std::size_t>(i)]);
      }
      if (needs_grad(wi)) slot(wi, w.rows(), w.cols()).noalias() += dy_rows_.transpose() * x_rows_;
      if (needs_grad(xi)) {
        Matrix& dx = slot(xi, x.rows(), x.cols());
        dx_rows_.noalias() = dy_rows_ * w;
        for (Eigen::Index i = 0; i < k; ++i) dx.row(sparse_rows_[static_cast<std::size_t>(i)]) += dx_rows_.row(i);
      }
      return;
    }
    if (needs_grad(wi)) slot(wi, w.rows(), w.cols()).noalias() += dy.transpose() * x;
    if (needs_grad(xi)) slot(xi, x.rows(), x.cols()).noalias() += dy * w;
  }

  void check_same_shape(Var a, Var b, const char* what) const {
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    if (av.rows() != bv.rows() || av.cols() != bv.cols()) {
      throw Error(ErrorKind::DimMismatch, std::string(what) + ": shape mismatch");
    }
  }

  std::deque<Node> nodes_;
  std::size_t size_ = 0;
  std::uint64_t generation_ = 0;
  const BasicParameterStore<T>* store_ = nullptr;

  // backward scratch
  std::vector<Matrix> grad_;
  std::vector<char> live_;
  std::vector<Eigen::Index> sparse_rows_;
  Matrix dy_rows_;
  Matrix x_rows_;
  Matrix dx_rows_;
};

}  // namespace so3flow::neural
