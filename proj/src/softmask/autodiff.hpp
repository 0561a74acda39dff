// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

// Reverse-mode automatic differentiation over dense double matrices.
//
// A Tape records every operation applied to its variables together with a
// closure that maps the output gradient onto input gradients. Backward passes
// never mutate the tape, so several independent gradient queries (for example
// the Grad-CAM probe and the training loss) can run against one forward graph.

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace softmask::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr && id_ >= 0; }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  // Value of a 1x1 variable.
  double scalar() const;
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::size_t n) : grads_(n), present_(n, 0) {}

  bool has(Var v) const {
    return v.id() >= 0 && static_cast<std::size_t>(v.id()) < present_.size() && present_[v.id()];
  }
  // Gradient of the queried output w.r.t. v; zeros when v is not on a path.
  Matrix get(Var v) const;
  void accumulate(int id, const Matrix& g);

 private:
  std::vector<Matrix> grads_;
  std::vector<char> present_;

  friend class Tape;
};

class Tape {
 public:
  using Backward = std::function<void(const Matrix& grad_out, const Matrix& out_value, Gradients& acc)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Matrix value, std::span<const Var> inputs, Backward backward);

  const Matrix& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Gradients of a 1x1 output. Nodes created before `lowest` are skipped,
  // which bounds the work when only recently created variables are queried.
  Gradients backward(Var output, int lowest = 0) const;
  // Convenience: gradients of `output` restricted to `wrt`.
  std::vector<Matrix> gradients(Var output, std::span<const Var> wrt) const;

 private:
  struct Node {
    Matrix value;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Operations. Every function returns a new variable on the tape of its
// inputs; constants and variables from different tapes must not be mixed.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var affine(Var a, double scale, double shift);
inline Var scale(Var a, double s) { return affine(a, s, 0.0); }
inline Var neg(Var a) { return affine(a, -1.0, 0.0); }
// Multiplies every entry of `a` by the 1x1 variable `s`.
Var scale_by(Var a, Var s);
Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * b^T
Var transpose(Var a);
// Adds the 1xC row `bias` to every row of `a`.
Var add_row(Var a, Var bias);
Var exp(Var a);
Var log(Var a);
Var pow(Var a, double exponent);
Var gelu(Var a);
Var relu(Var a);
// Row softmax. Columns with key_valid[c] == false receive probability 0.
Var softmax_rows(Var a, const std::vector<bool>* key_valid = nullptr);
Var log_softmax_rows(Var a);
Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-6);
Var l2_normalize_rows(Var a, double eps = 1e-12);
Var slice(Var a, Eigen::Index row, Eigen::Index nrows, Eigen::Index col, Eigen::Index ncols);
inline Var row(Var a, Eigen::Index r) { return slice(a, r, 1, 0, a.cols()); }
Var hconcat(std::span<const Var> parts);
Var vconcat(std::span<const Var> parts);
Var gather_rows(Var a, std::span<const int> rows);
// Column vector of a(rows[i], cols[i]).
Var gather_entries(Var a, std::span<const std::pair<int, int>> entries);
// Scales row i of `a` by the constant weights[i].
Var scale_rows(Var a, const Vector& weights);
Var sum(Var a);
Var mean(Var a);

// Per-row cross-entropy -log softmax(logits)[target], as a column vector.
Var cross_entropy_rows(Var logits, std::span<const int> targets);

}  // namespace softmask::ad
