// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

#include "softmask/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "softmask/errors.hpp"

namespace softmask::ad {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.value()) + " vs " +
                     shape_str(b.value()));
  }
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw GraphError("operation on an unbound variable");
  return *a.tape();
}

void accumulate_if(Gradients& acc, Var v, const Matrix& g) {
  if (v.requires_grad()) acc.accumulate(v.id(), g);
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("scalar() on a " + shape_str(v) + " variable");
  return v(0, 0);
}

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Matrix Gradients::get(Var v) const {
  if (has(v)) return grads_[v.id()];
  return Matrix::Zero(v.rows(), v.cols());
}

void Gradients::accumulate(int id, const Matrix& g) {
  if (present_[id]) {
    grads_[id] += g;
  } else {
    grads_[id] = g;
    present_[id] = 1;
  }
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), false, {}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), true, {}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var& v : inputs) needs = needs || v.requires_grad();
  if (needs) {
    nodes_.push_back(Node{std::move(value), true, std::move(backward)});
  } else {
    nodes_.push_back(Node{std::move(value), false, {}});
  }
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Gradients Tape::backward(Var output, int lowest) const {
  if (output.tape() != this) throw GraphError("backward on a foreign variable");
  if (output.value().size() != 1) throw ShapeError("backward needs a scalar output");
  Gradients acc(nodes_.size());
  acc.accumulate(output.id(), Matrix::Ones(1, 1));
  for (int id = output.id(); id >= std::max(lowest, 0); --id) {
    const Node& node = nodes_[id];
    if (!acc.present_[id] || !node.requires_grad || !node.backward) continue;
    node.backward(acc.grads_[id], node.value, acc);
  }
  return acc;
}

std::vector<Matrix> Tape::gradients(Var output, std::span<const Var> wrt) const {
  int lowest = output.id();
  for (const Var& v : wrt) lowest = std::min(lowest, v.id());
  Gradients g = backward(output, lowest);
  std::vector<Matrix> out;
  out.reserve(wrt.size());
  for (const Var& v : wrt) out.push_back(g.get(v));
  return out;
}

// ---------------------------------------------------------------------------

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  return tape_of(a).record(a.value() + b.value(), {a, b},
                           [a, b](const Matrix& g, const Matrix&, Gradients& acc) {
                             accumulate_if(acc, a, g);
                             accumulate_if(acc, b, g);
                           });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  return tape_of(a).record(a.value() - b.value(), {a, b},
                           [a, b](const Matrix& g, const Matrix&, Gradients& acc) {
                             accumulate_if(acc, a, g);
                             accumulate_if(acc, b, -g);
                           });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  return tape_of(a).record(a.value().cwiseProduct(b.value()), {a, b},
                           [a, b](const Matrix& g, const Matrix&, Gradients& acc) {
                             accumulate_if(acc, a, g.cwiseProduct(b.value()));
                             accumulate_if(acc, b, g.cwiseProduct(a.value()));
                           });
}

Var affine(Var a, double s, double shift) {
  Matrix out = (a.value() * s).array() + shift;
  return tape_of(a).record(std::move(out), {a},
                           [a, s](const Matrix& g, const Matrix&, Gradients& acc) {
                             accumulate_if(acc, a, g * s);
                           });
}

Var scale_by(Var a, Var s) {
  const double sv = s.scalar();
  return tape_of(a).record(a.value() * sv, {a, s},
                           [a, s](const Matrix& g, const Matrix&, Gradients& acc) {
                             accumulate_if(acc, a, g * s.scalar());
                             if (s.requires_grad()) {
                               acc.accumulate(s.id(),
                                              Matrix::Constant(1, 1, g.cwiseProduct(a.value()).sum()));
                             }
                           });
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a.value()) + " * " + shape_str(b.value()));
  }
  return tape_of(a).record(a.value() * b.value(), {a, b},
                           [a, b](const Matrix& g, const Matrix&, Gradients& acc) {
                             if (a.requires_grad()) acc.accumulate(a.id(), g * b.value().transpose());
                             if (b.requires_grad()) acc.accumulate(b.id(), a.value().transpose() * g);
                           });
}

Var matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: " + shape_str(a.value()) + " * " + shape_str(b.value()) + "^T");
  }
  return tape_of(a).record(a.value() * b.value().transpose(), {a, b},
                           [a, b](const Matrix& g, const Matrix&, Gradients& acc) {
                             if (a.requires_grad()) acc.accumulate(a.id(), g * b.value());
                             if (b.requires_grad()) acc.accumulate(b.id(), g.transpose() * a.value());
                           });
}

Var transpose(Var a) {
  return tape_of(a).record(a.value().transpose(), {a},
                           [a](const Matrix& g, const Matrix&, Gradients& acc) {
                             accumulate_if(acc, a, g.transpose());
                           });
}

Var add_row(Var a, Var bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw ShapeError("add_row: bias " + shape_str(bias.value()) + " for " + shape_str(a.value()));
  }
  Matrix out = a.value().rowwise() + bias.value().row(0);
  return tape_of(a).record(std::move(out), {a, bias},
                           [a, bias](const Matrix& g, const Matrix&, Gradients& acc) {
                             accumulate_if(acc, a, g);
                             if (bias.requires_grad()) acc.accumulate(bias.id(), g.colwise().sum());
                           });
}

Var exp(Var a) {
  return tape_of(a).record(a.value().array().exp().matrix(), {a},
                           [a](const Matrix& g, const Matrix& out, Gradients& acc) {
                             accumulate_if(acc, a, g.cwiseProduct(out));
                           });
}

Var log(Var a) {
  return tape_of(a).record(a.value().array().log().matrix(), {a},
                           [a](const Matrix& g, const Matrix&, Gradients& acc) {
                             accumulate_if(acc, a, g.cwiseQuotient(a.value()));
                           });
}

Var pow(Var a, double p) {
  Matrix out = a.value().array().pow(p).matrix();
  return tape_of(a).record(std::move(out), {a},
                           [a, p](const Matrix& g, const Matrix&, Gradients& acc) {
                             if (!a.requires_grad()) return;
                             if (p == 0.0) return;
                             Matrix d = (a.value().array().pow(p - 1.0) * p).matrix();
                             acc.accumulate(a.id(), g.cwiseProduct(d));
                           });
}

Var gelu(Var a) {
  const Matrix& x = a.value();
  Matrix out = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); });
  return tape_of(a).record(std::move(out), {a}, [a](const Matrix& g, const Matrix&, Gradients& acc) {
    if (!a.requires_grad()) return;
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    Matrix d = a.value().unaryExpr([inv_sqrt_2pi](double v) {
      return 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
    });
    acc.accumulate(a.id(), g.cwiseProduct(d));
  });
}

Var relu(Var a) {
  return tape_of(a).record(a.value().cwiseMax(0.0), {a},
                           [a](const Matrix& g, const Matrix&, Gradients& acc) {
                             if (!a.requires_grad()) return;
                             Matrix d = (a.value().array() > 0.0).cast<double>().matrix();
                             acc.accumulate(a.id(), g.cwiseProduct(d));
                           });
}

Var softmax_rows(Var a, const std::vector<bool>* key_valid) {
  const Matrix& x = a.value();
  if (key_valid && static_cast<Eigen::Index>(key_valid->size()) != x.cols()) {
    throw ShapeError("softmax_rows: key mask length mismatch");
  }
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (!key_valid || (*key_valid)[c]) mx = std::max(mx, x(r, c));
    }
    if (!std::isfinite(mx)) throw DomainError("softmax_rows: no valid key");
    double total = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double e = (!key_valid || (*key_valid)[c]) ? std::exp(x(r, c) - mx) : 0.0;
      out(r, c) = e;
      total += e;
    }
    out.row(r) /= total;
  }
  return tape_of(a).record(std::move(out), {a}, [a](const Matrix& g, const Matrix& y, Gradients& acc) {
    if (!a.requires_grad()) return;
    Vector dot = g.cwiseProduct(y).rowwise().sum();
    Matrix ga = y.cwiseProduct(g.colwise() - dot);
    acc.accumulate(a.id(), ga);
  });
}

Var log_softmax_rows(Var a) {
  const Matrix& x = a.value();
  Vector mx = x.rowwise().maxCoeff();
  Matrix shifted = x.colwise() - mx;
  Vector lse = shifted.array().exp().rowwise().sum().log().matrix();
  Matrix out = shifted.colwise() - lse;
  return tape_of(a).record(std::move(out), {a}, [a](const Matrix& g, const Matrix& y, Gradients& acc) {
    if (!a.requires_grad()) return;
    Matrix sm = y.array().exp().matrix();
    Vector gs = g.rowwise().sum();
    Matrix ga = g - (sm.array().colwise() * gs.array()).matrix();
    acc.accumulate(a.id(), ga);
  });
}

Var layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
  const Eigen::Index n = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != n || beta.rows() != 1 || beta.cols() != n) {
    throw ShapeError("layer_norm_rows: affine parameters must be 1x" + std::to_string(n));
  }
  const Matrix& xv = x.value();
  Vector mu = xv.rowwise().mean();
  Matrix centered = xv.colwise() - mu;
  Vector inv_std = (centered.array().square().rowwise().mean() + eps).rsqrt().matrix();
  Matrix xhat = centered.array().colwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);
  return tape_of(x).record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat, inv_std](const Matrix& g, const Matrix&, Gradients& acc) {
        if (gamma.requires_grad()) acc.accumulate(gamma.id(), g.cwiseProduct(xhat).colwise().sum());
        if (beta.requires_grad()) acc.accumulate(beta.id(), g.colwise().sum());
        if (!x.requires_grad()) return;
        Matrix gxhat = g.array().rowwise() * gamma.value().row(0).array();
        Vector m1 = gxhat.rowwise().mean();
        Vector m2 = gxhat.cwiseProduct(xhat).rowwise().mean();
        Matrix gx = gxhat.colwise() - m1;
        gx -= (xhat.array().colwise() * m2.array()).matrix();
        gx = gx.array().colwise() * inv_std.array();
        acc.accumulate(x.id(), gx);
      });
}

Var l2_normalize_rows(Var a, double eps) {
  const Matrix& x = a.value();
  Vector norms = x.rowwise().norm().cwiseMax(eps);
  Matrix out = x.array().colwise() / norms.array();
  return tape_of(a).record(std::move(out), {a},
                           [a, norms](const Matrix& g, const Matrix& y, Gradients& acc) {
                             if (!a.requires_grad()) return;
                             Vector dot = g.cwiseProduct(y).rowwise().sum();
                             Matrix ga = g - (y.array().colwise() * dot.array()).matrix();
                             ga = ga.array().colwise() / norms.array();
                             acc.accumulate(a.id(), ga);
                           });
}

Var slice(Var a, Eigen::Index r0, Eigen::Index nr, Eigen::Index c0, Eigen::Index nc) {
  if (r0 < 0 || c0 < 0 || nr < 0 || nc < 0 || r0 + nr > a.rows() || c0 + nc > a.cols()) {
    throw ShapeError("slice out of range on " + shape_str(a.value()));
  }
  Matrix out = a.value().block(r0, c0, nr, nc);
  return tape_of(a).record(std::move(out), {a},
                           [a, r0, nr, c0, nc](const Matrix& g, const Matrix&, Gradients& acc) {
                             if (!a.requires_grad()) return;
                             Matrix ga = Matrix::Zero(a.rows(), a.cols());
                             ga.block(r0, c0, nr, nc) = g;
                             acc.accumulate(a.id(), ga);
                           });
}

Var hconcat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("hconcat of nothing");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("hconcat: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape_of(parts[0]).record(std::move(out), parts,
                                  [inputs](const Matrix& g, const Matrix&, Gradients& acc) {
                                    Eigen::Index c = 0;
                                    for (const Var& p : inputs) {
                                      if (p.requires_grad()) acc.accumulate(p.id(), g.middleCols(c, p.cols()));
                                      c += p.cols();
                                    }
                                  });
}

Var vconcat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("vconcat of nothing");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("vconcat: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape_of(parts[0]).record(std::move(out), parts,
                                  [inputs](const Matrix& g, const Matrix&, Gradients& acc) {
                                    Eigen::Index r = 0;
                                    for (const Var& p : inputs) {
                                      if (p.requires_grad()) acc.accumulate(p.id(), g.middleRows(r, p.rows()));
                                      r += p.rows();
                                    }
                                  });
}

Var gather_rows(Var a, std::span<const int> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) throw ShapeError("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return tape_of(a).record(std::move(out), {a}, [a, idx](const Matrix& g, const Matrix&, Gradients& acc) {
    if (!a.requires_grad()) return;
    Matrix ga = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    acc.accumulate(a.id(), ga);
  });
}

Var gather_entries(Var a, std::span<const std::pair<int, int>> entries) {
  Matrix out(static_cast<Eigen::Index>(entries.size()), 1);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto [r, c] = entries[i];
    if (r < 0 || r >= a.rows() || c < 0 || c >= a.cols()) {
      throw ShapeError("gather_entries: index out of range");
    }
    out(static_cast<Eigen::Index>(i), 0) = a.value()(r, c);
  }
  std::vector<std::pair<int, int>> idx(entries.begin(), entries.end());
  return tape_of(a).record(std::move(out), {a}, [a, idx](const Matrix& g, const Matrix&, Gradients& acc) {
    if (!a.requires_grad()) return;
    Matrix ga = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) ga(idx[i].first, idx[i].second) += g(static_cast<Eigen::Index>(i), 0);
    acc.accumulate(a.id(), ga);
  });
}

Var scale_rows(Var a, const Vector& weights) {
  if (weights.size() != a.rows()) {
    throw ShapeError("scale_rows: " + std::to_string(weights.size()) + " weights for " +
                     shape_str(a.value()));
  }
  Matrix out = a.value().array().colwise() * weights.array();
  return tape_of(a).record(std::move(out), {a},
                           [a, weights](const Matrix& g, const Matrix&, Gradients& acc) {
                             if (!a.requires_grad()) return;
                             acc.accumulate(a.id(), (g.array().colwise() * weights.array()).matrix());
                           });
}

Var sum(Var a) {
  return tape_of(a).record(Matrix::Constant(1, 1, a.value().sum()), {a},
                           [a](const Matrix& g, const Matrix&, Gradients& acc) {
                             accumulate_if(acc, a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
                           });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw ShapeError("mean of an empty variable");
  return tape_of(a).record(Matrix::Constant(1, 1, a.value().sum() / n), {a},
                           [a, n](const Matrix& g, const Matrix&, Gradients& acc) {
                             accumulate_if(acc, a, Matrix::Constant(a.rows(), a.cols(), g(0, 0) / n));
                           });
}

Var cross_entropy_rows(Var logits, std::span<const int> targets) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows()) {
    throw ShapeError("cross_entropy_rows: one target per row required");
  }
  std::vector<std::pair<int, int>> entries;
  entries.reserve(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) entries.emplace_back(static_cast<int>(i), targets[i]);
  return neg(gather_entries(log_softmax_rows(logits), entries));
}

}  // namespace softmask::ad
