// SPDX-License-Identifier: Apache-2.0
#include "fairlora/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace fairlora {

namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ContractViolation(std::string(op) + ": shape mismatch " + shape(a) + " vs " + shape(b));
  }
}

// c += a · b
void gemm_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t n = a.rows(), inner = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    auto crow = c.row(i);
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = a(i, k);
      auto brow = b.row(k);
      for (std::size_t j = 0; j < m; ++j) crow[j] += aik * brow[j];
    }
  }
}

// c += a · bᵀ
void gemm_nt_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t n = a.rows(), m = b.rows(), inner = a.cols();
  for (std::size_t i = 0; i < n; ++i) {
    auto arow = a.row(i);
    for (std::size_t j = 0; j < m; ++j) {
      auto brow = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < inner; ++k) s += arow[k] * brow[k];
      c(i, j) += s;
    }
  }
}

// c += aᵀ · b
void gemm_tn_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t inner = a.rows(), n = a.cols(), m = b.cols();
  for (std::size_t k = 0; k < inner; ++k) {
    auto arow = a.row(k);
    auto brow = b.row(k);
    for (std::size_t i = 0; i < n; ++i) {
      const double aki = arow[i];
      auto crow = c.row(i);
      for (std::size_t j = 0; j < m; ++j) crow[j] += aki * brow[j];
    }
  }
}

Tape& same_tape(Var a, Var b) {
  if (!a.valid() || a.tape() != b.tape()) throw ContractViolation("operands live on different tapes");
  return *a.tape();
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw ContractViolation("invalid Var");
  return *a.tape();
}

void add_into(Matrix& dst, const Matrix& src, double s = 1.0) {
  auto d = dst.data();
  auto v = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s * v[i];
}

}  // namespace

// ---------------------------------------------------------------- Matrix

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ContractViolation("Matrix: data length " + std::to_string(data_.size()) +
                            " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ContractViolation("Matrix::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ContractViolation("matmul: inner dimensions differ " + shape(a) + " x " + shape(b));
  }
  Matrix c(a.rows(), b.cols());
  gemm_acc(a, b, c);
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

std::vector<double> matvec(const Matrix& m, std::span<const double> x) {
  if (m.cols() != x.size()) {
    throw ContractViolation("matvec: " + shape(m) + " applied to length " + std::to_string(x.size()));
  }
  std::vector<double> y(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    double s = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) s += row[k] * x[k];
    y[i] = s;
  }
  return y;
}

// ---------------------------------------------------------------- Var

const Matrix& Var::value() const {
  if (!tape_) throw ContractViolation("invalid Var");
  return tape_->value(id_);
}

const Matrix& Var::grad() const {
  if (!tape_) throw ContractViolation("invalid Var");
  return tape_->grad(id_);
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ContractViolation("Var::scalar on " + shape(v) + " node");
  return v(0, 0);
}

// ---------------------------------------------------------------- Tape

Var Tape::add_leaf(Matrix value, bool differentiable, Parameter* p) {
  Node node;
  node.requires_grad = differentiable && record_;
  if (node.requires_grad) node.grad = Matrix(value.rows(), value.cols());
  node.value = std::move(value);
  node.param = node.requires_grad ? p : nullptr;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) { return add_leaf(std::move(value), false, nullptr); }
Var Tape::constant(double value) { return constant(Matrix(1, 1, value)); }
Var Tape::leaf(Matrix value) { return add_leaf(std::move(value), true, nullptr); }
Var Tape::leaf(double value) { return leaf(Matrix(1, 1, value)); }
Var Tape::param(Parameter& p) { return add_leaf(p.value, p.trainable, &p); }

Var Tape::push(Matrix value, std::vector<std::size_t> parents, Backprop fn) {
  Node node;
  for (std::size_t id : parents) node.requires_grad = node.requires_grad || nodes_[id].requires_grad;
  if (node.requires_grad) {
    node.grad = Matrix(value.rows(), value.cols());
    node.backprop = std::move(fn);
  }
  node.value = std::move(value);
  node.parents = std::move(parents);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check(Var v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) throw ContractViolation("Var does not belong to this tape");
}

void Tape::backward(Var root) {
  check(root);
  if (nodes_[root.id()].value.size() != 1) {
    throw ContractViolation("backward: root must be a scalar, got " + shape(nodes_[root.id()].value));
  }
  if (!nodes_[root.id()].requires_grad) return;
  nodes_[root.id()].grad(0, 0) += 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backprop) n.backprop(*this, i);
  }
}

void Tape::accumulate_param_grads() {
  for (Node& n : nodes_) {
    if (!n.param) continue;
    if (n.param->grad.rows() != n.value.rows() || n.param->grad.cols() != n.value.cols()) n.param->zero_grad();
    add_into(n.param->grad, n.grad);
  }
}

// ---------------------------------------------------------------- ops

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  Matrix out = matmul(a.value(), b.value());
  return t.push(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) gemm_nt_acc(g, tp.value(ib), tp.mutable_grad(ia));
    if (tp.requires_grad(ib)) gemm_tn_acc(tp.value(ia), g, tp.mutable_grad(ib));
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw ContractViolation("matmul_nt: inner dimensions differ " + shape(av) + " x " + shape(bv) + "^T");
  }
  Matrix out(av.rows(), bv.rows());
  gemm_nt_acc(av, bv, out);
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) gemm_acc(g, tp.value(ib), tp.mutable_grad(ia));
    if (tp.requires_grad(ib)) gemm_tn_acc(g, tp.value(ia), tp.mutable_grad(ib));
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Matrix out = a.value();
  add_into(out, b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    if (tp.requires_grad(ia)) add_into(tp.mutable_grad(ia), tp.grad(self));
    if (tp.requires_grad(ib)) add_into(tp.mutable_grad(ib), tp.grad(self));
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Matrix out = a.value();
  add_into(out, b.value(), -1.0);
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    if (tp.requires_grad(ia)) add_into(tp.mutable_grad(ia), tp.grad(self));
    if (tp.requires_grad(ib)) add_into(tp.mutable_grad(ib), tp.grad(self), -1.0);
  });
}

Var hadamard(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "hadamard");
  Matrix out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    auto g = tp.grad(self).data();
    if (tp.requires_grad(ia)) {
      auto da = tp.mutable_grad(ia).data();
      auto v = tp.value(ib).data();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * v[i];
    }
    if (tp.requires_grad(ib)) {
      auto db = tp.mutable_grad(ib).data();
      auto v = tp.value(ia).data();
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * v[i];
    }
  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  Matrix out = a.value();
  for (double& v : out.data()) v *= s;
  const std::size_t ia = a.id();
  return t.push(std::move(out), {ia}, [ia, s](Tape& tp, std::size_t self) {
    add_into(tp.mutable_grad(ia), tp.grad(self), s);
  });
}

Var add_row(Var a, Var bias) {
  Tape& t = same_tape(a, bias);
  const Matrix& av = a.value();
  const Matrix& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    throw ContractViolation("add_row: bias " + shape(bv) + " does not fit " + shape(av));
  }
  Matrix out = av;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bv(0, j);
  }
  const std::size_t ia = a.id(), ib = bias.id();
  return t.push(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) add_into(tp.mutable_grad(ia), g);
    if (tp.requires_grad(ib)) {
      Matrix& db = tp.mutable_grad(ib);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) db(0, j) += g(i, j);
    }
  });
}

Var exp(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value();
  for (double& v : out.data()) v = std::exp(v);
  const std::size_t ia = a.id();
  return t.push(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    auto g = tp.grad(self).data();
    auto y = tp.value(self).data();
    auto da = tp.mutable_grad(ia).data();
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * y[i];
  });
}

Var log_softmax(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    if (r.empty()) continue;
    const double m = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (double v : r) s += std::exp(v - m);
    const double lse = m + std::log(s);
    for (double& v : r) v -= lse;
  }
  const std::size_t ia = a.id();
  return t.push(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Matrix& y = tp.value(self);
    Matrix& da = tp.mutable_grad(ia);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) gs += g(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j) da(i, j) += g(i, j) - std::exp(y(i, j)) * gs;
    }
  });
}

Var causal_softmax(Var scores) {
  Tape& t = tape_of(scores);
  const Matrix& sv = scores.value();
  if (sv.rows() != sv.cols()) throw ContractViolation("causal_softmax: scores must be square, got " + shape(sv));
  Matrix out(sv.rows(), sv.cols());
  for (std::size_t i = 0; i < sv.rows(); ++i) {
    double m = sv(i, 0);
    for (std::size_t j = 1; j <= i; ++j) m = std::max(m, sv(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j <= i; ++j) {
      out(i, j) = std::exp(sv(i, j) - m);
      s += out(i, j);
    }
    for (std::size_t j = 0; j <= i; ++j) out(i, j) /= s;
  }
  const std::size_t ia = scores.id();
  return t.push(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Matrix& y = tp.value(self);
    Matrix& da = tp.mutable_grad(ia);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j <= i; ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j <= i; ++j) da(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

Var pick(Var a, std::size_t r, std::size_t c) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  if (r >= av.rows() || c >= av.cols()) {
    throw ContractViolation("pick: (" + std::to_string(r) + "," + std::to_string(c) + ") outside " + shape(av));
  }
  const std::size_t ia = a.id();
  return t.push(Matrix(1, 1, av(r, c)), {ia}, [ia, r, c](Tape& tp, std::size_t self) {
    tp.mutable_grad(ia)(r, c) += tp.grad(self)(0, 0);
  });
}

Var select_row(Var a, std::size_t r) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  if (r >= av.rows()) throw ContractViolation("select_row: row " + std::to_string(r) + " outside " + shape(av));
  const auto src = av.row(r);
  const std::size_t ia = a.id();
  return t.push(Matrix::row_vector(src), {ia}, [ia, r](Tape& tp, std::size_t self) {
    auto g = tp.grad(self).row(0);
    auto da = tp.mutable_grad(ia).row(r);
    for (std::size_t j = 0; j < g.size(); ++j) da[j] += g[j];
  });
}

Var mean_rows(Var a) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  if (av.rows() == 0) throw ContractViolation("mean_rows: no rows");
  Matrix out(1, av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(0, j) += av(i, j);
  const double inv = 1.0 / static_cast<double>(av.rows());
  for (double& v : out.data()) v *= inv;
  const std::size_t ia = a.id();
  return t.push(std::move(out), {ia}, [ia, inv](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix& da = tp.mutable_grad(ia);
    for (std::size_t i = 0; i < da.rows(); ++i)
      for (std::size_t j = 0; j < da.cols(); ++j) da(i, j) += g(0, j) * inv;
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return t.push(Matrix(1, 1, s), {ia}, [ia](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)(0, 0);
    for (double& d : tp.mutable_grad(ia).data()) d += g;
  });
}

namespace {

std::vector<std::size_t> scalar_ids(std::span<const Var> scalars, const char* op, Tape*& tape) {
  if (scalars.empty()) throw ContractViolation(std::string(op) + ": empty input");
  tape = scalars.front().tape();
  std::vector<std::size_t> ids;
  ids.reserve(scalars.size());
  for (const Var& v : scalars) {
    if (v.tape() != tape || !tape) throw ContractViolation(std::string(op) + ": operands live on different tapes");
    if (v.value().size() != 1) throw ContractViolation(std::string(op) + ": expects scalar nodes");
    ids.push_back(v.id());
  }
  return ids;
}

Extremum extremum(Var values, bool want_max) {
  Tape& t = tape_of(values);
  const Matrix& vv = values.value();
  if (vv.empty()) throw ContractViolation(want_max ? "max_with_subgradient: empty vector" : "min_with_subgradient: empty vector");
  if (vv.rows() != 1 && vv.cols() != 1) throw ContractViolation("extremum: expects a vector, got " + shape(vv));
  auto d = vv.data();
  std::size_t best = 0;
  for (std::size_t i = 1; i < d.size(); ++i) {
    if (want_max ? d[i] > d[best] : d[i] < d[best]) best = i;
  }
  const std::size_t ia = values.id();
  Var out = t.push(Matrix(1, 1, d[best]), {ia}, [ia, best](Tape& tp, std::size_t self) {
    tp.mutable_grad(ia).data()[best] += tp.grad(self)(0, 0);
  });
  return {out, best};
}

}  // namespace

Var mean(std::span<const Var> scalars) {
  Tape* t = nullptr;
  auto ids = scalar_ids(scalars, "mean", t);
  double s = 0.0;
  for (const Var& v : scalars) s += v.value()(0, 0);
  const double inv = 1.0 / static_cast<double>(ids.size());
  auto parents = ids;
  return t->push(Matrix(1, 1, s * inv), std::move(parents), [ids, inv](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)(0, 0) * inv;
    for (std::size_t id : ids)
      if (tp.requires_grad(id)) tp.mutable_grad(id)(0, 0) += g;
  });
}

Var stack(std::span<const Var> scalars) {
  Tape* t = nullptr;
  auto ids = scalar_ids(scalars, "stack", t);
  Matrix out(1, ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) out(0, i) = scalars[i].value()(0, 0);
  auto parents = ids;
  return t->push(std::move(out), std::move(parents), [ids](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (tp.requires_grad(ids[i])) tp.mutable_grad(ids[i])(0, 0) += g(0, i);
  });
}

Extremum max_with_subgradient(Var values) { return extremum(values, true); }
Extremum min_with_subgradient(Var values) { return extremum(values, false); }

}  // namespace fairlora
