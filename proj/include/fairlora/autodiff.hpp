// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fairlora/errors.hpp"

namespace fairlora {

/// Dense row-major matrix of doubles. Plain value type; no autodiff.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  bool all_finite() const noexcept;
  void fill(double v);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
/// y = M x for a column vector given as a span.
std::vector<double> matvec(const Matrix& m, std::span<const double> x);

/// A named weight. Frozen parameters never receive gradient accumulation.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = false;

  void zero_grad() { grad = Matrix(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  double scalar() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape over dense matrices.
///
/// Nodes are appended in evaluation order, so reverse index order is a valid
/// topological order for backward. Nodes that do not depend on any
/// differentiable leaf carry no adjoint and no backward rule. A tape built
/// with `record = false` never tracks gradients (evaluation mode).
class Tape {
 public:
  using Backprop = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var constant(double value);
  /// Differentiable input owned by the tape.
  Var leaf(Matrix value);
  Var leaf(double value);
  /// Binds a model parameter. Trainable parameters become differentiable
  /// leaves; frozen ones are constants.
  Var param(Parameter& p);

  /// Seeds d(root)/d(root) = 1 and propagates adjoints to every node.
  void backward(Var root);
  /// Adds leaf adjoints into the bound parameters' `grad` buffers.
  void accumulate_param_grads();

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  Matrix& mutable_grad(std::size_t id) { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool recording() const noexcept { return record_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Appends an operation node. `fn` is dropped when no parent needs a gradient.
  Var push(Matrix value, std::vector<std::size_t> parents, Backprop fn);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> parents;
    Backprop backprop;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  Var add_leaf(Matrix value, bool differentiable, Parameter* p);
  void check(Var v) const;

  std::vector<Node> nodes_;
  bool record_;
};

// Differentiable operations. All operands must live on the same tape.

Var matmul(Var a, Var b);
/// a · bᵀ
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Element-wise product.
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
/// Adds a 1×n bias row to every row of an m×n matrix.
Var add_row(Var a, Var bias);
Var exp(Var a);
/// Row-wise log-softmax, shifted by the row max.
Var log_softmax(Var a);
/// Row-wise softmax on a square score matrix where row i only sees columns
/// 0..i; masked entries are exactly zero.
Var causal_softmax(Var scores);
/// 1×1 view of a single entry.
Var pick(Var a, std::size_t r, std::size_t c);
/// 1×cols view of row r.
Var select_row(Var a, std::size_t r);
/// 1×cols mean over rows.
Var mean_rows(Var a);
/// 1×1 sum of all entries.
Var sum(Var a);
/// 1×1 mean of scalar nodes.
Var mean(std::span<const Var> scalars);
/// 1×n row built from scalar nodes.
Var stack(std::span<const Var> scalars);

struct Extremum {
  Var value;
  std::size_t index = 0;
};

/// Maximum over a row or column vector. The whole adjoint flows to one element;
/// ties resolve to the lowest index.
Extremum max_with_subgradient(Var values);
Extremum min_with_subgradient(Var values);

}  // namespace fairlora
