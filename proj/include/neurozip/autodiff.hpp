#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace neurozip::autodiff {

/// Dense row-major matrix of doubles. Scalars are 1x1.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix scalar(double value) { return Matrix(1, 1, value); }
  static Matrix column(std::vector<double> values);
  static Matrix row(std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool is_scalar() const { return rows_ == 1 && cols_ == 1; }
  bool same_shape(const Matrix& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Value of a 1x1 matrix.
  double item() const;

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  void fill(double value);

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

std::string shape_string(const Matrix& m);

enum class Op : std::uint8_t {
  parameter,
  constant,
  add,
  sub,
  mul,
  matmul,
  square,
  div_const,
  scale,
  neg,
  tanh,
  relu,
  sin,
  cos,
  sum,
  mean,
  abs,
};

std::string_view op_name(Op op);

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Tape& tape() const;
  std::size_t index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

/// Gradients produced by Tape::backward, keyed by node. A view into the tape.
class GradientTable {
 public:
  const Matrix& operator[](Var v) const;

 private:
  friend class Tape;
  explicit GradientTable(const Tape* tape) : tape_(tape) {}
  const Tape* tape_;
};

/// Append-only record of eagerly evaluated operations. Creation order is a
/// topological order, so backward is a single reverse sweep.
///
/// A tape is single-threaded. Independent tapes may be used concurrently.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var parameter(Matrix value);
  Var constant(Matrix value);
  Var constant(double value) { return constant(Matrix::scalar(value)); }

  /// Reverse sweep from a 1x1 node. A second call without zero_grad() in
  /// between throws ContractError rather than silently accumulating.
  GradientTable backward(Var loss);

  void zero_grad();

  std::size_t size() const { return nodes_.size(); }
  const Matrix& value(Var v) const { return nodes_[v.index_].value; }
  const Matrix& grad(Var v) const;
  Op op(Var v) const { return nodes_[v.index_].op; }

  // Node construction used by the free-function operations below.
  Var record(Op op, Matrix value, Var lhs, Var rhs = {}, double constant = 0.0);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Op op = Op::constant;
    std::uint8_t arity = 0;
    bool needs_grad = false;  // depends on at least one parameter
    std::size_t parents[2] = {0, 0};
    double constant = 0.0;
  };

  void check_owned(Var v) const;
  void propagate(std::size_t index);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Elementwise operations accept equal shapes, or a 1x1 operand that is
// broadcast against the other. Anything else raises DimensionError.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator-(Var a);
Var operator*(double c, Var a);
Var operator/(Var a, double c);
Var operator-(double c, Var a);
Var operator+(Var a, double c);

Var matmul(Var a, Var b);
Var square(Var a);
Var tanh(Var a);
Var relu(Var a);
Var sin(Var a);
Var cos(Var a);
Var sum(Var a);
Var mean(Var a);
Var abs(Var a);

/// Builds a scalar loss on the given tape from parameter nodes. Must be a pure
/// function of the parameter values; it may be called concurrently on
/// different tapes.
using LossBuilder = std::function<Var(Tape&, std::span<const Var>)>;

/// Max over all parameter entries of |analytic - central| / (|central| + 1e-12),
/// where central is the symmetric difference quotient with step epsilon.
/// Probes run in parallel, one tape per probe.
double finite_difference_check(const LossBuilder& fn, std::span<const Matrix> params,
                               double epsilon, int threads = 0);

/// Loss value only, with `params` bound as parameter nodes.
double evaluate_loss(const LossBuilder& fn, std::span<const Matrix> params);

namespace testing {

/// Scales the local derivative of `op` during backward. Negative control for
/// gradient checks; factor 1 restores the correct rule.
void set_gradient_fault(Op op, double factor);
void clear_gradient_faults();

}  // namespace testing

}  // namespace neurozip::autodiff
