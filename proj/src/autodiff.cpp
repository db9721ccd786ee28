#include "neurozip/autodiff.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <sstream>

#include "neurozip/error.hpp"
#include "neurozip/kernels.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace neurozip::autodiff {

namespace {

constexpr std::size_t kOpCount = static_cast<std::size_t>(Op::abs) + 1;

std::array<std::atomic<double>, kOpCount>& fault_factors() {
  static std::array<std::atomic<double>, kOpCount> factors;
  static const bool initialised = [] {
    for (auto& x : factors) x.store(1.0);
    return true;
  }();
  (void)initialised;
  return factors;
}

double fault(Op op) { return fault_factors()[static_cast<std::size_t>(op)].load(std::memory_order_relaxed); }

double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

double tanh_fn(double x) { return std::tanh(x); }

enum class Broadcast { none, lhs_scalar, rhs_scalar };

Broadcast broadcast_kind(const Matrix& a, const Matrix& b, std::string_view what) {
  if (a.same_shape(b)) return Broadcast::none;
  if (a.is_scalar()) return Broadcast::lhs_scalar;
  if (b.is_scalar()) return Broadcast::rhs_scalar;
  throw DimensionError(std::string(what) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

template <typename F>
Matrix elementwise(const Matrix& a, const Matrix& b, Broadcast kind, F f) {
  switch (kind) {
    case Broadcast::none: {
      Matrix out(a.rows(), a.cols());
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
      return out;
    }
    case Broadcast::lhs_scalar: {
      Matrix out(b.rows(), b.cols());
      const double s = a[0];
      for (std::size_t i = 0; i < b.size(); ++i) out[i] = f(s, b[i]);
      return out;
    }
    case Broadcast::rhs_scalar: {
      Matrix out(a.rows(), a.cols());
      const double s = b[0];
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], s);
      return out;
    }
  }
  return {};
}

template <typename F>
Matrix unary(const Matrix& a, F f) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

// Adds scale * contribution (shaped like the upstream gradient) into `target`,
// summing over broadcast entries when target is the 1x1 operand.
void accumulate(Matrix& target, const Matrix& contribution, double scale) {
  if (target.same_shape(contribution)) {
    for (std::size_t i = 0; i < target.size(); ++i) target[i] += scale * contribution[i];
  } else {
    double s = 0.0;
    for (std::size_t i = 0; i < contribution.size(); ++i) s += scale * contribution[i];
    target[0] += s;
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("matrix " + std::to_string(rows) + "x" + std::to_string(cols) + " given " +
                         std::to_string(data_.size()) + " values");
  }
}

Matrix Matrix::column(std::vector<double> values) {
  const std::size_t n = values.size();
  return Matrix(n, 1, std::move(values));
}

Matrix Matrix::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Matrix(1, n, std::move(values));
}

double Matrix::item() const {
  if (!is_scalar()) throw DimensionError("item() on non-scalar " + shape_string(*this));
  return data_[0];
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::string shape_string(const Matrix& m) {
  std::ostringstream os;
  os << '(' << m.rows() << 'x' << m.cols() << ')';
  return os.str();
}

std::string_view op_name(Op op) {
  switch (op) {
    case Op::parameter: return "parameter";
    case Op::constant: return "constant";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::matmul: return "matmul";
    case Op::square: return "square";
    case Op::div_const: return "div_const";
    case Op::scale: return "scale";
    case Op::neg: return "neg";
    case Op::tanh: return "tanh";
    case Op::relu: return "relu";
    case Op::sin: return "sin";
    case Op::cos: return "cos";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::abs: return "abs";
  }
  return "unknown";
}

const Matrix& Var::value() const {
  if (!tape_) throw ContractError("value() on an unbound Var");
  return tape_->value(*this);
}

Tape& Var::tape() const {
  if (!tape_) throw ContractError("tape() on an unbound Var");
  return *tape_;
}

const Matrix& GradientTable::operator[](Var v) const { return tape_->grad(v); }

Tape::Tape() {
#if defined(__GLIBC__)
  // Every training step builds and frees a full tape. With glibc's default
  // thresholds the freed memory goes back to the OS each time and is
  // page-faulted in again on the next step, which costs more than the math.
  static const bool tuned = [] {
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_MMAP_THRESHOLD, 1 << 28);
    return true;
  }();
  (void)tuned;
#endif
}

Var Tape::parameter(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, Op::parameter, 0, true, {0, 0}, 0.0});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, Op::constant, 0, false, {0, 0}, 0.0});
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(Var v) const {
  if (v.tape_ != this || v.index_ >= nodes_.size()) throw ContractError("operand belongs to a different tape");
}

Var Tape::record(Op op, Matrix value, Var lhs, Var rhs, double constant) {
  check_owned(lhs);
  Node node{std::move(value), {}, op, 1, nodes_[lhs.index_].needs_grad, {lhs.index_, 0}, constant};
  if (rhs.valid()) {
    check_owned(rhs);
    node.arity = 2;
    node.parents[1] = rhs.index_;
    node.needs_grad = node.needs_grad || nodes_[rhs.index_].needs_grad;
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Matrix& Tape::grad(Var v) const {
  check_owned(v);
  const Node& node = nodes_[v.index_];
  if (node.grad.size() != node.value.size()) {
    throw ContractError("gradient requested before backward()");
  }
  return node.grad;
}

void Tape::zero_grad() {
  for (Node& node : nodes_) node.grad = Matrix();
  backward_done_ = false;
}

GradientTable Tape::backward(Var loss) {
  check_owned(loss);
  if (!nodes_[loss.index_].value.is_scalar()) {
    throw ContractError("backward() needs a 1x1 loss, got " + shape_string(nodes_[loss.index_].value));
  }
  if (backward_done_) throw ContractError("backward() called twice without zero_grad()");
  backward_done_ = true;

  for (Node& node : nodes_) node.grad = Matrix(node.value.rows(), node.value.cols(), 0.0);
  nodes_[loss.index_].grad[0] = 1.0;
  for (std::size_t i = loss.index_ + 1; i-- > 0;) propagate(i);
  return GradientTable(this);
}

void Tape::propagate(std::size_t index) {
  Node& node = nodes_[index];
  if (node.arity == 0 || !node.needs_grad) return;
  const Matrix& g = node.grad;
  const Matrix& y = node.value;
  const double f = fault(node.op);
  Node& a = nodes_[node.parents[0]];

  switch (node.op) {
    case Op::parameter:
    case Op::constant:
      return;
    case Op::add:
    case Op::sub: {
      Node& b = nodes_[node.parents[1]];
      const double sb = node.op == Op::add ? 1.0 : -1.0;
      if (a.needs_grad) accumulate(a.grad, g, f);
      if (b.needs_grad) accumulate(b.grad, g, f * sb);
      return;
    }
    case Op::mul: {
      Node& b = nodes_[node.parents[1]];
      const Broadcast kind = broadcast_kind(a.value, b.value, "mul");
      if (a.needs_grad) {
        Matrix ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] = f * g[i] * (kind == Broadcast::rhs_scalar ? b.value[0] : b.value[i]);
        }
        accumulate(a.grad, ga, 1.0);
      }
      if (b.needs_grad) {
        Matrix gb(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) {
          gb[i] = f * g[i] * (kind == Broadcast::lhs_scalar ? a.value[0] : a.value[i]);
        }
        accumulate(b.grad, gb, 1.0);
      }
      return;
    }
    case Op::matmul: {
      Node& b = nodes_[node.parents[1]];
      const std::size_t n = a.value.rows();
      const std::size_t k = a.value.cols();
      const std::size_t m = b.value.cols();
      Matrix scaled;
      if (f != 1.0) {
        scaled = g;
        for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= f;
      }
      const Matrix& up = f != 1.0 ? scaled : g;
      if (a.needs_grad) kernels::matmul_nt_add(up.values(), b.value.values(), a.grad.values(), n, m, k);
      if (b.needs_grad) kernels::matmul_tn_add(a.value.values(), up.values(), b.grad.values(), n, k, m);
      return;
    }
    case Op::square:
      for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] += f * 2.0 * a.value[i] * g[i];
      return;
    case Op::div_const:
      for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] += f * g[i] / node.constant;
      return;
    case Op::scale:
      for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] += f * node.constant * g[i];
      return;
    case Op::neg:
      for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] -= f * g[i];
      return;
    case Op::tanh:
      for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] += f * g[i] * (1.0 - y[i] * y[i]);
      return;
    case Op::relu:
      for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] += a.value[i] > 0.0 ? f * g[i] : 0.0;
      return;
    case Op::sin:
      for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] += f * g[i] * std::cos(a.value[i]);
      return;
    case Op::cos:
      for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] -= f * g[i] * std::sin(a.value[i]);
      return;
    case Op::sum:
      for (std::size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += f * g[0];
      return;
    case Op::mean: {
      const double share = f * g[0] / static_cast<double>(a.value.size());
      for (std::size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += share;
      return;
    }
    case Op::abs:
      for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] += f * g[i] * sign0(a.value[i]);
      return;
  }
}

namespace {

Tape& shared_tape(Var a, Var b) {
  Tape& t = a.tape();
  if (&t != &b.tape()) throw ContractError("operands belong to different tapes");
  return t;
}

}  // namespace

Var operator+(Var a, Var b) {
  Tape& t = shared_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix out = elementwise(av, bv, broadcast_kind(av, bv, "add"), [](double x, double y) { return x + y; });
  return t.record(Op::add, std::move(out), a, b);
}

Var operator-(Var a, Var b) {
  Tape& t = shared_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix out = elementwise(av, bv, broadcast_kind(av, bv, "sub"), [](double x, double y) { return x - y; });
  return t.record(Op::sub, std::move(out), a, b);
}

Var operator*(Var a, Var b) {
  Tape& t = shared_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix out = elementwise(av, bv, broadcast_kind(av, bv, "mul"), [](double x, double y) { return x * y; });
  return t.record(Op::mul, std::move(out), a, b);
}

Var operator-(Var a) {
  Matrix out = unary(a.value(), [](double x) { return -x; });
  return a.tape().record(Op::neg, std::move(out), a);
}

Var operator*(double c, Var a) {
  Matrix out = unary(a.value(), [c](double x) { return c * x; });
  return a.tape().record(Op::scale, std::move(out), a, {}, c);
}

Var operator/(Var a, double c) {
  if (c == 0.0) throw ContractError("division by zero constant");
  Matrix out = unary(a.value(), [c](double x) { return x / c; });
  return a.tape().record(Op::div_const, std::move(out), a, {}, c);
}

Var operator-(double c, Var a) { return a.tape().constant(c) - a; }

Var operator+(Var a, double c) { return a + a.tape().constant(c); }

Var matmul(Var a, Var b) {
  Tape& t = shared_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: shape mismatch " + shape_string(av) + " * " + shape_string(bv));
  }
  Matrix out(av.rows(), bv.cols());
  kernels::matmul(av.values(), bv.values(), out.values(), av.rows(), av.cols(), bv.cols());
  return t.record(Op::matmul, std::move(out), a, b);
}

Var square(Var a) {
  Matrix out = unary(a.value(), [](double x) { return x * x; });
  return a.tape().record(Op::square, std::move(out), a);
}

Var tanh(Var a) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  kernels::map(av.values(), out.values(), tanh_fn);
  return a.tape().record(Op::tanh, std::move(out), a);
}

Var relu(Var a) {
  Matrix out = unary(a.value(), [](double x) { return x > 0.0 ? x : 0.0; });
  return a.tape().record(Op::relu, std::move(out), a);
}

Var sin(Var a) {
  Matrix out = unary(a.value(), [](double x) { return std::sin(x); });
  return a.tape().record(Op::sin, std::move(out), a);
}

Var cos(Var a) {
  Matrix out = unary(a.value(), [](double x) { return std::cos(x); });
  return a.tape().record(Op::cos, std::move(out), a);
}

Var sum(Var a) {
  double s = 0.0;
  for (double x : a.value().values()) s += x;
  return a.tape().record(Op::sum, Matrix::scalar(s), a);
}

Var mean(Var a) {
  const Matrix& av = a.value();
  if (av.size() == 0) throw ContractError("mean of an empty matrix");
  double s = 0.0;
  for (double x : av.values()) s += x;
  return a.tape().record(Op::mean, Matrix::scalar(s / static_cast<double>(av.size())), a);
}

Var abs(Var a) {
  Matrix out = unary(a.value(), [](double x) { return std::fabs(x); });
  return a.tape().record(Op::abs, std::move(out), a);
}

double evaluate_loss(const LossBuilder& fn, std::span<const Matrix> params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Matrix& p : params) vars.push_back(tape.parameter(p));
  const Var loss = fn(tape, vars);
  return loss.value().item();
}

double finite_difference_check(const LossBuilder& fn, std::span<const Matrix> params, double epsilon,
                               int threads) {
  if (!(epsilon > 0.0)) throw ContractError("finite_difference_check: epsilon must be positive");

  std::vector<Matrix> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const Matrix& p : params) vars.push_back(tape.parameter(p));
    const Var loss = fn(tape, vars);
    const GradientTable grads = tape.backward(loss);
    for (const Var& v : vars) analytic.push_back(grads[v]);
  }

  struct Probe {
    std::size_t param;
    std::size_t entry;
  };
  std::vector<Probe> probes;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t e = 0; e < params[p].size(); ++e) probes.push_back({p, e});

  std::vector<double> errors(probes.size(), 0.0);
  kernels::parallel_for(probes.size(), threads, [&](std::size_t i) {
    const Probe probe = probes[i];
    std::vector<Matrix> shifted(params.begin(), params.end());
    const double base = params[probe.param][probe.entry];
    shifted[probe.param][probe.entry] = base + epsilon;
    const double plus = evaluate_loss(fn, shifted);
    shifted[probe.param][probe.entry] = base - epsilon;
    const double minus = evaluate_loss(fn, shifted);
    const double central = (plus - minus) / (2.0 * epsilon);
    const double exact = analytic[probe.param][probe.entry];
    errors[i] = std::fabs(exact - central) / (std::fabs(central) + 1e-12);
  });

  double worst = 0.0;
  for (double e : errors) worst = std::max(worst, e);
  return worst;
}

namespace testing {

void set_gradient_fault(Op op, double factor) {
  fault_factors()[static_cast<std::size_t>(op)].store(factor);
}

void clear_gradient_faults() {
  for (auto& f : fault_factors()) f.store(1.0);
}

}  // namespace testing

}  // namespace neurozip::autodiff
