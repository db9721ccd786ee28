#include <doctest.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "neurozip/autodiff.hpp"
#include "neurozip/error.hpp"
#include "support.hpp"

using namespace neurozip::autodiff;
using neurozip::ContractError;
using neurozip::DimensionError;

TEST_CASE("add is componentwise") {
  Tape tape;
  const Var a = tape.constant(Matrix::row({1, 2}));
  const Var b = tape.constant(Matrix::row({3, 4}));
  CHECK((a + b).value() == Matrix::row({4, 6}));
}

TEST_CASE("rectifier clamps negatives to zero") {
  Tape tape;
  CHECK(relu(tape.constant(Matrix::row({-1, 0, 2}))).value() == Matrix::row({0, 0, 2}));
}

TEST_CASE("square of 3 is 9 with gradient 6") {
  Tape tape;
  const Var x = tape.parameter(Matrix::scalar(3.0));
  const Var y = square(x);
  CHECK(y.value().item() == 9.0);
  const GradientTable g = tape.backward(y);
  CHECK(g[x].item() == 6.0);
}

TEST_CASE("gradient of sum((w x - y)^2) at w=1, x=2, y=0 is 8") {
  Tape tape;
  const Var w = tape.parameter(Matrix::scalar(1.0));
  const Var x = tape.constant(2.0);
  const Var y = tape.constant(0.0);
  const Var loss = sum(square(w * x - y));
  CHECK(tape.backward(loss)[w].item() == 8.0);
}

TEST_CASE("an unreachable parameter has zero gradient") {
  Tape tape;
  const Var w = tape.parameter(Matrix(2, 3, 1.5));
  const Var u = tape.parameter(Matrix::scalar(2.0));
  const GradientTable g = tape.backward(square(u));
  CHECK(g[w] == Matrix(2, 3, 0.0));
  CHECK(g[u].item() == 4.0);
}

TEST_CASE("kinks use derivative 0 at exactly 0") {
  SUBCASE("abs at -3 has gradient -1") {
    Tape tape;
    const Var x = tape.parameter(Matrix::scalar(-3.0));
    CHECK(tape.backward(abs(x))[x].item() == -1.0);
  }
  SUBCASE("abs at 0") {
    Tape tape;
    const Var x = tape.parameter(Matrix::scalar(0.0));
    CHECK(tape.backward(abs(x))[x].item() == 0.0);
  }
  SUBCASE("rectifier at 0") {
    Tape tape;
    const Var x = tape.parameter(Matrix::scalar(0.0));
    CHECK(tape.backward(relu(x))[x].item() == 0.0);
  }
}

TEST_CASE("primitive values") {
  Tape tape;
  const Var x = tape.constant(Matrix::row({-1.0, 0.5}));
  CHECK((x - x).value() == Matrix::row({0, 0}));
  CHECK((x * x).value() == Matrix::row({1.0, 0.25}));
  CHECK((x / 2.0).value() == Matrix::row({-0.5, 0.25}));
  CHECK((-x).value() == Matrix::row({1.0, -0.5}));
  CHECK((3.0 * x).value() == Matrix::row({-3.0, 1.5}));
  CHECK((1.0 - x).value() == Matrix::row({2.0, 0.5}));
  CHECK((x + 1.0).value() == Matrix::row({0.0, 1.5}));
  CHECK(tanh(x).value() == Matrix::row({std::tanh(-1.0), std::tanh(0.5)}));
  CHECK(sin(x).value() == Matrix::row({std::sin(-1.0), std::sin(0.5)}));
  CHECK(cos(x).value() == Matrix::row({std::cos(-1.0), std::cos(0.5)}));
  CHECK(abs(x).value() == Matrix::row({1.0, 0.5}));
  CHECK(sum(x).value().item() == -0.5);
  CHECK(mean(x).value().item() == -0.25);
  const Var m = tape.constant(Matrix(2, 1, {2.0, 3.0}));
  CHECK(matmul(x, m).value().item() == -0.5);
  CHECK(matmul(m, x).value() == Matrix(2, 2, {-2.0, 1.0, -3.0, 1.5}));
}

TEST_CASE("a 1x1 operand broadcasts against a matrix") {
  Tape tape;
  const Var s = tape.parameter(Matrix::scalar(2.0));
  const Var x = tape.parameter(Matrix::row({1.0, 2.0, 3.0}));
  const Var y = s * x;
  CHECK(y.value() == Matrix::row({2.0, 4.0, 6.0}));
  const GradientTable g = tape.backward(sum(y));
  CHECK(g[s].item() == 6.0);
  CHECK(g[x] == Matrix::row({2.0, 2.0, 2.0}));
}

TEST_CASE("shape mismatches raise a dimension error naming both shapes") {
  Tape tape;
  const Var a = tape.constant(Matrix(2, 3));
  const Var b = tape.constant(Matrix(3, 2));
  CHECK_THROWS_AS(a + b, DimensionError);
  CHECK_THROWS_AS(a * b, DimensionError);
  CHECK_THROWS_AS(matmul(a, a), DimensionError);
  try {
    (void)(a - b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("3x2") != std::string::npos);
  }
}

TEST_CASE("contract errors") {
  Tape tape;
  const Var x = tape.parameter(Matrix::row({1.0, 2.0}));
  SUBCASE("non-scalar loss") { CHECK_THROWS_AS(tape.backward(x), ContractError); }
  SUBCASE("division by zero") { CHECK_THROWS_AS(x / 0.0, ContractError); }
  SUBCASE("gradient before backward") { CHECK_THROWS_AS(tape.grad(x), ContractError); }
  SUBCASE("operands from different tapes") {
    Tape other;
    const Var y = other.parameter(Matrix::row({1.0, 2.0}));
    CHECK_THROWS_AS(x + y, ContractError);
  }
  SUBCASE("mean of nothing") { CHECK_THROWS_AS(mean(tape.constant(Matrix(0, 0))), ContractError); }
}

TEST_CASE("second backward without reset is rejected; zero_grad allows a replay") {
  Tape tape;
  const Var x = tape.parameter(Matrix::row({1.0, -2.0}));
  const Var loss = sum(square(x));
  const Matrix first = tape.backward(loss)[x];
  CHECK_THROWS_AS(tape.backward(loss), ContractError);
  tape.zero_grad();
  CHECK(tape.backward(loss)[x] == first);
  CHECK(first == Matrix::row({2.0, -4.0}));
}

TEST_CASE("every node gradient has the shape of its value") {
  Tape tape;
  auto rng = neurozip::make_engine({3});
  const Var w = tape.parameter(nzt::random_matrix(rng, 3, 4));
  const Var x = tape.constant(nzt::random_matrix(rng, 5, 3));
  const Var h = tanh(matmul(x, w));
  const Var loss = mean(square(h));
  tape.backward(loss);
  for (Var v : {w, x, h, loss}) CHECK(tape.grad(v).same_shape(v.value()));
}

namespace {

struct Primitive {
  const char* name;
  int arity;
  std::function<Var(Var, Var)> apply;
};

// Weights the output by a fixed random matrix so the upstream gradient is not
// uniform, then reduces to a scalar.
Var weighted_sum(Tape& tape, Var y, std::uint64_t seed) {
  auto rng = neurozip::make_engine({seed, 0x77});
  const Matrix c = nzt::random_matrix(rng, y.value().rows(), y.value().cols());
  return sum(y * tape.constant(c));
}

}  // namespace

TEST_CASE("every primitive passes the finite-difference check on random inputs") {
  const std::vector<Primitive> prims = {
      {"add", 2, [](Var a, Var b) { return a + b; }},
      {"sub", 2, [](Var a, Var b) { return a - b; }},
      {"mul", 2, [](Var a, Var b) { return a * b; }},
      {"scalar_mul", 2, [](Var a, Var b) { return sum(a) * b; }},
      {"neg", 1, [](Var a, Var) { return -a; }},
      {"scale", 1, [](Var a, Var) { return 1.7 * a; }},
      {"div_const", 1, [](Var a, Var) { return a / 3.0; }},
      {"square", 1, [](Var a, Var) { return square(a); }},
      {"tanh", 1, [](Var a, Var) { return tanh(a); }},
      {"relu", 1, [](Var a, Var) { return relu(a); }},
      {"sin", 1, [](Var a, Var) { return sin(a); }},
      {"cos", 1, [](Var a, Var) { return cos(a); }},
      {"abs", 1, [](Var a, Var) { return abs(a); }},
      {"sum", 1, [](Var a, Var) { return square(sum(a)); }},
      {"mean", 1, [](Var a, Var) { return square(mean(a)); }},
  };
  for (const Primitive& prim : prims) {
    INFO("primitive " << prim.name);
    nzt::property(23, 10, [&](std::mt19937_64& rng) {
      const std::size_t rows = 1 + neurozip::uniform_index(rng, 4);
      const std::size_t cols = 1 + neurozip::uniform_index(rng, 4);
      std::vector<Matrix> params = {nzt::random_matrix(rng, rows, cols)};
      if (prim.arity == 2) params.push_back(nzt::random_matrix(rng, rows, cols));
      const LossBuilder fn = [&](Tape& tape, std::span<const Var> v) {
        return weighted_sum(tape, prim.apply(v[0], v.size() > 1 ? v[1] : v[0]), rows * 10 + cols);
      };
      CHECK(finite_difference_check(fn, params, 1e-5) < 1e-4);
    });
  }
}

TEST_CASE("matmul passes the finite-difference check on random shapes") {
  nzt::property(29, 10, [](std::mt19937_64& rng) {
    const std::size_t n = 1 + neurozip::uniform_index(rng, 5);
    const std::size_t kk = 1 + neurozip::uniform_index(rng, 5);
    const std::size_t m = 1 + neurozip::uniform_index(rng, 5);
    const std::vector<Matrix> params = {nzt::random_matrix(rng, n, kk), nzt::random_matrix(rng, kk, m)};
    const LossBuilder fn = [&](Tape& tape, std::span<const Var> v) {
      return weighted_sum(tape, matmul(v[0], v[1]), n * 100 + kk * 10 + m);
    };
    CHECK(finite_difference_check(fn, params, 1e-5) < 1e-4);
  });
}

TEST_CASE("finite-difference check on a quadratic in three variables is near exact") {
  const LossBuilder fn = [](Tape&, std::span<const Var> v) {
    // 3x^2 + xy - 2yz + z^2 + 4x
    return 3.0 * square(v[0]) + v[0] * v[1] - 2.0 * (v[1] * v[2]) + square(v[2]) + 4.0 * v[0];
  };
  const std::vector<Matrix> params = {Matrix::scalar(0.7), Matrix::scalar(-1.3), Matrix::scalar(2.1)};
  CHECK(finite_difference_check(fn, params, 1e-5) < 1e-6);
}

TEST_CASE("finite-difference check of a constant function reports 0") {
  const LossBuilder fn = [](Tape& tape, std::span<const Var>) { return tape.constant(4.0); };
  const std::vector<Matrix> params = {Matrix::row({1.0, 2.0})};
  CHECK(finite_difference_check(fn, params, 1e-5) == 0.0);
  CHECK_THROWS_AS(finite_difference_check(fn, params, 0.0), ContractError);
}

TEST_CASE("a corrupted backward rule is caught by the finite-difference check") {
  const LossBuilder fn = [](Tape&, std::span<const Var> v) { return sum(tanh(v[0])); };
  const std::vector<Matrix> params = {Matrix::row({0.3, -0.8, 1.1})};
  testing::set_gradient_fault(Op::tanh, 1.5);
  const double corrupted = finite_difference_check(fn, params, 1e-5);
  testing::clear_gradient_faults();
  CHECK(corrupted > 0.4);
  CHECK(finite_difference_check(fn, params, 1e-5) < 1e-6);
}

TEST_CASE("replaying a tape gives bit-identical values and gradients") {
  auto build = [](Tape& tape, std::vector<Var>& params) {
    auto rng = neurozip::make_engine({41});
    params = {tape.parameter(nzt::random_matrix(rng, 6, 4)), tape.parameter(nzt::random_matrix(rng, 4, 2))};
    const Var x = tape.constant(nzt::random_matrix(rng, 9, 6));
    return mean(square(matmul(tanh(matmul(x, params[0])), params[1]))) + sum(abs(params[1]));
  };
  Tape t1, t2;
  std::vector<Var> p1, p2;
  const Var l1 = build(t1, p1);
  const Var l2 = build(t2, p2);
  CHECK(l1.value() == l2.value());
  const GradientTable g1 = t1.backward(l1);
  const GradientTable g2 = t2.backward(l2);
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(g1[p1[i]] == g2[p2[i]]);
}

TEST_CASE("evaluate_loss binds parameters and returns the value") {
  const LossBuilder fn = [](Tape&, std::span<const Var> v) { return sum(square(v[0])); };
  const std::vector<Matrix> params = {Matrix::row({1.0, 2.0, 2.0})};
  CHECK(evaluate_loss(fn, params) == 9.0);
}
