#include <doctest.h>

#include <cmath>
#include <random>
#include <string>

#include "couple/errors.hpp"
#include "couple/numerics/adam.hpp"
#include "couple/numerics/gradcheck.hpp"
#include "couple/numerics/spectral.hpp"
#include "couple/numerics/tape.hpp"
#include "support/gradient_suite.hpp"
#include "support/oracles.hpp"

using namespace couple::numerics;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& gen, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(gen);
  return t;
}

}  // namespace

TEST_CASE("matmul by identity returns the operand") {
  std::mt19937_64 gen(1);
  const Tensor a = random_tensor({3, 5}, gen);
  const Tensor eye = Tensor::identity(3);
  const Tensor* in[] = {&eye, &a};
  CHECK(apply_primitive(OpKind::kMatmul, in) == a);
}

TEST_CASE("softmax worked values") {
  const Tensor zeros = Tensor::vector({0, 0, 0, 0});
  const Tensor* in0[] = {&zeros};
  const Tensor s0 = apply_primitive(OpKind::kSoftmaxLastdim, in0);
  for (double v : s0.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  const Tensor two = Tensor::vector({1, 0});
  const Tensor* in1[] = {&two};
  const Tensor s1 = apply_primitive(OpKind::kSoftmaxLastdim, in1);
  const auto expect = couple::oracle::softmax({1.0, 0.0});
  CHECK(std::abs(s1[0] - expect[0]) < 1e-15);
  CHECK(std::abs(s1[1] - expect[1]) < 1e-15);
  CHECK(std::abs(s1[0] - 0.731059) < 1e-6);
  CHECK(std::abs(s1[1] - 0.268941) < 1e-6);
}

TEST_CASE("softmax rows sum to one and are shift invariant") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> shift(-50.0, 50.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor x = random_tensor({4, 9}, gen, -10.0, 10.0);
    Tensor shifted = x;
    for (std::size_t r = 0; r < 4; ++r) {
      const double c = shift(gen);
      for (double& v : shifted.row(r)) v += c;
    }
    const Tensor* a[] = {&x};
    const Tensor* b[] = {&shifted};
    const Tensor sx = apply_primitive(OpKind::kSoftmaxLastdim, a);
    const Tensor sy = apply_primitive(OpKind::kSoftmaxLastdim, b);
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0.0;
      for (double v : sx.row(r)) total += v;
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
    for (std::size_t i = 0; i < sx.size(); ++i) CHECK(std::abs(sx[i] - sy[i]) <= 1e-12);
  }
}

TEST_CASE("segmented softmax normalizes each group independently") {
  const Tensor x = Tensor::vector({1, 2, 3, 4, 0, 0});
  OpAttrs at;
  at.segment = 2;
  const Tensor* in[] = {&x};
  const Tensor s = apply_primitive(OpKind::kSoftmaxLastdim, in, at);
  CHECK(std::abs(s[0] + s[1] - 1.0) < 1e-15);
  CHECK(std::abs(s[2] + s[3] - 1.0) < 1e-15);
  CHECK(s[4] == 0.5);
  at.segment = 4;
  CHECK_THROWS_AS(apply_primitive(OpKind::kSoftmaxLastdim, in, at), couple::ShapeError);
}

TEST_CASE("shape errors name the op and extents") {
  Tape tape;
  const Var a = tape.leaf(Tensor({2, 3}));
  const Var b = tape.leaf(Tensor({4, 5}));
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const couple::ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,5]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, b), couple::ShapeError);
  CHECK_THROWS_AS(log(tape.leaf(Tensor::vector({1.0, 0.0}))), couple::DomainError);
  CHECK_THROWS_AS(log(tape.leaf(Tensor::vector({-2.0}))), couple::DomainError);
}

TEST_CASE("backward of bilinear and tanh") {
  Tape tape;
  const Var x = tape.leaf(Tensor::vector({1, 2, 3}));
  const Var y = tape.leaf(Tensor::vector({-4, 5, 0.5}));
  const Var unused = tape.leaf(Tensor({2, 2}, 3.0));
  const auto g = backward(tape, dot(x, y));
  CHECK(g.of(x) == y.value());
  CHECK(g.of(y) == x.value());
  CHECK(g.of(unused) == Tensor({2, 2}, 0.0));

  Tape t2;
  const Var z = t2.leaf(Tensor::scalar(0.0));
  const auto g2 = backward(t2, tanh(z));
  CHECK(g2.of(z).item() == 1.0);

  Tape t3;
  const Var v = t3.leaf(Tensor::vector({1, 2}));
  CHECK_THROWS_AS(backward(t3, scale(v, 2.0)), couple::ShapeError);
}

TEST_CASE("constants receive no gradient") {
  Tape tape;
  const Var w = tape.leaf(Tensor::vector({1, 2}));
  const Var c = tape.constant(Tensor::vector({3, 4}));
  const auto g = backward(tape, dot(w, c));
  CHECK_FALSE(g.contains(c.id()));
  CHECK(g.of(w) == c.value());
}

TEST_CASE("finite_diff_check on an exact quadratic") {
  const Tensor x = Tensor::scalar(3.0);
  const double err = finite_diff_check(
      [](Tape&, std::span<const Var> p) { return mul(p[0], p[0]); }, std::span(&x, 1), 1e-5);
  CHECK(err <= 1e-9);
}

TEST_CASE("finite_diff_check returns inf for non-finite evaluations") {
  const Tensor x = Tensor::scalar(800.0);
  const double err = finite_diff_check(
      [](Tape&, std::span<const Var> p) { return exp(p[0]); }, std::span(&x, 1), 1e-5);
  CHECK(std::isinf(err));
}

TEST_CASE("every primitive passes central differences") {
  for (const auto& c : couple::gradsuite::primitive_cases()) {
    const auto rep = finite_diff_report(c.f, c.params, 1e-5);
    INFO(c.name << " worst param " << rep.worst_param << " entry " << rep.worst_entry
                << " analytic " << rep.analytic << " numeric " << rep.numeric);
    CHECK(rep.max_rel_error <= 1e-4);
  }
}

TEST_CASE("tape replay reproduces activations bitwise") {
  std::mt19937_64 gen(3);
  Tape tape;
  const Var a = tape.leaf(random_tensor({3, 4}, gen));
  const Var b = tape.leaf(random_tensor({4, 4}, gen));
  const Var h = tanh(matmul(a, b));
  const Var s = softmax_lastdim(layer_norm(h, tape.constant(Tensor({4}, 1.0)),
                                           tape.constant(Tensor({4}, 0.0)), 1e-6));
  const Var loss = sum(mul(s, s));
  (void)loss;
  const auto replayed = tape.replay();
  REQUIRE(replayed.size() == tape.size());
  for (NodeId i = 0; i < tape.size(); ++i) CHECK(replayed[i] == tape.value(i));
  for (NodeId i = 1; i < tape.size(); ++i) {
    for (NodeId in : tape.node(i).inputs) CHECK(in < i);
  }
}

TEST_CASE("adam first step and fixed point") {
  AdamState st = AdamState::for_params(std::vector<Tensor>{Tensor::vector({1.0, -2.0, 0.0})}, 0.01);
  std::vector<Tensor> params{Tensor::vector({1.0, -2.0, 0.5})};
  const std::vector<Tensor> grads{Tensor::vector({3.0, -0.5, 0.0})};
  adam_step(st, params, grads);
  CHECK(st.step == 1);
  CHECK(std::abs(params[0][0] - (1.0 - 0.01 * 3.0 / (3.0 + 1e-8))) < 1e-15);
  CHECK(std::abs(params[0][1] - (-2.0 + 0.01 * 0.5 / (0.5 + 1e-8))) < 1e-15);
  CHECK(params[0][2] == 0.5);
  CHECK(st.m[0][2] == 0.0);
  CHECK(st.v[0][2] == 0.0);

  std::vector<Tensor> bad{Tensor::vector({1.0, 2.0})};
  CHECK_THROWS_AS(adam_step(st, params, bad), couple::ShapeError);
}

TEST_CASE("adam drives x^2 toward zero") {
  // Scalar simulation oracle for the same recursion.
  double xo = 1.0, mo = 0.0, vo = 0.0;
  AdamState st = AdamState::for_params(std::vector<Tensor>{Tensor::scalar(0)}, 0.1);
  std::vector<Tensor> x{Tensor::scalar(1.0)};
  double prev = 1.0;
  for (int t = 1; t <= 100; ++t) {
    const double g = 2.0 * x[0].item();
    adam_step(st, x, std::vector<Tensor>{Tensor::scalar(g)});
    const double go = 2.0 * xo;
    mo = 0.9 * mo + 0.1 * go;
    vo = 0.999 * vo + 0.001 * go * go;
    xo -= 0.1 * (mo / (1 - std::pow(0.9, t))) / (std::sqrt(vo / (1 - std::pow(0.999, t))) + 1e-8);
    CHECK(x[0].item() == doctest::Approx(xo).epsilon(1e-12));
    if (t <= 10) {
      CHECK(std::abs(x[0].item()) < prev);
      prev = std::abs(x[0].item());
    }
  }
}

TEST_CASE("spectral norm of exactly orthogonal input is degenerate") {
  // A permutation W has W^T W - I = 0 exactly.
  const Tensor w = Tensor::matrix(3, 3, {0, 1, 0, 0, 0, 1, 1, 0, 0});
  Tensor a(Shape{3, 3});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 3; ++k) acc += w.at(k, i) * w.at(k, j);
      a.at(i, j) = acc - (i == j ? 1.0 : 0.0);
    }
  CHECK_THROWS_AS(spectral_norm_estimate(a, 2, 5), DegenerateIterate);
}

TEST_CASE("spectral norm of diag(3,0)") {
  const Tensor a = Tensor::matrix(2, 2, {3, 0, 0, 0});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CHECK(spectral_norm_estimate(a, 2, seed) <= 3.0 + 1e-15);
    CHECK(std::abs(spectral_norm_estimate(a, 50, seed) - 3.0) < 1e-12);
  }
}

TEST_CASE("power iteration matches the Jacobi oracle") {
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = couple::oracle::random_symmetric_with_gap(16, gen);
    Tensor a(Shape{16, 16});
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t j = 0; j < 16; ++j) a.at(i, j) = m[i][j];
    const double sigma = couple::oracle::spectral_radius(m);
    const double est = spectral_norm_estimate(a, 100, 1000 + trial);
    CHECK(std::abs(est - sigma) / sigma <= 1e-6);
    CHECK(spectral_norm_estimate(a, 2, 1000 + trial) <= sigma + 1e-12);
  }
}

TEST_CASE("two-step estimate stays below the spectral radius on gram matrices") {
  std::mt19937_64 gen(77);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = couple::oracle::random_gram_minus_identity(16, gen);
    Tensor a(Shape{16, 16});
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t j = 0; j < 16; ++j) a.at(i, j) = m[i][j];
    CHECK(spectral_norm_estimate(a, 2, trial) <= couple::oracle::spectral_radius(m) + 1e-12);
  }
}

TEST_CASE("power iteration ratio never exceeds the spectral radius") {
  std::mt19937_64 gen(99);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + trial % 10;
    const auto m = couple::oracle::random_symmetric(n, gen);
    std::vector<double> v(n), av(n, 0.0), aav(n, 0.0);
    for (double& x : v) x = nd(gen);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) av[i] += m[i][j] * v[j];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) aav[i] += m[i][j] * av[j];
    double n1 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      n1 += av[i] * av[i];
      n2 += aav[i] * aav[i];
    }
    CHECK(std::sqrt(n2) / std::sqrt(n1) <= couple::oracle::spectral_radius(m) + 1e-12);
  }
}
