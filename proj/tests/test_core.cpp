#include <cmath>
#include <random>
#include <vector>

#include "disco/adam.hpp"
#include "disco/autodiff.hpp"
#include "disco/gradcheck.hpp"
#include "disco/kernels.hpp"
#include "disco/ops.hpp"
#include "disco/tensor.hpp"
#include "doctest.h"

using namespace disco;

namespace {

std::vector<double> random_values(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

Tensor random_tensor(std::mt19937_64& rng, Shape shape) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), random_values(rng, n));
}

void check_close(std::span<const double> a, std::span<const double> b, double rel) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(a[i] - b[i]) <= rel * std::max(1.0, std::abs(b[i])));
  }
}

}  // namespace

TEST_CASE("tensor construction and shape checks") {
  const Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  CHECK(m.shape() == Shape{2, 3});
  CHECK(m.at(1, 2) == 6.0);
  CHECK(m.row(1)[0] == 4.0);
  CHECK(Tensor::identity(3).at(2, 2) == 1.0);
  CHECK(Tensor::scalar(2.5).item() == 2.5);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), ShapeError);
  CHECK_THROWS_AS(Tensor({0, 2}), ShapeError);
  Tape tape;
  CHECK_THROWS_AS(tape.constant(Tensor::vector({1.0, NAN})), NumericError);
  CHECK_THROWS_AS(m.item(), ShapeError);
  CHECK(m.reshaped({3, 2}).at(2, 1) == 6.0);
}

TEST_CASE("kernel backends agree, including ragged tails") {
  if (!kernels::backend_available(kernels::Backend::kAvx2)) {
    MESSAGE("AVX2 unavailable on this host; equivalence test skipped");
    return;
  }
  const auto& s = kernels::scalar_table();
  const auto& v = kernels::avx2_table();
  std::mt19937_64 rng(7);
  for (std::size_t n : {0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 33, 64, 101}) {
    const auto x = random_values(rng, n);
    const auto y = random_values(rng, n);
    const double ds = s.dot(x.data(), y.data(), n);
    const double dv = v.dot(x.data(), y.data(), n);
    CHECK(std::abs(ds - dv) <= 1e-12 * std::max(1.0, std::abs(ds)));

    auto ys = y, yv = y;
    s.axpy(0.37, x.data(), ys.data(), n);
    v.axpy(0.37, x.data(), yv.data(), n);
    check_close(yv, ys, 1e-14);
  }
  for (std::size_t m : {1, 3, 5}) {
    for (std::size_t k : {1, 4, 7, 9}) {
      for (std::size_t n : {1, 2, 5, 8, 13}) {
        const auto a = random_values(rng, m * k);
        const auto b = random_values(rng, k * n);
        const auto bt = random_values(rng, n * k);
        const auto at = random_values(rng, k * m);
        const auto c0 = random_values(rng, m * n);
        auto cs = c0, cv = c0;
        s.gemm_nn(a.data(), b.data(), cs.data(), m, k, n);
        v.gemm_nn(a.data(), b.data(), cv.data(), m, k, n);
        check_close(cv, cs, 1e-12);
        cs = c0, cv = c0;
        s.gemm_nt(a.data(), bt.data(), cs.data(), m, k, n);
        v.gemm_nt(a.data(), bt.data(), cv.data(), m, k, n);
        check_close(cv, cs, 1e-12);
        cs = c0, cv = c0;
        s.gemm_tn(at.data(), b.data(), cs.data(), m, k, n);
        v.gemm_tn(at.data(), b.data(), cv.data(), m, k, n);
        check_close(cv, cs, 1e-12);
      }
    }
  }
}

TEST_CASE("backend switching") {
  const auto before = kernels::active_backend();
  kernels::set_backend(kernels::Backend::kScalar);
  CHECK(kernels::active_backend() == kernels::Backend::kScalar);
  CHECK(kernels::backend_name(kernels::Backend::kScalar) == "scalar");
  const std::vector<double> x{3, 4};
  CHECK(kernels::sum_squares(x) == 25.0);
  kernels::set_backend(before);
}

TEST_CASE("forward primitives") {
  Tape tape;
  const Var a = tape.constant(Tensor::vector({1, 2}));
  const Var b = tape.constant(Tensor::vector({3, 4}));
  CHECK(ops::add(a, b).value() == Tensor::vector({4, 6}));
  CHECK(ops::sub(b, a).value() == Tensor::vector({2, 2}));
  CHECK(ops::mul(a, b).value() == Tensor::vector({3, 8}));
  CHECK(ops::scale(a, 2.0).value() == Tensor::vector({2, 4}));
  CHECK(ops::l2norm(tape.constant(Tensor::vector({3, 4}))).value().item() == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(ops::sum(b).value().item() == 7.0);
  CHECK(ops::mean(b).value().item() == 3.5);
  CHECK(ops::exp(tape.constant(Tensor::vector({0.0}))).value()[0] == 1.0);
  CHECK(ops::log(tape.constant(Tensor::vector({1.0}))).value()[0] == 0.0);

  const Var v = tape.constant(Tensor::vector({1.5, -2.0, 7.0}));
  CHECK(ops::matmul(tape.constant(Tensor::identity(3)), v).value().data()[2] == 7.0);

  const Var m = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  CHECK(ops::add_rowvec(m, a).value() == Tensor::matrix({{2, 4}, {4, 6}}));
  CHECK(ops::matmul_nt(m, m).value() == Tensor::matrix({{5, 11}, {11, 25}}));
}

TEST_CASE("forward primitives reject bad operands") {
  Tape tape;
  const Var a = tape.constant(Tensor::vector({1, 2}));
  const Var c = tape.constant(Tensor::vector({1, 2, 3}));
  try {
    ops::add(a, c);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    CHECK(what.find("[2]") != std::string::npos);
    CHECK(what.find("[3]") != std::string::npos);
  }
  CHECK_THROWS_AS(ops::log(tape.constant(Tensor::vector({1.0, 0.0}))), NumericError);
  CHECK_THROWS_AS(ops::log(tape.constant(Tensor::vector({-1.0}))), NumericError);
  CHECK_THROWS_AS(ops::matmul(tape.constant(Tensor::matrix({{1, 2}})), tape.constant(Tensor::matrix({{1, 2}}))),
                  ShapeError);
  CHECK_THROWS_AS(ops::normalize_rows(tape.constant(Tensor::matrix({{0, 0}}))), NumericError);
}

TEST_CASE("backward examples") {
  SUBCASE("sum gives ones") {
    Tape tape;
    const Var x = tape.parameter("x", Tensor::matrix({{1, -2, 3}, {0.5, 7, 2}}));
    const auto g = tape.backward(ops::sum(x));
    CHECK(g.at("x") == Tensor::filled({2, 3}, 1.0));
  }
  SUBCASE("sum of squares gives 2x") {
    Tape tape;
    const Var x = tape.parameter("x", Tensor::vector({1, 2, 3}));
    const auto g = tape.backward(ops::sum(ops::mul(x, x)));
    CHECK(g.at("x") == Tensor::vector({2, 4, 6}));
  }
  SUBCASE("mean gives 1/n") {
    Tape tape;
    const Var x = tape.parameter("x", Tensor::vector({4, -1, 2, 9}));
    const auto g = tape.backward(ops::mean(x));
    CHECK(g.at("x") == Tensor::vector({0.25, 0.25, 0.25, 0.25}));
  }
  SUBCASE("untouched parameter gets zeros, detach cuts the path") {
    Tape tape;
    const Var x = tape.parameter("x", Tensor::vector({1, 2}));
    tape.parameter("y", Tensor::vector({3, 4}));
    const auto g = tape.backward(ops::sum(ops::mul(ops::detach(x), x)));
    CHECK(g.at("x") == Tensor::vector({1, 2}));
    CHECK(g.at("y") == Tensor::vector({0, 0}));
  }
  SUBCASE("non-scalar loss is rejected") {
    Tape tape;
    const Var x = tape.parameter("x", Tensor::vector({1, 2}));
    CHECK_THROWS_AS(tape.backward(x), ShapeError);
  }
}

TEST_CASE("gradients of every primitive pass the finite-difference check") {
  std::mt19937_64 rng(11);
  ParamSet params{{"a", random_tensor(rng, {3, 4})},
                  {"b", random_tensor(rng, {4, 2})},
                  {"v", random_tensor(rng, {2})},
                  {"w", random_tensor(rng, {5, 4})}};
  const std::vector<std::size_t> cols{1, 0, 3};
  const std::vector<std::size_t> ids{2, 0, 2, 1};
  const std::vector<std::size_t> offsets{0, 1, 4};
  const LossBuilder loss = [&](Tape&, const std::map<std::string, Var>& p) {
    const Var& a = p.at("a");
    Var h = ops::tanh(ops::add_rowvec(ops::matmul(a, p.at("b")), p.at("v")));  // [3,2]
    Var n = ops::normalize_rows(ops::matmul_nt(a, p.at("w")));                // [3,5]
    Var lse = ops::logsumexp_rows(ops::scale(n, 3.0));
    Var picked = ops::pick(a, cols);
    Var g = ops::gather_rows(p.at("w"), ids);  // [4,4]
    Var seg = ops::segment_mean(g, offsets);    // [2,4]
    Var soft = ops::segment_softmax(ops::slice_rows(ops::concat_rows({a, a}), 2, 4), std::vector<std::size_t>{0, 4});
    Var pos = ops::add(ops::exp(ops::scale(h, 0.5)), ops::mul(h, h));
    return ops::add(ops::add(ops::sum(ops::log(pos)), ops::mean(ops::sub(lse, picked))),
                    ops::add(ops::sum(ops::mul(soft, soft)), ops::l2norm(seg)));
  };
  const auto report = grad_check(loss, params);
  CHECK(report.passed);
  CHECK(report.worst_error < 1e-6);
}

TEST_CASE("gradient is linear in the loss") {
  std::mt19937_64 rng(5);
  ParamSet params{{"x", random_tensor(rng, {3, 3})}};
  auto base = [](Tape& tape, const std::map<std::string, Var>& p) {
    return ops::sum(ops::exp(ops::matmul(p.at("x"), tape.constant(Tensor::matrix({{1, 0, 2}, {0, 1, 0}, {1, 1, 1}})))));
  };
  const auto g1 = tape_gradients(base, params);
  const auto g3 = tape_gradients(
      [&](Tape& tape, const std::map<std::string, Var>& p) { return ops::scale(base(tape, p), 3.0); }, params);
  for (std::size_t i = 0; i < g1.at("x").size(); ++i) {
    CHECK(g3.at("x")[i] == doctest::Approx(3.0 * g1.at("x")[i]).epsilon(1e-14));
  }
}

TEST_CASE("adam examples") {
  SUBCASE("zero gradient leaves fresh parameters unchanged") {
    ParamSet params{{"x", Tensor::vector({1.5, -2.0})}};
    AdamState state;
    adam_step(params, {{"x", Tensor::vector({0.0, 0.0})}}, state);
    CHECK(params.at("x") == Tensor::vector({1.5, -2.0}));
    CHECK(state.step == 1);
  }
  SUBCASE("first step moves by the learning rate") {
    ParamSet params{{"x", Tensor::scalar(0.0)}};
    AdamState state;
    state.options.learning_rate = 0.1;
    adam_step(params, {{"x", Tensor::scalar(1.0)}}, state);
    // m_hat = 1, v_hat = 1 -> -0.1 * 1 / (1 + 1e-8)
    CHECK(params.at("x").item() == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-15));
  }
  SUBCASE("second step matches a hand evaluation") {
    ParamSet params{{"x", Tensor::scalar(0.0)}};
    AdamState state;
    state.options.learning_rate = 0.1;
    adam_step(params, {{"x", Tensor::scalar(1.0)}}, state);
    adam_step(params, {{"x", Tensor::scalar(-2.0)}}, state);
    const double m = 0.9 * 0.1 + 0.1 * -2.0;
    const double v = 0.999 * 0.001 + 0.001 * 4.0;
    const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
    const double expected = -0.1 / (1.0 + 1e-8) - 0.1 * mh / (std::sqrt(vh) + 1e-8);
    CHECK(params.at("x").item() == doctest::Approx(expected).epsilon(1e-14));
    CHECK(state.step == 2);
  }
  SUBCASE("deterministic") {
    std::mt19937_64 rng(3);
    const ParamSet start{{"w", random_tensor(rng, {4, 3})}};
    const Gradients grads{{"w", random_tensor(rng, {4, 3})}};
    ParamSet p1 = start, p2 = start;
    AdamState s1, s2;
    for (int i = 0; i < 5; ++i) {
      adam_step(p1, grads, s1);
      adam_step(p2, grads, s2);
    }
    CHECK(p1.at("w") == p2.at("w"));
    CHECK(s1.second_moment.at("w") == s2.second_moment.at("w"));
  }
  SUBCASE("shape mismatch and unknown ids are rejected without partial updates") {
    ParamSet params{{"x", Tensor::vector({1, 2})}};
    AdamState state;
    CHECK_THROWS_AS(adam_step(params, {{"x", Tensor::vector({1, 2, 3})}}, state), ShapeError);
    CHECK_THROWS(adam_step(params, {{"x", Tensor::vector({1, 1})}, {"ghost", Tensor::scalar(1)}}, state));
    CHECK(params.at("x") == Tensor::vector({1, 2}));
    CHECK(state.step == 0);
  }
}

TEST_CASE("gradient checker examples") {
  const LossBuilder squares = [](Tape&, const std::map<std::string, Var>& p) {
    return ops::sum(ops::mul(p.at("x"), p.at("x")));
  };
  const ParamSet params{{"x", Tensor::vector({1, 2})}};

  SUBCASE("correct gradient passes") {
    const auto report = grad_check(squares, params);
    CHECK(report.passed);
    CHECK(report.worst_error < 1e-6);
  }
  SUBCASE("constant loss passes via the absolute fallback") {
    const LossBuilder constant = [](Tape& tape, const std::map<std::string, Var>& p) {
      return ops::add(ops::scale(ops::sum(p.at("x")), 0.0), ops::sum(tape.constant(Tensor::scalar(3.0))));
    };
    const auto report = grad_check(constant, params);
    CHECK(report.passed);
  }
  SUBCASE("corrupted gradient is flagged") {
    auto analytic = tape_gradients(squares, params);
    for (auto& v : analytic.at("x").data()) v *= 2.0;
    const auto report = compare_gradients(squares, params, analytic);
    CHECK_FALSE(report.passed);
    CHECK(report.worst_param == "x");
    CHECK(report.failures().size() == 2);
    CHECK(report.worst_error == doctest::Approx(0.5));
  }
}
