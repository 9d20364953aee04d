#include <cmath>
#include <random>

#include "disco/gradcheck.hpp"
#include "disco/losses.hpp"
#include "disco/memory_bank.hpp"
#include "disco/ops.hpp"
#include "doctest.h"

using namespace disco;

namespace {

Tensor rows(std::initializer_list<std::initializer_list<double>> r) { return Tensor::matrix(r); }

double loss_value(const Var& v) { return v.value().item(); }

}  // namespace

TEST_CASE("cosine examples") {
  const std::vector<double> a{1, 0}, b{0, 1}, c{1, 2}, d{2, 1};
  CHECK(cosine(a, a) == 1.0);
  CHECK(cosine(a, b) == 0.0);
  CHECK(cosine(c, d) == doctest::Approx(0.8).epsilon(1e-15));
  const std::vector<double> zero{0, 0};
  CHECK_THROWS_AS(cosine(a, zero), NumericError);
}

TEST_CASE("temperature must be positive") {
  CHECK_THROWS(Temperature(0.0));
  CHECK_THROWS(Temperature(-1.0));
  CHECK_THROWS(Temperature(INFINITY));
  CHECK(Temperature(kDefaultTemperature).value() == 0.05);
}

TEST_CASE("kd_mse_loss examples") {
  Tape tape;
  const Var t = tape.constant(rows({{0.5, -1}, {2, 3}}));
  CHECK(loss_value(kd_mse_loss(tape.constant(rows({{0.5, -1}, {2, 3}})), t)) == 0.0);
  CHECK(loss_value(kd_mse_loss(tape.constant(rows({{0, 0}})), tape.constant(rows({{1, 1}})))) == 1.0);
  // per-pair MSE 1.0 and 0.25, summed over the batch
  const Var s2 = tape.constant(rows({{1, 1}, {0.5, 0.5}}));
  const Var t2 = tape.constant(rows({{0, 0}, {0, 0}}));
  CHECK(loss_value(kd_mse_loss(s2, t2)) == 1.25);

  // projection: identity-padded map of [1,1] to [1,1,2]
  const Var m = tape.constant(rows({{1, 0}, {0, 1}, {1, 1}}));
  CHECK(loss_value(kd_mse_loss(tape.constant(rows({{1, 1}})), tape.constant(rows({{1, 1, 2}})), m)) == 0.0);
  CHECK_THROWS_AS(kd_mse_loss(tape.constant(rows({{1, 1}})), tape.constant(rows({{1, 1, 2}}))), ShapeError);
}

TEST_CASE("ckd_loss examples") {
  Tape tape;
  MemoryBank bank(4, 2);
  SUBCASE("single pair with an empty bank is exactly zero") {
    const Var s = tape.constant(rows({{0.3, -2}}));
    const Var t = tape.constant(rows({{5, 1}}));
    CHECK(loss_value(ckd_loss(s, t, bank, Temperature(0.05))) == 0.0);
  }
  SUBCASE("two orthogonal pairs") {
    const Var s = tape.constant(rows({{1, 0}, {0, 1}}));
    const Var t = tape.constant(rows({{1, 0}, {0, 1}}));
    const double empty = loss_value(ckd_loss(s, t, bank, Temperature(1.0)));
    CHECK(empty == doctest::Approx(std::log1p(std::exp(-1.0))).epsilon(1e-14));
    CHECK(empty == doctest::Approx(0.31326).epsilon(1e-5));

    bank.push(rows({{0, 1}}));
    const double with_bank = loss_value(ckd_loss(s, t, bank, Temperature(1.0)));
    // anchor 1 gains e^0, anchor 2 gains e^1
    const double e = std::exp(1.0);
    const double expected = 0.5 * (-std::log(e / (e + 1 + 1)) - std::log(e / (e + 1 + e)));
    CHECK(with_bank == doctest::Approx(expected).epsilon(1e-14));
    CHECK(with_bank > empty);
  }
  SUBCASE("rejections") {
    CHECK_THROWS_AS(ckd_loss(tape.constant(rows({{1, 0}})), tape.constant(rows({{1, 0}, {0, 1}})), bank,
                             Temperature(1.0)),
                    ShapeError);
    MemoryBank wide(4, 3);
    wide.push(rows({{1, 2, 3}}));
    CHECK_THROWS_AS(ckd_loss(tape.constant(rows({{1, 0}})), tape.constant(rows({{1, 0}})), wide, Temperature(1.0)),
                    ShapeError);
  }
}

TEST_CASE("ckd_loss does not send gradient into the teacher") {
  Tape tape;
  const Var s = tape.parameter("student", rows({{1, 0.5}, {-0.2, 1}}));
  const Var t = tape.parameter("teacher", rows({{0.3, 1}, {1, -1}}));
  MemoryBank bank(2, 2);
  const auto g = tape.backward(ckd_loss(s, t, bank, Temperature(0.5)));
  for (double v : g.at("teacher").data()) CHECK(v == 0.0);
  double norm = 0.0;
  for (double v : g.at("student").data()) norm += v * v;
  CHECK(norm > 0.0);
}

TEST_CASE("supervised_cl_loss examples") {
  Tape tape;
  const Var a = tape.constant(rows({{1, 0}}));
  const Var p = tape.constant(rows({{1, 0}}));
  const Var n = tape.constant(rows({{0, 1}}));
  CHECK(loss_value(supervised_cl_loss(a, p, n, Temperature(1.0))) ==
        doctest::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 1.0))).epsilon(1e-14));
  CHECK(loss_value(supervised_cl_loss(a, a, a, Temperature(1.0))) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("memory bank FIFO examples") {
  MemoryBank bank(8, 1);
  CHECK(bank.empty());
  bank.push(rows({{1}, {2}, {3}}));
  CHECK(bank.fill() == 3);
  CHECK(bank.row(0)[0] == 1.0);
  CHECK(bank.row(2)[0] == 3.0);

  bank.push(rows({{4}, {5}, {6}, {7}, {8}, {9}, {10}}));
  CHECK(bank.fill() == 8);
  CHECK(bank.row(0)[0] == 3.0);  // 1 and 2 evicted
  CHECK(bank.contents() == Tensor::matrix(8, 1, {3, 4, 5, 6, 7, 8, 9, 10}));

  MemoryBank full(3, 1);
  full.push(rows({{1}, {2}, {3}}));
  full.push(rows({{4}, {5}, {6}}));
  CHECK(full.contents() == Tensor::matrix(3, 1, {4, 5, 6}));

  CHECK_THROWS_AS(full.push(rows({{1}, {2}, {3}, {4}})), ShapeError);
  CHECK_THROWS_AS(full.push(rows({{1, 2}})), ShapeError);
  full.clear();
  CHECK(full.empty());
}

TEST_CASE("loss gradients pass the finite-difference check, projection included") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> dist(0.0, 1.0);
  auto random = [&](std::size_t r, std::size_t c) {
    Tensor t({r, c});
    for (auto& v : t.data()) v = dist(rng);
    return t;
  };
  const Tensor teacher = random(3, 4);
  MemoryBank bank(5, 4);
  bank.push(random(4, 4));
  const ParamSet params{{"s", random(3, 2)}, {"m", random(4, 2)}};

  const auto kd = grad_check(
      [&](Tape& tape, const std::map<std::string, Var>& p) {
        return kd_mse_loss(p.at("s"), tape.constant(teacher), p.at("m"));
      },
      params);
  CHECK(kd.passed);
  const auto ckd = grad_check(
      [&](Tape& tape, const std::map<std::string, Var>& p) {
        return ckd_loss(p.at("s"), tape.constant(teacher), bank, Temperature(0.1), p.at("m"));
      },
      params);
  CHECK(ckd.passed);
  const auto cl = grad_check(
      [&](Tape&, const std::map<std::string, Var>& p) {
        return supervised_cl_loss(p.at("s"), ops::scale(p.at("s"), -0.5), ops::slice_rows(p.at("m"), 0, 3),
                                  Temperature(0.2));
      },
      params);
  CHECK(cl.passed);
}
