#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "hedgelab/autograd.hpp"
#include "hedgelab/common.hpp"
#include "hedgelab/risk.hpp"

using namespace hedgelab;

namespace {

// Central-difference gradient of a scalar function of a matrix.
nn::Matrix numeric_grad(const std::function<double(const nn::Matrix&)>& f, const nn::Matrix& x,
                        double h = 1e-6) {
  nn::Matrix g(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    nn::Matrix up = x, dn = x;
    up[i] += h;
    dn[i] -= h;
    g[i] = (f(up) - f(dn)) / (2 * h);
  }
  return g;
}

nn::Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double lo = -1,
                         double hi = 1) {
  Engine rng = make_engine(seed, 0);
  std::uniform_real_distribution<double> u(lo, hi);
  nn::Matrix m(r, c);
  for (double& x : m.values()) x = u(rng);
  return m;
}

// Checks the reverse-mode gradient of sum(op(x)) * weights against finite
// differences.
void check_unary(const std::function<nn::Var(const nn::Var&)>& op, const nn::Matrix& x,
                 double tol = 1e-6) {
  nn::Matrix shape;
  {
    nn::NoGradGuard guard;
    shape = op(nn::constant(x)).value();
  }
  const nn::Matrix w = random_matrix(shape.rows(), shape.cols(), 99);
  auto value = [&](const nn::Matrix& m) {
    nn::NoGradGuard guard;
    return nn::sum(nn::mul(op(nn::constant(m)), nn::constant(w))).item();
  };
  const auto xv = nn::parameter(x);
  nn::backward(nn::sum(nn::mul(op(xv), nn::constant(w))));
  const auto fd = numeric_grad(value, x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(xv.grad()[i] == doctest::Approx(fd[i]).epsilon(tol).scale(1.0));
  }
}

std::vector<double> draws(std::size_t n, std::uint64_t seed, double sd = 1.0) {
  Engine rng = make_engine(seed, 0);
  std::normal_distribution<double> d(0.0, sd);
  std::vector<double> x(n);
  for (double& v : x) v = d(rng);
  return x;
}

}  // namespace

TEST_SUITE("autograd") {
  TEST_CASE("elementwise ops match finite differences") {
    const auto x = random_matrix(3, 4, 1);
    check_unary([](const nn::Var& v) { return nn::square(v); }, x);
    check_unary([](const nn::Var& v) { return nn::exp(v); }, x);
    check_unary([](const nn::Var& v) { return nn::scale(v, -2.5); }, x);
    check_unary([](const nn::Var& v) { return nn::add_scalar(v, 3.0); }, x);
    check_unary([](const nn::Var& v) { return nn::log(nn::add_scalar(nn::square(v), 1.0)); }, x);
    check_unary([](const nn::Var& v) { return nn::mul(v, v); }, x);
    check_unary([](const nn::Var& v) { return nn::sub(nn::square(v), v); }, x);
    check_unary([](const nn::Var& v) { return nn::reshape(v, 4, 3); }, x);
    check_unary([](const nn::Var& v) { return nn::concat_cols({v, nn::exp(v)}); }, x);
  }

  TEST_CASE("matmul, bias and reductions match finite differences") {
    const auto a = random_matrix(5, 3, 2);
    const auto b = random_matrix(3, 4, 3);
    const auto bias = random_matrix(1, 4, 4);
    check_unary([&](const nn::Var& v) { return nn::matmul(v, nn::constant(b)); }, a);
    check_unary([&](const nn::Var& v) { return nn::matmul(nn::constant(a), v); }, b);
    check_unary([&](const nn::Var& v) { return nn::add_row(nn::matmul(nn::constant(a), nn::constant(b)), v); },
                bias);
    check_unary([](const nn::Var& v) { return nn::mean(nn::exp(v)); }, a);
  }

  TEST_CASE("layer norm gradients and output statistics") {
    const auto x = random_matrix(6, 8, 5, -3, 3);
    const auto gain = random_matrix(1, 8, 6, 0.5, 1.5);
    const auto bias = random_matrix(1, 8, 7);
    check_unary([&](const nn::Var& v) {
      return nn::layer_norm(v, nn::constant(gain), nn::constant(bias));
    }, x, 1e-5);
    check_unary([&](const nn::Var& v) {
      return nn::layer_norm(nn::constant(x), v, nn::constant(bias));
    }, gain, 1e-5);

    const auto y = nn::layer_norm(nn::constant(x), nn::constant(nn::Matrix(1, 8, 1.0)),
                                  nn::constant(nn::Matrix(1, 8, 0.0)), 0.0);
    for (std::size_t r = 0; r < 6; ++r) {
      double m = 0, v = 0;
      for (double e : y.value().row(r)) m += e;
      m /= 8;
      for (double e : y.value().row(r)) v += (e - m) * (e - m);
      v /= 8;
      CHECK(m == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
      CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("relu uses a zero subgradient at zero") {
    const auto x = nn::parameter(nn::Matrix(1, 3, std::vector<double>{-1.0, 0.0, 2.0}));
    nn::backward(nn::sum(nn::relu(x)));
    CHECK(x.grad()[0] == 0.0);
    CHECK(x.grad()[1] == 0.0);
    CHECK(x.grad()[2] == 1.0);
  }

  TEST_CASE("shared subexpressions accumulate gradients") {
    const auto x = nn::parameter(nn::Matrix::scalar(3.0));
    const auto y = nn::mul(x, x);
    nn::backward(nn::add(y, y));
    CHECK(x.grad()[0] == doctest::Approx(12.0));
  }

  TEST_CASE("backward needs a scalar root") {
    const auto x = nn::parameter(nn::Matrix(2, 2, 1.0));
    CHECK_THROWS_AS(nn::backward(x), ValidationError);
  }

  TEST_CASE("no-grad mode records nothing") {
    const auto x = nn::parameter(nn::Matrix::scalar(2.0));
    nn::Var y;
    {
      nn::NoGradGuard guard;
      CHECK_FALSE(nn::grad_enabled());
      y = nn::square(x);
    }
    CHECK(nn::grad_enabled());
    CHECK(y.value()[0] == 4.0);
    CHECK_FALSE(y.requires_grad());
  }
}

TEST_SUITE("risk") {
  TEST_CASE("erm of a symmetric two-point law") {
    const std::vector<double> x = {-1.0, 1.0};
    CHECK(risk::erm(x, 1.0) == doctest::Approx(-std::log(std::cosh(1.0))).epsilon(1e-12));
    CHECK(std::abs(risk::erm(x, 1.0) + std::log(std::cosh(1.0))) < 1e-10);
  }

  TEST_CASE("erm is stable for extreme losses") {
    const std::vector<double> x = {-1e6, 0.0};
    const double u = risk::erm(x, 10.0);
    CHECK(std::isfinite(u));
    CHECK(u == doctest::Approx(-1e6 + std::log(2.0) / 10.0).epsilon(1e-12));
    const std::vector<double> y = {1e6, 0.0};
    CHECK(risk::erm(y, 10.0) == doctest::Approx(std::log(2.0) / 10.0).epsilon(1e-12));
  }

  TEST_CASE("erm tends to the mean as lambda vanishes") {
    const auto x = draws(1000, 3);
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
    CHECK(risk::erm(x, 1e-8) == doctest::Approx(mean).epsilon(1e-6).scale(1.0));
  }

  TEST_CASE("cvar hand examples") {
    std::vector<double> x(20);
    std::iota(x.begin(), x.end(), 1.0);
    CHECK(risk::cvar_tail_size(20, 0.95) == 1);
    CHECK(risk::cvar(x, 0.95) == 1.0);
    CHECK(risk::cvar_tail_size(20, 0.9) == 2);
    CHECK(risk::cvar(x, 0.9) == 1.5);
    CHECK(risk::cvar_tail_size(100, 0.99) == 1);
    CHECK(risk::cvar_tail_size(10, 0.95) == 1);
    CHECK(risk::cvar_tail_size(7, 0.0) == 7);
    CHECK(risk::cvar(x, 0.0) == 10.5);
    const std::vector<double> y = {3.0, -2.0, 5.0, -2.0};
    CHECK(risk::cvar(y, 0.5) == -2.0);
  }

  TEST_CASE("cvar tail agrees with a sorting oracle") {
    for (const double alpha : {0.5, 0.9, 0.95, 0.99}) {
      const auto x = draws(997, 11);
      auto sorted = x;
      std::sort(sorted.begin(), sorted.end());
      const auto k = static_cast<std::size_t>(std::ceil((1.0 - alpha) * 997 - 1e-9));
      const double oracle = std::accumulate(sorted.begin(), sorted.begin() + k, 0.0) / k;
      CHECK(std::abs(risk::cvar(x, alpha) - oracle) < 1e-10);
    }
  }

  TEST_CASE("cash invariance and monotonicity") {
    const auto x = draws(500, 5, 0.1);
    for (const auto m : {risk::RiskMeasure::erm(1), risk::RiskMeasure::erm(10),
                         risk::RiskMeasure::cvar(0.9), risk::RiskMeasure::cvar(0.99)}) {
      auto shifted = x, better = x;
      for (double& v : shifted) v += 0.37;
      for (std::size_t i = 0; i < better.size(); i += 3) better[i] += 0.05;
      INFO(m.label());
      CHECK(risk::utility(shifted, m) == doctest::Approx(risk::utility(x, m) + 0.37).epsilon(1e-12));
      CHECK(risk::utility(better, m) >= risk::utility(x, m));
      CHECK(risk::indifference_price(x, m) == doctest::Approx(-risk::utility(x, m)).epsilon(1e-14));
      auto priced = x;
      const double p = risk::indifference_price(x, m);
      for (double& v : priced) v += p;
      CHECK(std::abs(risk::utility(priced, m)) < 1e-10);
    }
  }

  TEST_CASE("differentiable risk measures agree with the plain ones") {
    const auto x = draws(64, 8);
    nn::Matrix m(64, 1, x);
    for (const auto rm : {risk::RiskMeasure::erm(1), risk::RiskMeasure::erm(10),
                          risk::RiskMeasure::cvar(0.9)}) {
      CHECK(risk::utility(nn::constant(m), rm).item() ==
            doctest::Approx(risk::utility(x, rm)).epsilon(1e-13));
    }
  }

  TEST_CASE("risk gradients match finite differences") {
    const auto x = draws(40, 9);
    const nn::Matrix m(40, 1, x);
    for (const auto rm : {risk::RiskMeasure::erm(1), risk::RiskMeasure::erm(10),
                          risk::RiskMeasure::cvar(0.9)}) {
      INFO(rm.label());
      const auto v = nn::parameter(m);
      nn::backward(risk::utility(v, rm));
      const auto fd = numeric_grad(
          [&](const nn::Matrix& p) { return risk::utility(p.values(), rm); }, m, 1e-7);
      for (std::size_t i = 0; i < m.size(); ++i) {
        CHECK(v.grad()[i] == doctest::Approx(fd[i]).epsilon(1e-5).scale(1.0));
      }
    }
  }

  TEST_CASE("measure parsing and validation") {
    CHECK(risk::parse_measure("erm:10").lambda == 10.0);
    CHECK(risk::parse_measure("cvar:0.99").kind == risk::RiskKind::cvar);
    CHECK(risk::parse_measure("erm:1").label() == "ERM (lambda=1)");
    CHECK(risk::parse_measure("cvar:0.95").label() == "CVaR (alpha=0.95)");
    CHECK_THROWS_AS(risk::parse_measure("var:0.95"), ValidationError);
    CHECK_THROWS_AS(risk::parse_measure("erm:0"), ValidationError);
    CHECK_THROWS_AS(risk::parse_measure("cvar:1"), ValidationError);
    CHECK_THROWS_AS(risk::parse_measure("erm"), ValidationError);
    const std::vector<double> empty;
    CHECK_THROWS_AS(risk::erm(empty, 1.0), ValidationError);
  }
}
