#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hedgelab/fcn_market.hpp"
#include "stats_helpers.hpp"

using namespace hedgelab;
using namespace hedgelab::market;

namespace {
FcnAgent agent_with(double wf, double wc, double wn, int tau_star, int tau, double margin) {
  FcnAgent a;
  a.w_fundamental = wf;
  a.w_chart = wc;
  a.w_noise = wn;
  a.tau_star = tau_star;
  a.tau = tau;
  a.margin = margin;
  return a;
}

MarketConfig small_market(std::uint64_t seed) {
  MarketConfig c;
  c.steps_per_day = 10;
  c.days = 20;
  c.seed = seed;
  return c;
}
}  // namespace

TEST_SUITE("fcn_agents") {
  TEST_CASE("fundamental factor") {
    const auto a = agent_with(1, 0, 0, 100, 10, 0);
    const double p[] = {1.0};
    CHECK(compute_factors(a, p, 1.0, 1.1).fundamental ==
          doctest::Approx(9.531017980432486e-4).epsilon(1e-12));
    CHECK(compute_factors(a, p, 1.3, 1.3).fundamental == 0.0);
    CHECK(compute_factors(agent_with(1, 0, 0, 7, 10, 0), p, 1.3, 1.3).fundamental == 0.0);
  }

  TEST_CASE("chart factor averages the last tau log-returns") {
    const auto a = agent_with(0, 1, 0, 100, 2, 0);
    const std::vector<double> h = {1.00, 1.02, 1.01};
    const double expected = (std::log(1.01 / 1.02) + std::log(1.02 / 1.00)) / 2.0;
    CHECK(compute_factors(a, h, 1.01, 1.0).chart == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(4.975124e-3).epsilon(1e-6));
  }

  TEST_CASE("chart factor truncates a short history") {
    const auto a = agent_with(0, 1, 0, 100, 10, 0);
    const std::vector<double> h = {1.0, 1.1, 1.21};
    CHECK(compute_factors(a, h, 1.21, 1.0).chart == doctest::Approx(std::log(1.1)));
    const std::vector<double> one = {1.0};
    CHECK(compute_factors(a, one, 1.0, 1.0).chart == 0.0);
  }

  TEST_CASE("chart factor matches a direct sum on a long window") {
    std::vector<double> h;
    Engine rng = make_engine(3, 0);
    std::normal_distribution<double> n(0, 0.01);
    double p = 1.0;
    for (int i = 0; i < 60; ++i) {
      p *= std::exp(n(rng));
      h.push_back(p);
    }
    const auto a = agent_with(0, 1, 0, 100, 25, 0);
    double direct = 0.0;
    for (std::size_t j = 1; j <= 25; ++j) direct += std::log(h[h.size() - j] / h[h.size() - j - 1]);
    CHECK(compute_factors(a, h, h.back(), 1.0).chart ==
          doctest::Approx(direct / 25.0).epsilon(1e-10));
  }

  TEST_CASE("expected price") {
    const auto a = agent_with(1, 0, 0, 1, 10, 0);
    Factors f;
    f.fundamental = 0.001;
    CHECK(expected_return(a, f) == doctest::Approx(0.001));
    CHECK(expected_price(a, 1.0, f) == doctest::Approx(std::exp(0.01)).epsilon(1e-14));
    CHECK(expected_price(a, 1.0, f) == doctest::Approx(1.01005).epsilon(1e-5));
  }

  TEST_CASE("weighted average of the three factors") {
    const auto a = agent_with(1, 2, 3, 1, 1, 0);
    const Factors f{0.1, 0.2, 0.3};
    CHECK(expected_return(a, f) == doctest::Approx((0.1 + 0.4 + 0.9) / 6.0));
  }

  TEST_CASE("bid rule with margin and cap") {
    // tau = 1 and F = ln 1.05 make the expected price exactly 1.05.
    const auto a = agent_with(1, 0, 0, 1, 1, 0.05);
    Factors f;
    f.fundamental = std::log(1.05);
    const Quote quote{1.0, 1.00, 1.02};
    const auto same = decide_order(a, quote, f, QuoteCap::same_side_best);
    REQUIRE(same);
    CHECK(same->side == lob::Side::bid);
    CHECK(same->price == doctest::Approx(0.9975));
    const auto opposite = decide_order(a, quote, f, QuoteCap::opposite_best);
    REQUIRE(opposite);
    CHECK(opposite->price == doctest::Approx(0.9975));

    const auto eager = agent_with(1, 0, 0, 1, 1, 0.0);
    const auto capped = decide_order(eager, quote, f, QuoteCap::opposite_best);
    REQUIRE(capped);
    CHECK(capped->price == 1.02);
    const auto literal = decide_order(eager, quote, f, QuoteCap::same_side_best);
    CHECK(literal->price == 1.00);
  }

  TEST_CASE("ask rule and missing quotes") {
    const auto a = agent_with(1, 0, 0, 1, 1, 0.1);
    Factors f;
    f.fundamental = std::log(0.9);
    const auto o = decide_order(a, Quote{1.0, std::nullopt, std::nullopt}, f,
                                QuoteCap::opposite_best);
    REQUIRE(o);
    CHECK(o->side == lob::Side::ask);
    CHECK(o->price == doctest::Approx(0.99));
    const auto capped =
        decide_order(a, Quote{1.0, 1.00, std::nullopt}, f, QuoteCap::opposite_best);
    CHECK(capped->price == doctest::Approx(1.00));
  }

  TEST_CASE("no order when indifferent") {
    const auto a = agent_with(1, 1, 1, 10, 10, 0.05);
    CHECK_FALSE(decide_order(a, Quote{1.0, 0.99, 1.01}, Factors{}, QuoteCap::opposite_best));
  }

  TEST_CASE("emitted prices are positive for arbitrary factors") {
    Engine rng = make_engine(11, 0);
    std::normal_distribution<double> n(0, 0.05);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 20000; ++i) {
      const auto a = agent_with(u(rng) * 5, u(rng) * 5, u(rng) * 5 + 1e-3, 1 + i % 50,
                                1 + i % 300, u(rng));
      const Factors f{n(rng), n(rng), n(rng)};
      const Quote q{0.5 + u(rng), 0.5 + u(rng) * 0.4, 0.95 + u(rng)};
      if (const auto o = decide_order(a, q, f, QuoteCap::opposite_best)) CHECK(o->price > 0.0);
    }
  }

  TEST_CASE("agent parameter draws follow their uniform laws") {
    AgentPopulation pop;
    pop.tau_star_min = 1;
    pop.tau_star_max = 100;
    pop.tau_min = 5;
    pop.tau_max = 20;
    pop.k_min = 0.0;
    pop.k_max = 0.2;
    const int n = 5000;
    const auto agents = sample_agents(pop, n, 99);
    std::vector<double> ts, tw, km;
    for (const auto& a : agents) {
      ts.push_back(a.tau_star);
      tw.push_back(a.tau);
      km.push_back(a.margin);
      CHECK(a.tau_star >= 1);
      CHECK(a.tau_star <= 100);
      CHECK(a.margin >= 0.0);
      CHECK(a.margin <= 0.2);
    }
    const double critical = 1.63 / std::sqrt(n);  // 1% level
    CHECK(testing::ks_discrete_uniform(ts, 1, 100) < critical);
    CHECK(testing::ks_discrete_uniform(tw, 5, 20) < critical);
    CHECK(testing::ks_uniform(km, 0.0, 0.2) < critical);
  }

  TEST_CASE("sessions are reproducible") {
    const auto c = small_market(5);
    const AgentPopulation pop;
    const auto a = run_session(c, pop);
    const auto b = run_session(c, pop);
    CHECK(a.prices == b.prices);
    CHECK(a.trades == b.trades);
    CHECK(a.prices.size() == 201);
    CHECK_FALSE(a.degenerate());
  }

  TEST_CASE("zero fundamental volatility keeps the fundamental at 1") {
    auto c = small_market(6);
    c.sigma_star = 0.0;
    const auto r = run_session(c, AgentPopulation{});
    for (double f : r.fundamental) CHECK(f == 1.0);
  }

  TEST_CASE("fundamental log increments have the configured volatility") {
    auto c = small_market(8);
    c.steps_per_day = 50;
    c.sigma_star = 1e-2;
    std::vector<double> inc;
    for (std::uint64_t s = 0; s < 5; ++s) {
      c.seed = s;
      const auto r = run_session(c, AgentPopulation{});
      for (std::size_t i = 1; i < r.fundamental.size(); ++i) {
        inc.push_back(std::log(r.fundamental[i] / r.fundamental[i - 1]));
      }
    }
    const auto m = testing::moments(inc);
    CHECK(std::sqrt(m.variance) == doctest::Approx(1e-2).epsilon(0.03));
    CHECK(std::abs(m.mean) < 3.0 * std::sqrt(m.variance / inc.size()));
  }

  TEST_CASE("noise-only markets have no drift") {
    AgentPopulation pop;
    pop.w_fundamental = 0;
    pop.w_chart = 0;
    pop.w_noise = 1;
    std::vector<double> means;
    for (std::uint64_t s = 0; s < 10; ++s) {
      auto c = small_market(100 + s);
      c.steps_per_day = 50;
      const auto r = run_session(c, pop);
      CHECK_FALSE(r.degenerate());
      means.push_back(std::log(r.prices.back() / r.prices.front()) /
                      static_cast<double>(r.prices.size() - 1));
    }
    const auto m = testing::moments(means);
    CHECK(std::abs(m.mean) < 3.0 * std::sqrt(m.variance / means.size()) + 1e-12);
  }

  TEST_CASE("the same-side cap cannot cross a two-sided book") {
    Engine rng = make_engine(3, 0);
    std::uniform_real_distribution<double> u(0.9, 1.1);
    const auto a = agent_with(1, 5, 0, 100, 10, 0.05);
    for (int i = 0; i < 1000; ++i) {
      const double bid = u(rng), ask = bid + 0.01;
      const double hist[] = {u(rng), u(rng), u(rng)};
      const double price = u(rng);
      const auto f = compute_factors(a, hist, price, u(rng));
      const auto o = decide_order(a, Quote{price, bid, ask}, f, QuoteCap::same_side_best);
      if (!o) continue;
      if (o->side == lob::Side::bid) CHECK(o->price <= bid);
      if (o->side == lob::Side::ask) CHECK(o->price >= ask);
    }
  }

  TEST_CASE("path extraction samples one price per day and normalizes") {
    std::vector<double> constant(201, 1.25);
    const auto p = extract_path(constant, 20, 10);
    REQUIRE(p.size() == 21);
    for (double x : p) CHECK(x == 1.0);

    std::vector<double> linear(201);
    for (std::size_t i = 0; i < linear.size(); ++i) linear[i] = 1.0 + 0.1 * i / 200.0;
    const auto q = extract_path(linear, 20, 10);
    CHECK(q[1] == doctest::Approx(linear[10] / linear[0]));
    CHECK(q[20] == doctest::Approx(1.1));

    const auto batch = extract_paths({constant, linear, constant}, 20, 10);
    CHECK(batch.size() == 3);
    CHECK(batch.n_points() == 21);
    CHECK_THROWS_AS(extract_path(std::vector<double>(100, 1.0), 20, 10), ValidationError);
  }

  TEST_CASE("paths do not depend on the raw price scale") {
    const auto r = run_session(small_market(9), AgentPopulation{});
    std::vector<double> scaled = r.prices;
    for (double& x : scaled) x *= 37.5;
    const auto a = extract_path(r.prices, 20, 10);
    const auto b = extract_path(scaled, 20, 10);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-14));
  }

  TEST_CASE("batches are independent of the worker count") {
    const auto c = small_market(0);
    const auto a = generate_market_paths(c, AgentPopulation{}, 12, 42, 1);
    const auto b = generate_market_paths(c, AgentPopulation{}, 12, 42, 3);
    CHECK(a.paths.data() == b.paths.data());
    CHECK(a.rejected_sessions == b.rejected_sessions);
    for (std::size_t i = 0; i < a.paths.size(); ++i) CHECK(a.paths.path(i)[0] == 1.0);
  }

  TEST_CASE("markets that never trade are rejected") {
    // Fundamental-only agents at p = p* with no noise never quote.
    auto c = small_market(1);
    c.sigma_star = 0.0;
    AgentPopulation pop;
    pop.w_chart = 0;
    pop.w_noise = 0;
    CHECK_THROWS_AS(generate_market_paths(c, pop, 2, 1, 1, 3), RuntimeFailure);
  }

  TEST_CASE("config validation") {
    MarketConfig c;
    c.preopen_steps = 50;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    AgentPopulation p;
    p.tau_min = 20;
    p.tau_max = 10;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p = AgentPopulation{};
    p.w_fundamental = p.w_chart = p.w_noise = 0;
    CHECK_THROWS_AS(p.validate(), ValidationError);
  }
}
