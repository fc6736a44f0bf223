#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "hedgelab/common.hpp"
#include "hedgelab/generators.hpp"
#include "hedgelab/policy.hpp"
#include "hedgelab/tuner.hpp"

using namespace hedgelab;
using namespace hedgelab::tuning;

namespace {

SearchSpace line_space() {
  SearchSpace s;
  std::vector<double> v;
  for (int i = 0; i < 10; ++i) v.push_back(i);
  s.add("x", v);
  s.add("y", {0.5, 1.5});
  return s;
}

TrialResult distance_to_three(const Assignment& a, std::uint64_t) {
  return {TrialStatus::ok, std::abs(a.at("x") - 3.0) + a.at("y"), ""};
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "hedgelab_tuner_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& file) {
  std::ifstream in(file);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("tuner") {
  TEST_CASE("singleton grids always yield the same assignment") {
    SearchSpace s;
    s.add("a", {2.0});
    s.add("b", {7.0});
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto a = sample_trial(s, Strategy::tpe_like, {}, seed);
      CHECK(a.at("a") == 2.0);
      CHECK(a.at("b") == 7.0);
    }
  }

  TEST_CASE("constraints hold for every draw") {
    const auto space = SearchSpace::for_generator(GeneratorKind::market);
    Engine rng = make_engine(1, 0);
    std::map<double, int> k_min_counts;
    for (int i = 0; i < 10000; ++i) {
      const auto a = sample_random(space, rng);
      REQUIRE(space.satisfies(a));
      CHECK(a.at("tau_star_min") <= a.at("tau_star_max"));
      CHECK(a.at("tau_min") <= a.at("tau_max"));
      CHECK(a.at("k_min") <= a.at("k_max"));
      ++k_min_counts[a.at("k_min")];
    }
    // Rejection keeps the draw uniform over feasible pairs: k_min = 0 pairs
    // with all five k_max values, k_min = 0.2 with one.
    CHECK(k_min_counts[0.0] > 3 * k_min_counts[0.2]);
  }

  TEST_CASE("infeasible constraints are rejected") {
    SearchSpace s;
    s.add("lo", {5, 6});
    s.add("hi", {1, 2});
    s.constrain("lo", "hi");
    CHECK_THROWS_AS(s.validate(), ValidationError);
    SearchSpace t;
    t.add("a", {});
    CHECK_THROWS_AS(t.validate(), ValidationError);
    SearchSpace u;
    u.add("a", {1});
    CHECK_THROWS_AS(u.add("a", {2}), ValidationError);
    CHECK_THROWS_AS(u.restrict("b", {1}), ValidationError);
  }

  TEST_CASE("default grids") {
    const auto gbm = SearchSpace::for_generator(GeneratorKind::gbm);
    CHECK(gbm.grid("learning_rate").values.size() == 5);
    CHECK(gbm.grid("mu").values.size() == 11);
    CHECK(gbm.grid("mu").values.front() == -0.25);
    CHECK(gbm.grid("sigma").values.back() == 0.5);
    const auto heston = SearchSpace::for_generator(GeneratorKind::heston);
    CHECK(heston.grid("rho").values.size() == 41);
    CHECK(heston.grid("rho").values[21] == 0.05);
    CHECK(SearchSpace::for_generator(GeneratorKind::market).keys().size() == 12);
  }

  TEST_CASE("tpe sampling favours values that ranked well") {
    const auto space = line_space();
    std::vector<Trial> history;
    for (std::size_t i = 0; i < 40; ++i) {
      Trial t;
      t.id = i;
      t.assignment = {{"x", static_cast<double>(i % 10)}, {"y", 0.5 + static_cast<double>(i / 20)}};
      t.objective = distance_to_three(t.assignment, 0).objective;
      history.push_back(t);
    }
    std::map<double, int> counts;
    const int draws = 5000;
    for (int s = 0; s < draws; ++s) ++counts[sample_trial(space, Strategy::tpe_like, history, s).at("x")];
    CHECK(counts[3.0] > 0.25 * draws);
    CHECK(counts[3.0] > 5 * counts[9.0]);

    std::map<double, int> random_counts;
    for (int s = 0; s < draws; ++s) ++random_counts[sample_trial(space, Strategy::random, history, s).at("x")];
    CHECK(random_counts[3.0] < 0.15 * draws);
  }

  TEST_CASE("studies are deterministic and independent of the worker count") {
    const auto space = line_space();
    StudyOptions o;
    o.n_trials = 16;
    o.seed = 4;
    o.tpe.startup_trials = 4;
    const auto a = run_study(space, o, distance_to_three);
    o.workers = 3;
    const auto b = run_study(space, o, distance_to_three);
    REQUIRE(a.trials.size() == 16);
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(a.trials[i].id == b.trials[i].id);
      CHECK(a.trials[i].assignment == b.trials[i].assignment);
      CHECK(a.trials[i].objective == b.trials[i].objective);
    }
    for (std::size_t i = 1; i < 16; ++i) CHECK(a.trials[i - 1].objective <= a.trials[i].objective);
  }

  TEST_CASE("failed and degenerate trials rank last") {
    const auto space = line_space();
    StudyOptions o;
    o.n_trials = 12;
    o.strategy = Strategy::random;
    const auto r = run_study(space, o, [](const Assignment& a, std::uint64_t) -> TrialResult {
      if (a.at("x") >= 7) throw std::runtime_error("boom");
      if (a.at("x") == 6) return {TrialStatus::degenerate, 0.0, "no trades"};
      if (a.at("x") == 5) return {TrialStatus::ok, std::nan(""), ""};
      return distance_to_three(a, 0);
    });
    bool seen_bad = false;
    for (const auto& t : r.trials) {
      const bool bad = t.status != TrialStatus::ok;
      if (seen_bad) CHECK(bad);
      seen_bad = seen_bad || bad;
      if (bad) CHECK(std::isinf(t.objective));
      if (t.assignment.at("x") >= 7) CHECK(t.status == TrialStatus::failed);
      if (t.assignment.at("x") == 6) CHECK(t.status == TrialStatus::degenerate);
      if (t.assignment.at("x") == 5) CHECK(t.status == TrialStatus::failed);
    }
    CHECK(r.best().status == TrialStatus::ok);
  }

  TEST_CASE("an interrupted study resumes from its ledger") {
    const auto dir = fresh_dir("resume");
    const auto space = line_space();
    StudyOptions o;
    o.strategy = Strategy::random;
    o.seed = 9;
    o.ledger = dir / "ledger.csv";
    o.n_trials = 6;
    run_study(space, o, distance_to_three);
    int calls = 0;
    o.n_trials = 10;
    o.best_file = dir / "best.json";
    const auto resumed = run_study(space, o, [&](const Assignment& a, std::uint64_t s) {
      ++calls;
      return distance_to_three(a, s);
    });
    CHECK(resumed.resumed == 6);
    CHECK(calls == 4);
    CHECK(resumed.trials.size() == 10);

    StudyOptions fresh = o;
    fresh.ledger = dir / "fresh.csv";
    fresh.best_file = dir / "fresh_best.json";
    const auto whole = run_study(space, fresh, distance_to_three);
    CHECK(slurp(dir / "ledger.csv") == slurp(dir / "fresh.csv"));
    CHECK(slurp(dir / "best.json") == slurp(dir / "fresh_best.json"));
    CHECK(whole.best().assignment == resumed.best().assignment);

    const auto rows = read_ledger(dir / "ledger.csv", space);
    CHECK(rows.size() == 10);
    CHECK(slurp(dir / "ledger.csv").rfind("trial_id,status,objective,seed,x,y\n", 0) == 0);
  }

  TEST_CASE("a ledger for another search space is refused") {
    const auto dir = fresh_dir("mismatch");
    const auto file = dir / "ledger.csv";
    {
      std::ofstream out(file);
      out << "trial_id,status,objective,seed,z\n0,ok,1,5,2\n";
    }
    CHECK_THROWS_AS(read_ledger(file, line_space()), ValidationError);
  }

  TEST_CASE("assignments reach the simulator and trainer") {
    GeneratorConfig g;
    training::TrainConfig t;
    apply_assignment({{"learning_rate", 0.01}, {"mu", 0.1}, {"sigma", 0.3}}, g, t);
    CHECK(t.learning_rate == 0.01);
    CHECK(g.gbm.mu == 0.1);
    CHECK(g.gbm.sigma == 0.3);
    apply_assignment({{"initial_vol", 0.3}, {"kappa", 0.2}, {"rho", -0.5}}, g, t);
    CHECK(g.heston.theta == doctest::Approx(0.09));
    CHECK(g.heston.v0 == doctest::Approx(0.09));
    CHECK(g.heston.rho == -0.5);
    apply_assignment({{"agents_per_step", 5}, {"tau_star_max", 1000}, {"k_max", 0.15}}, g, t);
    CHECK(g.market.agents_per_step == 5);
    CHECK(g.population.tau_star_max == 1000);
    CHECK(g.population.k_max == 0.15);
    CHECK_THROWS_AS(apply_assignment({{"nope", 1}}, g, t), ValidationError);
  }

  TEST_CASE("hedging objective on a tiny gbm study") {
    HedgingStudy study;
    study.n_paths = 64;
    study.train.epochs = 2;
    study.train.minibatch = 32;
    study.validation = generate_paths(study.generator, 64, 1).paths;
    const auto objective = make_hedging_objective(study);
    const auto r1 = objective({{"learning_rate", 1e-3}, {"mu", 0.0}, {"sigma", 0.2}}, 5);
    const auto r2 = objective({{"learning_rate", 1e-3}, {"mu", 0.0}, {"sigma", 0.2}}, 5);
    CHECK(r1.status == TrialStatus::ok);
    CHECK(std::isfinite(r1.objective));
    CHECK(r1.objective == r2.objective);
  }

  TEST_CASE("names round-trip") {
    CHECK(parse_strategy(strategy_name(Strategy::tpe_like)) == Strategy::tpe_like);
    CHECK(parse_strategy("random") == Strategy::random);
    CHECK_THROWS_AS(parse_strategy("grid"), ValidationError);
    for (const auto s : {TrialStatus::ok, TrialStatus::degenerate, TrialStatus::failed}) {
      CHECK(parse_status(status_name(s)) == s);
    }
  }
}
