#include "hedgelab/tuner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "hedgelab/hedge.hpp"

namespace hedgelab::tuning {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// k * step for k in [0, count), computed from integers so grid values are the
// nearest doubles to their decimal spelling.
std::vector<double> stepped(int first, int last, int step, double scale) {
  std::vector<double> out;
  for (int k = first; k <= last; k += step) out.push_back(k / scale);
  return out;
}

std::vector<double> powers_of_ten(int lo, int hi) {
  std::vector<double> out;
  for (int e = lo; e <= hi; ++e) out.push_back(std::pow(10.0, e));
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool trial_less(const Trial& a, const Trial& b) {
  if (a.objective != b.objective) return a.objective < b.objective;
  return a.id < b.id;
}

}  // namespace

void SearchSpace::add(std::string key, std::vector<double> values) {
  require(!contains(key), "duplicate search key '" + key + "'");
  grids_.push_back({std::move(key), std::move(values)});
}

void SearchSpace::constrain(std::string lower, std::string upper) {
  constraints_.push_back({std::move(lower), std::move(upper)});
}

void SearchSpace::restrict(const std::string& key, std::vector<double> values) {
  for (auto& g : grids_) {
    if (g.key == key) {
      g.values = std::move(values);
      return;
    }
  }
  throw ValidationError("search space has no key '" + key + "'");
}

const Grid& SearchSpace::grid(const std::string& key) const {
  for (const auto& g : grids_) {
    if (g.key == key) return g;
  }
  throw ValidationError("search space has no key '" + key + "'");
}

bool SearchSpace::contains(const std::string& key) const {
  return std::any_of(grids_.begin(), grids_.end(), [&](const Grid& g) { return g.key == key; });
}

std::vector<std::string> SearchSpace::keys() const {
  std::vector<std::string> out;
  for (const auto& g : grids_) out.push_back(g.key);
  return out;
}

bool SearchSpace::satisfies(const Assignment& assignment) const {
  for (const auto& c : constraints_) {
    const auto lo = assignment.find(c.lower);
    const auto hi = assignment.find(c.upper);
    if (lo == assignment.end() || hi == assignment.end()) return false;
    if (lo->second > hi->second) return false;
  }
  return true;
}

void SearchSpace::validate() const {
  require(!grids_.empty(), "search space is empty");
  for (const auto& g : grids_) {
    require(!g.values.empty(), "search grid '" + g.key + "' is empty");
  }
  for (const auto& c : constraints_) {
    const auto& lo = grid(c.lower).values;
    const auto& hi = grid(c.upper).values;
    require(*std::min_element(lo.begin(), lo.end()) <= *std::max_element(hi.begin(), hi.end()),
            "constraint " + c.lower + " <= " + c.upper + " cannot be satisfied");
  }
}

SearchSpace SearchSpace::for_generator(GeneratorKind kind) {
  SearchSpace s;
  s.add("learning_rate", powers_of_ten(-5, -1));
  switch (kind) {
    case GeneratorKind::gbm:
      s.add("mu", stepped(-25, 25, 5, 100.0));
      s.add("sigma", stepped(5, 50, 5, 100.0));
      break;
    case GeneratorKind::heston:
      s.add("kappa", stepped(0, 50, 5, 100.0));
      s.add("initial_vol", stepped(5, 50, 5, 100.0));
      s.add("rho", stepped(-100, 100, 5, 100.0));
      break;
    case GeneratorKind::market:
      s.add("agents_per_step", {1, 5, 10});
      s.add("w_fundamental", {0, 1, 3, 5, 10, 30, 50});
      s.add("w_chart", {0, 1, 3, 5, 10, 30, 50});
      s.add("sigma_star", powers_of_ten(-4, -2));
      s.add("sigma_noise", powers_of_ten(-5, -2));
      s.add("tau_star_min", powers_of_ten(0, 5));
      s.add("tau_star_max", powers_of_ten(0, 5));
      s.add("tau_min", powers_of_ten(0, 3));
      s.add("tau_max", powers_of_ten(0, 3));
      s.add("k_min", stepped(0, 20, 5, 100.0));
      s.add("k_max", stepped(0, 20, 5, 100.0));
      s.constrain("tau_star_min", "tau_star_max");
      s.constrain("tau_min", "tau_max");
      s.constrain("k_min", "k_max");
      break;
  }
  return s;
}

Strategy parse_strategy(const std::string& name) {
  if (name == "random") return Strategy::random;
  if (name == "tpe_like") return Strategy::tpe_like;
  throw ValidationError("unknown sampler '" + name + "' (expected random or tpe_like)");
}

std::string strategy_name(Strategy strategy) {
  return strategy == Strategy::random ? "random" : "tpe_like";
}

std::string status_name(TrialStatus status) {
  switch (status) {
    case TrialStatus::ok: return "ok";
    case TrialStatus::degenerate: return "degenerate";
    case TrialStatus::failed: return "failed";
  }
  return "failed";
}

TrialStatus parse_status(const std::string& name) {
  if (name == "ok") return TrialStatus::ok;
  if (name == "degenerate") return TrialStatus::degenerate;
  if (name == "failed") return TrialStatus::failed;
  throw ValidationError("unknown trial status '" + name + "'");
}

Assignment sample_random(const SearchSpace& space, Engine& rng, int max_rejections) {
  for (int attempt = 0; attempt < max_rejections; ++attempt) {
    Assignment a;
    for (const auto& g : space.grids()) {
      std::uniform_int_distribution<std::size_t> pick(0, g.values.size() - 1);
      a[g.key] = g.values[pick(rng)];
    }
    if (space.satisfies(a)) return a;
  }
  throw ValidationError("no constraint-feasible assignment found by rejection sampling");
}

Assignment sample_trial(const SearchSpace& space, Strategy strategy,
                        const std::vector<Trial>& history, std::uint64_t seed,
                        const TpeSettings& tpe) {
  space.validate();
  Engine rng = make_engine(seed, 0x7470);
  if (strategy == Strategy::random || history.size() < tpe.startup_trials) {
    return sample_random(space, rng);
  }

  std::vector<const Trial*> ranked;
  for (const auto& t : history) ranked.push_back(&t);
  std::sort(ranked.begin(), ranked.end(),
            [](const Trial* a, const Trial* b) { return trial_less(*a, *b); });
  const auto n_good = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(tpe.good_fraction * static_cast<double>(ranked.size()))));
  const std::size_t n_bad = ranked.size() - std::min(n_good, ranked.size());

  // Per key, per grid value: sampling weight from smoothed frequencies.
  std::vector<std::vector<double>> weights;
  for (const auto& g : space.grids()) {
    const double k = static_cast<double>(g.values.size());
    std::vector<double> good(g.values.size(), 1.0), bad(g.values.size(), 1.0);
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      const auto it = ranked[r]->assignment.find(g.key);
      if (it == ranked[r]->assignment.end()) continue;
      const auto pos = std::find(g.values.begin(), g.values.end(), it->second);
      if (pos == g.values.end()) continue;
      (r < n_good ? good : bad)[static_cast<std::size_t>(pos - g.values.begin())] += 1.0;
    }
    std::vector<double> w(g.values.size());
    for (std::size_t v = 0; v < w.size(); ++v) {
      w[v] = (good[v] / (static_cast<double>(n_good) + k)) /
             (bad[v] / (static_cast<double>(n_bad) + k));
    }
    weights.push_back(std::move(w));
  }

  for (int attempt = 0; attempt < tpe.max_rejections; ++attempt) {
    Assignment a;
    for (std::size_t i = 0; i < space.grids().size(); ++i) {
      const auto& g = space.grids()[i];
      const auto& w = weights[i];
      const double total = std::accumulate(w.begin(), w.end(), 0.0);
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      std::size_t v = 0;
      for (; v + 1 < w.size(); ++v) {
        if (u < w[v]) break;
        u -= w[v];
      }
      a[g.key] = g.values[v];
    }
    if (space.satisfies(a)) return a;
  }
  return sample_random(space, rng);
}

const Trial& StudyResult::best() const {
  require(!trials.empty(), "study has no trials");
  return trials.front();
}

void write_ledger_header(std::ostream& out, const SearchSpace& space) {
  out << "trial_id,status,objective,seed";
  for (const auto& key : space.keys()) out << ',' << key;
  out << '\n';
}

void write_ledger_row(std::ostream& out, const SearchSpace& space, const Trial& trial) {
  out << trial.id << ',' << status_name(trial.status) << ',' << format_double(trial.objective)
      << ',' << trial.seed;
  for (const auto& key : space.keys()) out << ',' << format_double(trial.assignment.at(key));
  out << '\n';
}

std::vector<Trial> read_ledger(const std::filesystem::path& file, const SearchSpace& space) {
  std::ifstream in(file);
  if (!in) throw ValidationError("cannot open study ledger " + file.string());
  std::ostringstream expected;
  write_ledger_header(expected, space);
  std::string line;
  if (!std::getline(in, line)) return {};
  if (line + "\n" != expected.str()) {
    throw ValidationError("study ledger " + file.string() +
                          " was written for a different search space");
  }
  const auto keys = space.keys();
  std::vector<Trial> trials;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    const auto where = file.string() + ": row " + std::to_string(row);
    require(cells.size() == 4 + keys.size(), where + ": wrong number of columns");
    Trial t;
    try {
      t.id = std::stoull(cells[0]);
      t.status = parse_status(cells[1]);
      t.objective = std::stod(cells[2]);
      t.seed = std::stoull(cells[3]);
      for (std::size_t k = 0; k < keys.size(); ++k) t.assignment[keys[k]] = std::stod(cells[4 + k]);
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception&) {
      throw ValidationError(where + ": unparsable ledger row");
    }
    require(t.id == trials.size(), where + ": trial ids must be consecutive from 0");
    trials.push_back(std::move(t));
  }
  return trials;
}

nlohmann::json best_to_json(const Trial& trial) {
  nlohmann::json assignment = nlohmann::json::object();
  for (const auto& [key, value] : trial.assignment) assignment[key] = value;
  return {{"trial_id", trial.id},
          {"status", status_name(trial.status)},
          {"objective", std::isfinite(trial.objective) ? nlohmann::json(trial.objective)
                                                       : nlohmann::json(nullptr)},
          {"seed", trial.seed},
          {"assignment", assignment}};
}

StudyResult run_study(const SearchSpace& space, const StudyOptions& options,
                      const Objective& objective) {
  space.validate();
  require(options.n_trials >= 1, "a study needs at least one trial");
  require(options.round_size >= 1, "round size must be >= 1");

  StudyResult result;
  std::vector<Trial> history;
  bool fresh_ledger = true;
  if (options.ledger && std::filesystem::exists(*options.ledger) &&
      std::filesystem::file_size(*options.ledger) > 0) {
    history = read_ledger(*options.ledger, space);
    fresh_ledger = false;
  }
  result.resumed = history.size();

  std::ofstream ledger;
  if (options.ledger) {
    if (options.ledger->has_parent_path()) {
      std::filesystem::create_directories(options.ledger->parent_path());
    }
    ledger.open(*options.ledger, std::ios::app);
    if (!ledger) throw RuntimeFailure("cannot write study ledger " + options.ledger->string());
    if (fresh_ledger) write_ledger_header(ledger, space);
    ledger.flush();
  }

  while (history.size() < options.n_trials) {
    const std::size_t round = std::min(options.round_size, options.n_trials - history.size());
    std::vector<Trial> batch(round);
    for (std::size_t j = 0; j < round; ++j) {
      Trial& t = batch[j];
      t.id = history.size() + j;
      t.seed = derive_seed(options.seed, t.id);
      t.assignment = sample_trial(space, options.strategy, history, t.seed, options.tpe);
    }
    parallel_for(round, options.workers, [&](std::size_t j) {
      Trial& t = batch[j];
      try {
        const TrialResult r = objective(t.assignment, t.seed);
        t.status = r.status;
        t.objective = r.objective;
      } catch (const std::exception&) {
        t.status = TrialStatus::failed;
      }
      if (t.status != TrialStatus::ok || !std::isfinite(t.objective)) {
        if (t.status == TrialStatus::ok) t.status = TrialStatus::failed;
        t.objective = kInf;
      }
    });
    for (auto& t : batch) {
      if (ledger.is_open()) write_ledger_row(ledger, space, t);
      history.push_back(std::move(t));
    }
    if (ledger.is_open()) ledger.flush();
  }

  result.trials = std::move(history);
  std::stable_sort(result.trials.begin(), result.trials.end(), trial_less);
  if (options.best_file) {
    std::ofstream out(*options.best_file);
    if (!out) throw RuntimeFailure("cannot write " + options.best_file->string());
    out << best_to_json(result.best()).dump(2) << '\n';
  }
  return result;
}

void apply_assignment(const Assignment& assignment, GeneratorConfig& generator,
                      training::TrainConfig& train) {
  auto& g = generator;
  auto& pop = generator.population;
  for (const auto& [key, value] : assignment) {
    const int as_int = static_cast<int>(std::lround(value));
    if (key == "learning_rate") train.learning_rate = value;
    else if (key == "mu") g.gbm.mu = value;
    else if (key == "sigma") g.gbm.sigma = value;
    else if (key == "kappa") g.heston.kappa = value;
    else if (key == "initial_vol") g.heston.theta = g.heston.v0 = value * value;
    else if (key == "rho") g.heston.rho = value;
    else if (key == "agents_per_step") g.market.agents_per_step = as_int;
    else if (key == "w_fundamental") pop.w_fundamental = value;
    else if (key == "w_chart") pop.w_chart = value;
    else if (key == "sigma_star") g.market.sigma_star = value;
    else if (key == "sigma_noise") g.market.sigma_noise = value;
    else if (key == "tau_star_min") pop.tau_star_min = as_int;
    else if (key == "tau_star_max") pop.tau_star_max = as_int;
    else if (key == "tau_min") pop.tau_min = as_int;
    else if (key == "tau_max") pop.tau_max = as_int;
    else if (key == "k_min") pop.k_min = value;
    else if (key == "k_max") pop.k_max = value;
    else throw ValidationError("unknown tuning key '" + key + "'");
  }
}

Objective make_hedging_objective(HedgingStudy study) {
  study.spec.validate();
  study.measure.validate();
  require(!study.validation.empty(), "tuning needs a nonempty validation set");
  return [study = std::move(study)](const Assignment& assignment,
                                    std::uint64_t seed) -> TrialResult {
    GeneratorConfig generator = study.generator;
    training::TrainConfig train = study.train;
    apply_assignment(assignment, generator, train);
    generator.set_days(study.spec.maturity_days);

    GeneratedPaths paths;
    try {
      paths = generate_paths(generator, study.n_paths, derive_seed(seed, 1));
    } catch (const RuntimeFailure& e) {
      return {TrialStatus::degenerate, kInf, e.what()};
    }
    train.seed = derive_seed(seed, 2);
    nn::MlpPolicy policy(hedge::feature_width(study.spec, train.features), derive_seed(seed, 3));
    const auto report =
        training::train(policy, paths.paths, study.validation, study.spec, study.measure, train);
    if (report.empty() || !std::isfinite(report.best_price)) {
      std::string message = "training produced no finite validation price";
      if (!report.diagnostics.empty()) message = report.diagnostics.back();
      return {TrialStatus::failed, kInf, message};
    }
    return {TrialStatus::ok, report.best_price, {}};
  };
}

}  // namespace hedgelab::tuning
