#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hedgelab/common.hpp"
#include "hedgelab/generators.hpp"
#include "hedgelab/instruments.hpp"
#include "hedgelab/path_batch.hpp"
#include "hedgelab/policy.hpp"
#include "hedgelab/risk.hpp"

namespace hedgelab::tuning {

using Assignment = std::map<std::string, double>;

struct Grid {
  std::string key;
  std::vector<double> values;
};

// Requires assignment[lower] <= assignment[upper].
struct Constraint {
  std::string lower;
  std::string upper;
};

class SearchSpace {
 public:
  void add(std::string key, std::vector<double> values);
  void constrain(std::string lower, std::string upper);
  // Replaces the grid of an existing key.
  void restrict(const std::string& key, std::vector<double> values);

  [[nodiscard]] const std::vector<Grid>& grids() const { return grids_; }
  [[nodiscard]] const std::vector<Constraint>& constraints() const { return constraints_; }
  [[nodiscard]] const Grid& grid(const std::string& key) const;
  [[nodiscard]] bool contains(const std::string& key) const;
  [[nodiscard]] std::vector<std::string> keys() const;

  [[nodiscard]] bool satisfies(const Assignment& assignment) const;
  // Grids nonempty, constraint keys known, and at least one feasible
  // assignment (checked per constraint pair).
  void validate() const;

  // Learning rate plus the parameter grids of one simulator.
  static SearchSpace for_generator(GeneratorKind kind);

 private:
  std::vector<Grid> grids_;
  std::vector<Constraint> constraints_;
};

enum class Strategy { random, tpe_like };
Strategy parse_strategy(const std::string& name);
std::string strategy_name(Strategy strategy);

enum class TrialStatus { ok, degenerate, failed };
std::string status_name(TrialStatus status);
TrialStatus parse_status(const std::string& name);

struct Trial {
  std::size_t id = 0;
  Assignment assignment;
  double objective = 0.0;  // +inf unless status is ok
  TrialStatus status = TrialStatus::ok;
  std::uint64_t seed = 0;
};

struct TpeSettings {
  std::size_t startup_trials = 10;  // pure random sampling before this many
  double good_fraction = 0.2;       // share of ranked history treated as good
  int max_rejections = 1000;
};

// Uniform over the constrained grid, by rejection.
Assignment sample_random(const SearchSpace& space, Engine& rng, int max_rejections = 100000);

// Draws one assignment. tpe_like ranks `history` by objective, splits it
// into good and bad sets and samples each key with probability proportional
// to the add-one-smoothed good/bad frequency ratio.
Assignment sample_trial(const SearchSpace& space, Strategy strategy,
                        const std::vector<Trial>& history, std::uint64_t seed,
                        const TpeSettings& tpe = {});

struct TrialResult {
  TrialStatus status = TrialStatus::ok;
  double objective = 0.0;
  std::string message;
};

using Objective = std::function<TrialResult(const Assignment&, std::uint64_t seed)>;

struct StudyOptions {
  Strategy strategy = Strategy::tpe_like;
  std::size_t n_trials = 20;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  // Trials sampled per round from the history before the round, then
  // evaluated concurrently. Fixed independently of `workers` so results do
  // not depend on the thread count.
  std::size_t round_size = 4;
  TpeSettings tpe;
  std::optional<std::filesystem::path> ledger;     // append-only CSV, resumed if present
  std::optional<std::filesystem::path> best_file;  // JSON best assignment
};

struct StudyResult {
  std::vector<Trial> trials;  // ascending objective, ties by id
  std::size_t resumed = 0;    // trials loaded from the ledger

  [[nodiscard]] const Trial& best() const;
};

// Runs trials [resumed, n_trials). Objective exceptions mark the trial
// failed and the study continues.
StudyResult run_study(const SearchSpace& space, const StudyOptions& options,
                      const Objective& objective);

// Ledger rows: trial_id,status,objective,seed,<key>...
void write_ledger_header(std::ostream& out, const SearchSpace& space);
void write_ledger_row(std::ostream& out, const SearchSpace& space, const Trial& trial);
std::vector<Trial> read_ledger(const std::filesystem::path& file, const SearchSpace& space);

nlohmann::json best_to_json(const Trial& trial);

// Applies tuned keys to simulator and training settings; unknown keys raise
// a ValidationError.
void apply_assignment(const Assignment& assignment, GeneratorConfig& generator,
                      training::TrainConfig& train);

// Everything needed to score one assignment: generate training paths with
// the assigned simulator, train, and report the best validation price.
struct HedgingStudy {
  GeneratorConfig generator;
  OptionSpec spec;
  risk::RiskMeasure measure;
  training::TrainConfig train;
  std::size_t n_paths = 1000;
  PathBatch validation;
};

Objective make_hedging_objective(HedgingStudy study);

}  // namespace hedgelab::tuning
