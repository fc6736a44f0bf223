#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hedgelab/generators.hpp"
#include "hedgelab/hedge.hpp"
#include "hedgelab/instruments.hpp"
#include "hedgelab/market_data.hpp"
#include "hedgelab/risk.hpp"
#include "hedgelab/tuner.hpp"

namespace hedgelab::experiment {

struct DatasetRef {
  std::string name;
  std::filesystem::path file;  // resolved against the config file's directory
  data::SeriesLabel label = data::SeriesLabel::other;
  std::size_t stride = 1;
};

struct TrainingBlock {
  std::size_t paths = 10000;
  int epochs = 100;
  double learning_rate = 1e-3;
  std::size_t minibatch = 256;
};

// Epoch selection set: windows of a named dataset, or simulated paths.
struct ValidationBlock {
  std::optional<std::string> dataset;
  GeneratorConfig generator;  // gbm(0, 0.2) unless configured
  std::size_t paths = 2000;
};

struct TuningBlock {
  std::size_t trials = 20;
  tuning::Strategy sampler = tuning::Strategy::tpe_like;
  std::size_t paths = 1000;
  int epochs = 10;
  std::size_t round_size = 4;
  std::map<std::string, std::vector<double>> grids;  // overrides of the default grids
};

struct StatsBlock {
  int max_lag = 20;
  double bin_width = 0.5;
};

// Table columns in output order.
inline const std::vector<std::string> kTableColumns = {
    "default_brownian", "default_heston", "tuned_market", "tuned_brownian", "tuned_heston"};

struct TableBlock {
  std::vector<OptionKind> derivatives = {OptionKind::european_call, OptionKind::lookback_call};
  std::vector<risk::RiskMeasure> measures = {
      risk::RiskMeasure::erm(1.0), risk::RiskMeasure::erm(10.0), risk::RiskMeasure::cvar(0.90),
      risk::RiskMeasure::cvar(0.95), risk::RiskMeasure::cvar(0.99)};
  std::vector<std::string> datasets;  // empty: every evaluation dataset
  std::vector<std::string> columns = kTableColumns;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  std::size_t parallel = 1;
  GeneratorConfig generator;
  OptionSpec option;
  risk::RiskMeasure measure;
  double cost_rate = 0.0;
  TrainingBlock training;
  hedge::FeatureConfig features;
  ValidationBlock validation;
  std::vector<DatasetRef> datasets;
  TuningBlock tuning;
  StatsBlock stats;
  TableBlock table;

  void validate() const;
};

// "erm:1" style text for a measure, the inverse of risk::parse_measure.
std::string measure_text(const risk::RiskMeasure& measure);

ExperimentConfig config_from_json(const nlohmann::json& j,
                                  const std::filesystem::path& base_dir = ".");
nlohmann::json config_to_json(const ExperimentConfig& config);
std::string config_hash(const ExperimentConfig& config);

// Overrides of the form HEDGELAB__SECTION__KEY=value address
// j["section"]["key"]; section and key names are lowercased. Values are
// parsed as JSON when possible and kept as strings otherwise.
void apply_overrides(nlohmann::json& j,
                     const std::vector<std::pair<std::string, std::string>>& variables);
std::vector<std::pair<std::string, std::string>> environment_overrides();

// Reads the config file (or starts from defaults), applies environment
// overrides, then merges `patch` (command-line flags) and parses the result.
ExperimentConfig load_config(const std::optional<std::filesystem::path>& file,
                             const nlohmann::json& patch = nlohmann::json::object());

struct ResultRow {
  std::string derivative;
  std::string dataset;
  std::string measure;
  std::string generator;
  double price = 0.0;
};

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);

struct TableRow {
  std::string derivative;
  std::string dataset;
  std::string utility;
  std::map<std::string, double> prices;  // column -> price; absent when not run
};

// derivative,dataset,utility,default_brownian,default_heston,tuned_market,
// tuned_brownian,tuned_heston
void write_table_csv(std::ostream& out, const std::vector<TableRow>& rows);

// Named evaluation sets: every configured dataset other than the validation
// one, or a simulated hold-out from the validation generator when none is
// configured.
std::vector<std::pair<std::string, PathBatch>> evaluation_sets(const ExperimentConfig& config);
PathBatch validation_set(const ExperimentConfig& config);

// Subcommands. Each writes into config.output_dir, including a manifest.json
// with the resolved config and its hash. Failures name the stage that
// raised them.
void run_gen_paths(const ExperimentConfig& config);
void run_train(const ExperimentConfig& config);
std::vector<ResultRow> run_experiment(const ExperimentConfig& config);
tuning::StudyResult run_tune(const ExperimentConfig& config);
void run_stats(const ExperimentConfig& config);
std::vector<TableRow> run_reproduce_table(const ExperimentConfig& config);

}  // namespace hedgelab::experiment
