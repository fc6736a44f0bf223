#include "hedgelab/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <tuple>

#include "hedgelab/common.hpp"
#include "hedgelab/json_util.hpp"
#include "hedgelab/policy.hpp"

extern char** environ;

namespace hedgelab::experiment {

using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string label_name(data::SeriesLabel label) {
  switch (label) {
    case data::SeriesLabel::development: return "development";
    case data::SeriesLabel::test: return "test";
    case data::SeriesLabel::other: return "other";
  }
  return "other";
}

data::SeriesLabel parse_label(const std::string& name) {
  if (name == "development") return data::SeriesLabel::development;
  if (name == "test") return data::SeriesLabel::test;
  if (name == "other") return data::SeriesLabel::other;
  throw ValidationError("unknown dataset label '" + name + "'");
}

GeneratorConfig default_validation_generator() {
  GeneratorConfig g;
  g.kind = GeneratorKind::gbm;
  return g;
}

// File-name friendly form of a measure, e.g. cvar_0.95.
std::string measure_slug(const risk::RiskMeasure& m) {
  auto text = measure_text(m);
  std::replace(text.begin(), text.end(), ':', '_');
  return text;
}

std::string generator_for_column(const std::string& column) {
  if (column.ends_with("brownian")) return "gbm";
  if (column.ends_with("heston")) return "heston";
  return "market";
}

// Tracks the running stage. While a command runs, <out>/INCOMPLETE marks the
// directory as partial; a failure records the stage there, success removes it.
class Run {
 public:
  Run(const ExperimentConfig& config, std::string command)
      : config_(config), command_(std::move(command)) {
    std::filesystem::create_directories(config.output_dir);
    mark("running");
  }

  template <class F>
  auto stage(const std::string& name, F&& body) -> decltype(body()) {
    try {
      return body();
    } catch (const ValidationError& e) {
      fail(name, e.what());
      throw ValidationError("stage '" + name + "': " + e.what());
    } catch (const RuntimeFailure& e) {
      fail(name, e.what());
      throw RuntimeFailure("stage '" + name + "': " + e.what());
    } catch (const std::exception& e) {
      fail(name, e.what());
      throw RuntimeFailure("stage '" + name + "': " + e.what());
    }
  }

  std::filesystem::path file(const std::string& name) {
    outputs_.push_back(name);
    return config_.output_dir / name;
  }

  void finish(json extra = json::object()) {
    json manifest = {{"command", command_},
                     {"version", kVersion},
                     {"seed", config_.seed},
                     {"config_hash", config_hash(config_)},
                     {"config", config_to_json(config_)},
                     {"outputs", outputs_}};
    for (auto& [key, value] : extra.items()) manifest[key] = value;
    std::ofstream out(config_.output_dir / "manifest.json");
    if (!out) throw RuntimeFailure("cannot write manifest in " + config_.output_dir.string());
    out << manifest.dump(2) << '\n';
    out.close();
    std::filesystem::remove(config_.output_dir / "INCOMPLETE");
  }

 private:
  void mark(const std::string& text) {
    std::ofstream out(config_.output_dir / "INCOMPLETE");
    out << command_ << ": " << text << '\n';
  }
  void fail(const std::string& stage, const std::string& what) {
    mark("failed in stage '" + stage + "': " + what);
  }

  const ExperimentConfig& config_;
  std::string command_;
  std::vector<std::string> outputs_;
};

std::ofstream open_output(const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw RuntimeFailure("cannot write " + file.string());
  return out;
}

PathBatch dataset_windows(const ExperimentConfig& config, const DatasetRef& ref) {
  const auto series = data::load_series(ref.file);
  return data::extract_windows(series, static_cast<std::size_t>(config.option.maturity_days) + 1,
                               ref.stride);
}

const DatasetRef& find_dataset(const ExperimentConfig& config, const std::string& name) {
  for (const auto& d : config.datasets) {
    if (d.name == name) return d;
  }
  throw ValidationError("unknown dataset '" + name + "'");
}

training::TrainConfig train_config(const ExperimentConfig& config, std::uint64_t seed) {
  training::TrainConfig t;
  t.learning_rate = config.training.learning_rate;
  t.epochs = config.training.epochs;
  t.minibatch = config.training.minibatch;
  t.seed = seed;
  t.cost_rate = config.cost_rate;
  t.features = config.features;
  t.workers = config.parallel;
  return t;
}

struct Trained {
  nn::MlpPolicy policy;
  training::TrainReport report;
  std::size_t rejected = 0;
};

// Generates training paths from `generator` and trains a fresh policy.
// `seed` drives path generation, initialization and shuffling.
Trained train_policy(const ExperimentConfig& config, GeneratorConfig generator,
                     const OptionSpec& spec, const risk::RiskMeasure& measure,
                     training::TrainConfig train, std::size_t n_paths, std::uint64_t seed,
                     const PathBatch& validation) {
  generator.set_days(spec.maturity_days);
  const auto paths = generate_paths(generator, n_paths, derive_seed(seed, 1), config.parallel);
  train.seed = derive_seed(seed, 5);
  nn::MlpPolicy policy(hedge::feature_width(spec, train.features), derive_seed(seed, 4));
  auto report = training::train(policy, paths.paths, validation, spec, measure, train);
  return {std::move(policy), std::move(report), paths.rejected};
}

tuning::SearchSpace search_space(const ExperimentConfig& config, GeneratorKind kind) {
  auto space = tuning::SearchSpace::for_generator(kind);
  for (const auto& [key, values] : config.tuning.grids) {
    if (space.contains(key)) space.restrict(key, values);
  }
  space.validate();
  return space;
}

tuning::StudyResult tune(const ExperimentConfig& config, GeneratorConfig generator,
                         const OptionSpec& spec, const risk::RiskMeasure& measure,
                         const PathBatch& validation, std::uint64_t seed,
                         const std::filesystem::path& ledger,
                         const std::optional<std::filesystem::path>& best_file) {
  tuning::HedgingStudy study;
  study.generator = std::move(generator);
  study.spec = spec;
  study.measure = measure;
  study.train = train_config(config, 0);
  study.train.epochs = config.tuning.epochs;
  study.train.workers = 1;
  study.n_paths = config.tuning.paths;
  study.validation = validation;

  tuning::StudyOptions options;
  options.strategy = config.tuning.sampler;
  options.n_trials = config.tuning.trials;
  options.seed = seed;
  options.workers = config.parallel;
  options.round_size = config.tuning.round_size;
  options.ledger = ledger;
  options.best_file = best_file;
  return tuning::run_study(search_space(config, study.generator.kind), options,
                           tuning::make_hedging_objective(std::move(study)));
}

void write_series_stats(Run& run, const std::string& name, const data::StylizedStats& stats) {
  auto k = open_output(run.file("kurtosis_" + name + ".csv"));
  data::write_kurtosis_csv(k, stats);
  auto h = open_output(run.file("histogram_" + name + ".csv"));
  data::write_histogram_csv(h, stats);
}

}  // namespace

std::string measure_text(const risk::RiskMeasure& measure) {
  if (measure.kind == risk::RiskKind::erm) return "erm:" + format_double(measure.lambda);
  return "cvar:" + format_double(measure.alpha);
}

void ExperimentConfig::validate() const {
  require(parallel >= 1, "parallel must be >= 1");
  require(!output_dir.empty(), "output_dir must be set");
  generator.validate();
  option.validate();
  measure.validate();
  require(cost_rate >= 0.0 && std::isfinite(cost_rate), "cost_rate must be >= 0");
  require(training.paths >= 1, "training.paths must be >= 1");
  require(training.epochs >= 0, "training.epochs must be >= 0");
  require(training.learning_rate > 0.0, "training.learning_rate must be positive");
  require(training.minibatch >= 1, "training.minibatch must be >= 1");
  require(validation.paths >= 1, "validation.paths must be >= 1");
  validation.generator.validate();
  require(features.vol_floor > 0.0, "features.vol_floor must be positive");
  require(features.vol_prior > 0.0, "features.vol_prior must be positive");
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    require(!datasets[i].name.empty(), "datasets[" + std::to_string(i) + "] needs a name");
    require(datasets[i].stride >= 1, "dataset '" + datasets[i].name + "': stride must be >= 1");
    for (std::size_t j = 0; j < i; ++j) {
      require(datasets[j].name != datasets[i].name,
              "duplicate dataset name '" + datasets[i].name + "'");
    }
  }
  if (validation.dataset) find_dataset(*this, *validation.dataset);
  require(tuning.trials >= 1, "tuning.trials must be >= 1");
  require(tuning.paths >= 1, "tuning.paths must be >= 1");
  require(tuning.epochs >= 1, "tuning.epochs must be >= 1");
  require(tuning.round_size >= 1, "tuning.round_size must be >= 1");
  for (const auto& [key, values] : tuning.grids) {
    require(!values.empty(), "tuning.grids." + key + " is empty");
  }
  require(stats.max_lag >= 1, "stats.max_lag must be >= 1");
  require(stats.bin_width > 0.0, "stats.bin_width must be positive");
  for (const auto& m : table.measures) m.validate();
  for (const auto& c : table.columns) {
    require(std::find(kTableColumns.begin(), kTableColumns.end(), c) != kTableColumns.end(),
            "unknown table column '" + c + "'");
  }
}

ExperimentConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  c.validation.generator = default_validation_generator();
  ObjectReader top(j, "config");
  top.read("seed", c.seed);
  std::string out = c.output_dir.string();
  top.read("output_dir", out);
  c.output_dir = out;
  top.read("parallel", c.parallel);
  top.read("cost_rate", c.cost_rate);

  json generator = json::object(), option = json::object(), training = json::object(),
       features = json::object(), validation = json::object(), datasets = json::array(),
       tuning = json::object(), stats = json::object(), table = json::object();
  std::string measure = measure_text(c.measure);
  top.read("generator", generator);
  top.read("option", option);
  top.read("measure", measure);
  top.read("training", training);
  top.read("features", features);
  top.read("validation", validation);
  top.read("datasets", datasets);
  top.read("tuning", tuning);
  top.read("stats", stats);
  top.read("table", table);
  top.finish();

  try {
    c.generator = generator_from_json(generator);
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("config.") + e.what());
  }
  c.measure = risk::parse_measure(measure);

  ObjectReader o(option, "config.option");
  std::string kind = "european";
  o.read("kind", kind);
  c.option.kind = parse_option_kind(kind);
  o.read("strike", c.option.strike);
  o.read("maturity_days", c.option.maturity_days);
  o.finish();

  ObjectReader t(training, "config.training");
  t.read("paths", c.training.paths);
  t.read("epochs", c.training.epochs);
  t.read("learning_rate", c.training.learning_rate);
  t.read("minibatch", c.training.minibatch);
  t.finish();

  ObjectReader f(features, "config.features");
  f.read("vol_prior", c.features.vol_prior);
  f.read("vol_floor", c.features.vol_floor);
  f.read("min_returns", c.features.min_returns);
  f.read("annualization", c.features.annualization);
  f.read("include_prev_position", c.features.include_prev_position);
  f.finish();

  ObjectReader v(validation, "config.validation");
  std::string dataset;
  v.read("dataset", dataset);
  if (!dataset.empty()) c.validation.dataset = dataset;
  json vgen = generator_to_json(c.validation.generator);
  v.read("generator", vgen);
  c.validation.generator = generator_from_json(vgen);
  v.read("paths", c.validation.paths);
  v.finish();

  require(datasets.is_array(), "config.datasets must be an array");
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    ObjectReader d(datasets[i], "config.datasets[" + std::to_string(i) + "]");
    DatasetRef ref;
    std::string file, label = "other";
    d.read("name", ref.name);
    d.read("file", file);
    d.read("label", label);
    d.read("stride", ref.stride);
    d.finish();
    require(!file.empty(), d.where() + ": file is required");
    ref.file = std::filesystem::path(file).is_absolute() ? std::filesystem::path(file)
                                                         : base_dir / file;
    ref.label = parse_label(label);
    c.datasets.push_back(std::move(ref));
  }

  ObjectReader tu(tuning, "config.tuning");
  std::string sampler = tuning::strategy_name(c.tuning.sampler);
  tu.read("trials", c.tuning.trials);
  tu.read("sampler", sampler);
  tu.read("paths", c.tuning.paths);
  tu.read("epochs", c.tuning.epochs);
  tu.read("round_size", c.tuning.round_size);
  tu.read("grids", c.tuning.grids);
  tu.finish();
  c.tuning.sampler = tuning::parse_strategy(sampler);

  ObjectReader s(stats, "config.stats");
  s.read("max_lag", c.stats.max_lag);
  s.read("bin_width", c.stats.bin_width);
  s.finish();

  ObjectReader tb(table, "config.table");
  std::vector<std::string> derivatives, measures;
  for (auto k : c.table.derivatives) derivatives.push_back(OptionSpec{k}.name());
  for (const auto& m : c.table.measures) measures.push_back(measure_text(m));
  tb.read("derivatives", derivatives);
  tb.read("measures", measures);
  tb.read("datasets", c.table.datasets);
  tb.read("columns", c.table.columns);
  tb.finish();
  c.table.derivatives.clear();
  for (const auto& d : derivatives) c.table.derivatives.push_back(parse_option_kind(d));
  c.table.measures.clear();
  for (const auto& m : measures) c.table.measures.push_back(risk::parse_measure(m));

  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json datasets = json::array();
  for (const auto& d : c.datasets) {
    datasets.push_back({{"name", d.name},
                        {"file", d.file.generic_string()},
                        {"label", label_name(d.label)},
                        {"stride", d.stride}});
  }
  json validation = {{"generator", generator_to_json(c.validation.generator)},
                     {"paths", c.validation.paths}};
  if (c.validation.dataset) validation["dataset"] = *c.validation.dataset;
  std::vector<std::string> derivatives, measures;
  for (auto k : c.table.derivatives) derivatives.push_back(OptionSpec{k}.name());
  for (const auto& m : c.table.measures) measures.push_back(measure_text(m));
  return {
      {"seed", c.seed},
      {"output_dir", c.output_dir.generic_string()},
      {"parallel", c.parallel},
      {"cost_rate", c.cost_rate},
      {"generator", generator_to_json(c.generator)},
      {"option",
       {{"kind", c.option.name()},
        {"strike", c.option.strike},
        {"maturity_days", c.option.maturity_days}}},
      {"measure", measure_text(c.measure)},
      {"training",
       {{"paths", c.training.paths},
        {"epochs", c.training.epochs},
        {"learning_rate", c.training.learning_rate},
        {"minibatch", c.training.minibatch}}},
      {"features",
       {{"vol_prior", c.features.vol_prior},
        {"vol_floor", c.features.vol_floor},
        {"min_returns", c.features.min_returns},
        {"annualization", c.features.annualization},
        {"include_prev_position", c.features.include_prev_position}}},
      {"validation", validation},
      {"datasets", datasets},
      {"tuning",
       {{"trials", c.tuning.trials},
        {"sampler", tuning::strategy_name(c.tuning.sampler)},
        {"paths", c.tuning.paths},
        {"epochs", c.tuning.epochs},
        {"round_size", c.tuning.round_size},
        {"grids", c.tuning.grids}}},
      {"stats", {{"max_lag", c.stats.max_lag}, {"bin_width", c.stats.bin_width}}},
      {"table",
       {{"derivatives", derivatives},
        {"measures", measures},
        {"datasets", c.table.datasets},
        {"columns", c.table.columns}}},
  };
}

std::string config_hash(const ExperimentConfig& config) {
  return hex64(fnv1a64(config_to_json(config).dump()));
}

void apply_overrides(json& j, const std::vector<std::pair<std::string, std::string>>& variables) {
  static const std::string prefix = "HEDGELAB__";
  for (const auto& [name, text] : variables) {
    if (!name.starts_with(prefix)) continue;
    std::vector<std::string> keys;
    std::string rest = name.substr(prefix.size());
    std::size_t pos = 0;
    while (true) {
      const auto next = rest.find("__", pos);
      keys.push_back(rest.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
      if (next == std::string::npos) break;
      pos = next + 2;
    }
    json* node = &j;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      auto key = keys[i];
      require(!key.empty(), "malformed override variable " + name);
      std::transform(key.begin(), key.end(), key.begin(),
                     [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
      if (!node->is_object()) *node = json::object();
      node = &(*node)[key];
    }
    json value = json::parse(text, nullptr, false);
    *node = value.is_discarded() ? json(text) : value;
  }
}

std::vector<std::pair<std::string, std::string>> environment_overrides() {
  std::vector<std::pair<std::string, std::string>> out;
  for (char** e = environ; e && *e; ++e) {
    const std::string entry = *e;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    if (entry.starts_with("HEDGELAB__")) out.emplace_back(entry.substr(0, eq), entry.substr(eq + 1));
  }
  std::sort(out.begin(), out.end());
  return out;
}

ExperimentConfig load_config(const std::optional<std::filesystem::path>& file, const json& patch) {
  json j = json::object();
  std::filesystem::path base_dir = ".";
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ValidationError("cannot open config " + file->string());
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ValidationError("config " + file->string() + ": " + e.what());
    }
    base_dir = file->parent_path().empty() ? std::filesystem::path(".") : file->parent_path();
  }
  apply_overrides(j, environment_overrides());
  j.merge_patch(patch);
  return config_from_json(j, base_dir);
}

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << "derivative,dataset,measure,generator,price\n";
  for (const auto& r : rows) {
    out << r.derivative << ',' << r.dataset << ',' << r.measure << ',' << r.generator << ','
        << format_double(r.price) << '\n';
  }
}

void write_table_csv(std::ostream& out, const std::vector<TableRow>& rows) {
  out << "derivative,dataset,utility";
  for (const auto& c : kTableColumns) out << ',' << c;
  out << '\n';
  for (const auto& r : rows) {
    out << r.derivative << ',' << r.dataset << ',' << r.utility;
    for (const auto& c : kTableColumns) {
      out << ',';
      const auto it = r.prices.find(c);
      if (it != r.prices.end()) out << format_double(it->second);
    }
    out << '\n';
  }
}

PathBatch validation_set(const ExperimentConfig& config) {
  if (config.validation.dataset) {
    auto windows = dataset_windows(config, find_dataset(config, *config.validation.dataset));
    require(!windows.empty(), "validation dataset '" + *config.validation.dataset +
                                  "' is shorter than one option window");
    return windows;
  }
  auto generator = config.validation.generator;
  generator.set_days(config.option.maturity_days);
  return generate_paths(generator, config.validation.paths, derive_seed(config.seed, 2),
                        config.parallel)
      .paths;
}

std::vector<std::pair<std::string, PathBatch>> evaluation_sets(const ExperimentConfig& config) {
  std::vector<std::pair<std::string, PathBatch>> out;
  for (const auto& d : config.datasets) {
    if (config.validation.dataset && *config.validation.dataset == d.name) continue;
    out.emplace_back(d.name, dataset_windows(config, d));
  }
  if (out.empty() && !config.validation.dataset) {
    auto generator = config.validation.generator;
    generator.set_days(config.option.maturity_days);
    out.emplace_back("holdout_" + generator_name(generator.kind),
                     generate_paths(generator, config.validation.paths,
                                    derive_seed(config.seed, 3), config.parallel)
                         .paths);
  }
  return out;
}

void run_gen_paths(const ExperimentConfig& config) {
  Run run(config, "gen-paths");
  auto generator = config.generator;
  generator.set_days(config.option.maturity_days);
  const auto generated = run.stage("generate", [&] {
    return generate_paths(generator, config.training.paths, derive_seed(config.seed, 1),
                          config.parallel);
  });
  run.stage("write", [&] {
    json meta = {{"generator", generator_to_json(generator)},
                 {"seed", config.seed},
                 {"stream_seed", derive_seed(config.seed, 1)},
                 {"rejected", generated.rejected}};
    write_paths_with_sidecar(run.file("paths.csv"), generated.paths, meta);
    run.file("paths.csv.json");
  });
  run.finish({{"rejected", generated.rejected}});
}

void run_train(const ExperimentConfig& config) {
  Run run(config, "train");
  const auto validation = run.stage("validation-set", [&] { return validation_set(config); });
  auto trained = run.stage("train", [&] {
    return train_policy(config, config.generator, config.option, config.measure,
                        train_config(config, 0), config.training.paths, config.seed, validation);
  });
  run.stage("write", [&] {
    trained.policy.save(run.file("policy.bin"),
                        fnv1a64(config_to_json(config).dump()));
    auto out = open_output(run.file("train_report.csv"));
    training::write_report_csv(out, trained.report);
  });
  run.finish({{"best_epoch", trained.report.best_epoch},
              {"diagnostics", trained.report.diagnostics}});
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& config) {
  Run run(config, "price");
  const auto validation = run.stage("validation-set", [&] { return validation_set(config); });
  const auto sets = run.stage("datasets", [&] { return evaluation_sets(config); });
  auto trained = run.stage("train", [&] {
    return train_policy(config, config.generator, config.option, config.measure,
                        train_config(config, 0), config.training.paths, config.seed, validation);
  });
  std::vector<ResultRow> rows;
  run.stage("evaluate", [&] {
    for (const auto& [name, paths] : sets) {
      require(!paths.empty(), "dataset '" + name + "' yields no option windows");
      const auto outcomes =
          training::evaluate_outcomes(trained.policy, paths, config.option, config.cost_rate,
                                      config.features, config.parallel);
      std::vector<double> pl(outcomes.size());
      std::transform(outcomes.begin(), outcomes.end(), pl.begin(),
                     [](const hedge::HedgeOutcome& o) { return o.pl; });
      rows.push_back({config.option.name(), name, config.measure.label(),
                      generator_name(config.generator.kind),
                      risk::indifference_price(pl, config.measure)});
      auto out = open_output(run.file("outcomes_" + name + ".csv"));
      hedge::write_outcomes_csv(out, outcomes);
    }
  });
  run.stage("write", [&] {
    auto out = open_output(run.file("results.csv"));
    write_results_csv(out, rows);
    auto report = open_output(run.file("train_report.csv"));
    training::write_report_csv(report, trained.report);
    trained.policy.save(run.file("policy.bin"), fnv1a64(config_to_json(config).dump()));
  });
  run.finish({{"best_epoch", trained.report.best_epoch},
              {"diagnostics", trained.report.diagnostics}});
  return rows;
}

tuning::StudyResult run_tune(const ExperimentConfig& config) {
  Run run(config, "tune");
  const auto validation = run.stage("validation-set", [&] { return validation_set(config); });
  auto result = run.stage("study", [&] {
    return tune(config, config.generator, config.option, config.measure, validation,
                derive_seed(config.seed, 6), run.file("study_ledger.csv"),
                run.file("best.json"));
  });
  run.stage("write", [&] {
    const auto space = search_space(config, config.generator.kind);
    auto out = open_output(run.file("trials_ranked.csv"));
    tuning::write_ledger_header(out, space);
    for (const auto& t : result.trials) tuning::write_ledger_row(out, space, t);
  });
  run.finish({{"resumed_trials", result.resumed}});
  return result;
}

void run_stats(const ExperimentConfig& config) {
  Run run(config, "stats");
  auto generator = config.generator;
  generator.set_days(config.option.maturity_days);
  const auto generated = run.stage("generate", [&] {
    return generate_paths(generator, config.training.paths, derive_seed(config.seed, 1),
                          config.parallel);
  });
  run.stage("simulated-stats", [&] {
    const auto stats =
        data::stylized_stats(generated.paths, config.stats.max_lag, config.stats.bin_width);
    write_series_stats(run, "simulated_" + generator_name(generator.kind), stats);
  });
  run.stage("dataset-stats", [&] {
    for (const auto& d : config.datasets) {
      const auto series = data::load_series(d.file);
      write_series_stats(
          run, d.name,
          data::stylized_stats(series.closes, config.stats.max_lag, config.stats.bin_width));
    }
  });
  run.finish({{"rejected", generated.rejected}});
}

std::vector<TableRow> run_reproduce_table(const ExperimentConfig& config) {
  Run run(config, "reproduce-table");
  const auto validation = run.stage("validation-set", [&] { return validation_set(config); });
  auto sets = run.stage("datasets", [&] { return evaluation_sets(config); });
  if (!config.table.datasets.empty()) {
    decltype(sets) chosen;
    for (const auto& name : config.table.datasets) {
      const auto it = std::find_if(sets.begin(), sets.end(),
                                   [&](const auto& s) { return s.first == name; });
      if (it == sets.end()) {
        throw ValidationError("stage 'datasets': table dataset '" + name +
                              "' is not an evaluation dataset");
      }
      chosen.push_back(*it);
    }
    sets = std::move(chosen);
  }

  // prices[(derivative, measure, dataset)][column]
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::map<std::string, double>> prices;
  json tuned = json::object();
  json skipped = json::array();
  std::filesystem::create_directories(config.output_dir / "studies");
  for (std::size_t di = 0; di < config.table.derivatives.size(); ++di) {
    OptionSpec spec = config.option;
    spec.kind = config.table.derivatives[di];
    for (std::size_t mi = 0; mi < config.table.measures.size(); ++mi) {
      const auto& measure = config.table.measures[mi];
      for (const auto& column : config.table.columns) {
        const std::string setting = spec.name() + "_" + measure_slug(measure) + "_" + column;
        const std::uint64_t seed = derive_seed(config.seed, fnv1a64(setting));
        GeneratorConfig generator = config.generator;
        generator.kind = parse_generator_kind(generator_for_column(column));
        training::TrainConfig train = train_config(config, 0);

        if (column.starts_with("tuned_")) {
          const auto study = run.stage("tune " + setting, [&] {
            return tune(config, generator, spec, measure, validation, derive_seed(seed, 6),
                        run.file("studies/" + setting + ".csv"), std::nullopt);
          });
          const auto& best = study.best();
          tuned[setting] = tuning::best_to_json(best);
          if (best.status != tuning::TrialStatus::ok) {
            skipped.push_back({{"setting", setting}, {"reason", "no successful tuning trial"}});
            continue;
          }
          tuning::apply_assignment(best.assignment, generator, train);
        }
        std::optional<Trained> trained;
        try {
          trained = run.stage("train " + setting, [&] {
            return train_policy(config, generator, spec, measure, train, config.training.paths,
                                seed, validation);
          });
        } catch (const RuntimeFailure& e) {
          // A tuned simulator can be too degenerate at full scale; the cell
          // stays empty and the reason goes into the manifest.
          if (!column.starts_with("tuned_")) throw;
          std::cerr << "warning: skipping " << setting << ": " << e.what() << '\n';
          skipped.push_back({{"setting", setting}, {"reason", e.what()}});
          continue;
        }
        run.stage("evaluate " + setting, [&] {
          for (std::size_t si = 0; si < sets.size(); ++si) {
            prices[{di, mi, si}][column] =
                training::evaluate_price(trained->policy, sets[si].second, spec, measure,
                                         config.cost_rate, config.features, config.parallel);
          }
        });
      }
    }
  }

  // Table order: derivative, then dataset, then utility.
  std::vector<TableRow> rows;
  for (std::size_t di = 0; di < config.table.derivatives.size(); ++di) {
    for (std::size_t si = 0; si < sets.size(); ++si) {
      for (std::size_t mi = 0; mi < config.table.measures.size(); ++mi) {
        TableRow row{OptionSpec{config.table.derivatives[di]}.name(), sets[si].first,
                     config.table.measures[mi].label(), prices[{di, mi, si}]};
        rows.push_back(std::move(row));
      }
    }
  }
  run.stage("write", [&] {
    auto out = open_output(run.file("table.csv"));
    write_table_csv(out, rows);
    auto best = open_output(run.file("tuned_assignments.json"));
    best << tuned.dump(2) << '\n';
  });
  run.finish({{"skipped", skipped}});
  return rows;
}

}  // namespace hedgelab::experiment
