#include "hedgelab/cli.hpp"

#include <cstdint>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "hedgelab/common.hpp"
#include "hedgelab/experiment.hpp"

namespace hedgelab::cli {

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> paths;
  std::optional<int> epochs;
  std::optional<std::size_t> trials;
  std::optional<std::size_t> parallel;
};

void add_flags(CLI::App& cmd, Flags& f) {
  cmd.add_option("--config", f.config, "JSON experiment config")->check(CLI::ExistingFile);
  cmd.add_option("--seed", f.seed, "base random seed");
  cmd.add_option("--out", f.out, "output directory");
  cmd.add_option("--paths", f.paths, "number of simulated paths")->check(CLI::PositiveNumber);
  cmd.add_option("--epochs", f.epochs, "training epochs")->check(CLI::NonNegativeNumber);
  cmd.add_option("--trials", f.trials, "tuning trials")->check(CLI::PositiveNumber);
  cmd.add_option("--parallel", f.parallel, "worker threads")->check(CLI::PositiveNumber);
}

// Flags patch the config after environment overrides. For `tune`, --paths and
// --epochs size each trial.
nlohmann::json flag_patch(const Flags& f, bool tuning_scale) {
  nlohmann::json patch = nlohmann::json::object();
  if (f.seed) patch["seed"] = *f.seed;
  if (f.out) patch["output_dir"] = *f.out;
  if (f.parallel) patch["parallel"] = *f.parallel;
  if (f.trials) patch["tuning"]["trials"] = *f.trials;
  const char* block = tuning_scale ? "tuning" : "training";
  if (f.paths) patch[block]["paths"] = *f.paths;
  if (f.epochs) patch[block]["epochs"] = *f.epochs;
  return patch;
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deep hedging lab: simulate, train, price, tune and analyse"};
  app.require_subcommand(1);
  Flags flags;

  auto* gen = app.add_subcommand("gen-paths", "simulate underlying paths to CSV");
  auto* train = app.add_subcommand("train", "train a hedging policy");
  auto* price = app.add_subcommand("price", "train, then price on the evaluation datasets");
  auto* tune = app.add_subcommand("tune", "hyperparameter study for the configured simulator");
  auto* stats = app.add_subcommand("stats", "kurtosis-by-lag and return histograms");
  auto* table = app.add_subcommand("reproduce-table", "pricing table over the configured settings");
  for (auto* cmd : {gen, train, price, tune, stats, table}) add_flags(*cmd, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    std::optional<std::filesystem::path> config_file;
    if (!flags.config.empty()) config_file = flags.config;
    const auto config = experiment::load_config(config_file, flag_patch(flags, tune->parsed()));

    if (gen->parsed()) {
      experiment::run_gen_paths(config);
      out << "wrote " << (config.output_dir / "paths.csv").string() << '\n';
    } else if (train->parsed()) {
      experiment::run_train(config);
      out << "wrote " << (config.output_dir / "policy.bin").string() << '\n';
    } else if (price->parsed()) {
      for (const auto& row : experiment::run_experiment(config)) {
        out << row.derivative << ' ' << row.dataset << ' ' << row.measure << ' ' << row.generator
            << ": " << format_double(row.price) << '\n';
      }
    } else if (tune->parsed()) {
      const auto study = experiment::run_tune(config);
      const auto& best = study.best();
      out << "best trial " << best.id << " objective " << format_double(best.objective) << '\n';
      for (const auto& [key, value] : best.assignment) {
        out << "  " << key << " = " << format_double(value) << '\n';
      }
    } else if (stats->parsed()) {
      experiment::run_stats(config);
      out << "wrote stats to " << config.output_dir.string() << '\n';
    } else if (table->parsed()) {
      experiment::run_reproduce_table(config);
      out << "wrote " << (config.output_dir / "table.csv").string() << '\n';
    }
    return kExitOk;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace hedgelab::cli
