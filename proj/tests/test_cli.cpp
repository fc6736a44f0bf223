#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hedgelab/cli.hpp"
#include "hedgelab/common.hpp"
#include "hedgelab/experiment.hpp"

using namespace hedgelab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "hedgelab");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "hedgelab_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_json(const fs::path& file, const nlohmann::json& j) {
  std::ofstream(file) << j.dump(2);
  return file;
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Sets an environment variable for the lifetime of the guard.
class EnvGuard {
 public:
  EnvGuard(std::string name, const std::string& value) : name_(std::move(name)) {
    ::setenv(name_.c_str(), value.c_str(), 1);
  }
  ~EnvGuard() { ::unsetenv(name_.c_str()); }

 private:
  std::string name_;
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help and usage errors") {
    CHECK(run_cli({"--help"}).code == cli::kExitOk);
    CHECK(run_cli({}).code == cli::kExitValidation);
    CHECK(run_cli({"launch"}).code == cli::kExitValidation);
    CHECK(run_cli({"gen-paths", "--paths", "0"}).code == cli::kExitValidation);
    CHECK(run_cli({"gen-paths", "--paths", "many"}).code == cli::kExitValidation);
    CHECK(run_cli({"gen-paths", "--bogus"}).code == cli::kExitValidation);
    CHECK(run_cli({"gen-paths", "--config", "/nonexistent/x.json"}).code == cli::kExitValidation);
  }

  TEST_CASE("config errors are validation errors") {
    const auto dir = fresh_dir("config_errors");
    const auto bad_gen = write_json(dir / "gen.json", {{"generator", {{"kind", "levy"}}}});
    const auto r = run_cli({"gen-paths", "--config", bad_gen.string(), "--out", (dir / "o").string()});
    CHECK(r.code == cli::kExitValidation);
    CHECK(r.err.find("levy") != std::string::npos);

    const auto typo = write_json(dir / "typo.json", {{"sead", 3}});
    const auto t = run_cli({"gen-paths", "--config", typo.string()});
    CHECK(t.code == cli::kExitValidation);
    CHECK(t.err.find("sead") != std::string::npos);

    std::ofstream(dir / "broken.json") << "{ not json";
    CHECK(run_cli({"stats", "--config", (dir / "broken.json").string()}).code == cli::kExitValidation);

    const auto bad_measure = write_json(dir / "measure.json", {{"measure", "erm:-1"}});
    CHECK(run_cli({"train", "--config", bad_measure.string()}).code == cli::kExitValidation);
  }

  TEST_CASE("runtime failures exit with 1") {
    const auto dir = fresh_dir("runtime");
    std::ofstream(dir / "occupied") << "a file, not a directory";
    const auto r = run_cli({"gen-paths", "--paths", "4", "--out", (dir / "occupied").string()});
    CHECK(r.code == cli::kExitRuntime);
  }

  TEST_CASE("gen-paths writes paths, sidecar and manifest") {
    const auto dir = fresh_dir("gen");
    const auto r = run_cli({"gen-paths", "--paths", "25", "--seed", "3", "--out", dir.string()});
    REQUIRE(r.code == cli::kExitOk);
    CHECK(fs::exists(dir / "paths.csv"));
    CHECK(fs::exists(dir / "paths.csv.json"));
    CHECK_FALSE(fs::exists(dir / "INCOMPLETE"));
    const auto batch = read_paths_csv(dir / "paths.csv");
    CHECK(batch.size() == 25);
    CHECK(batch.n_points() == 21);
    const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest["command"] == "gen-paths");
    CHECK(manifest["seed"] == 3);
    CHECK(manifest["config"]["training"]["paths"] == 25);
  }

  TEST_CASE("reruns are byte-identical") {
    const auto dir = fresh_dir("rerun");
    const std::vector<std::string> args = {"gen-paths", "--paths", "40", "--seed", "11",
                                           "--out", dir.string()};
    REQUIRE(run_cli(args).code == cli::kExitOk);
    const auto first = slurp(dir / "paths.csv");
    const auto first_manifest = slurp(dir / "manifest.json");
    REQUIRE(run_cli(args).code == cli::kExitOk);
    CHECK(slurp(dir / "paths.csv") == first);
    CHECK(slurp(dir / "manifest.json") == first_manifest);

    auto other = args;
    other[4] = "12";
    REQUIRE(run_cli(other).code == cli::kExitOk);
    CHECK(slurp(dir / "paths.csv") != first);
  }

  TEST_CASE("environment overrides sit between the file and the flags") {
    const auto dir = fresh_dir("precedence");
    const auto file = write_json(dir / "c.json", {{"seed", 1}, {"training", {{"epochs", 7}}}});
    {
      EnvGuard env("HEDGELAB__TRAINING__EPOCHS", "9");
      EnvGuard seed("HEDGELAB__SEED", "5");
      const auto c = experiment::load_config(file);
      CHECK(c.training.epochs == 9);
      CHECK(c.seed == 5);
      const auto flagged = experiment::load_config(file, {{"seed", 8}});
      CHECK(flagged.seed == 8);
      CHECK(flagged.training.epochs == 9);
    }
    CHECK(experiment::load_config(file).training.epochs == 7);
    {
      EnvGuard env("HEDGELAB__GENERATOR__KIND", "heston");
      CHECK(experiment::load_config(std::nullopt).generator.kind == GeneratorKind::heston);
    }
    {
      EnvGuard env("HEDGELAB__TRAINING__EPOCHZ", "3");
      CHECK_THROWS_AS(experiment::load_config(file), ValidationError);
    }
  }

  TEST_CASE("environment override reaches the command line") {
    const auto dir = fresh_dir("env_cli");
    EnvGuard env("HEDGELAB__GENERATOR__KIND", "brownian");
    REQUIRE(run_cli({"gen-paths", "--paths", "3", "--out", dir.string()}).code == cli::kExitOk);
    const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest["config"]["generator"]["kind"] == "gbm");
    EnvGuard bad("HEDGELAB__GENERATOR__KIND", "levy");
    CHECK(run_cli({"gen-paths", "--paths", "3", "--out", dir.string()}).code == cli::kExitValidation);
  }

  TEST_CASE("config round-trips through json") {
    experiment::ExperimentConfig c;
    c.seed = 42;
    c.generator.kind = GeneratorKind::heston;
    c.measure = risk::RiskMeasure::cvar(0.99);
    c.tuning.grids["learning_rate"] = {1e-3, 1e-2};
    const auto j = experiment::config_to_json(c);
    const auto back = experiment::config_from_json(j);
    CHECK(experiment::config_to_json(back) == j);
    CHECK(experiment::config_hash(back) == experiment::config_hash(c));
    c.seed = 43;
    CHECK(experiment::config_hash(back) != experiment::config_hash(c));
  }

  TEST_CASE("train and price on a tiny problem") {
    const auto dir = fresh_dir("train_price");
    const auto file = write_json(dir / "c.json", {{"training", {{"minibatch", 16}}},
                                                  {"validation", {{"paths", 32}}}});
    const std::vector<std::string> common = {"--config", file.string(), "--paths", "32",
                                             "--epochs", "1", "--out", dir.string()};
    auto train = common;
    train.insert(train.begin(), "train");
    REQUIRE(run_cli(train).code == cli::kExitOk);
    CHECK(fs::exists(dir / "policy.bin"));
    CHECK(slurp(dir / "train_report.csv").rfind("epoch,val_price\n", 0) == 0);

    auto price = common;
    price.insert(price.begin(), "price");
    const auto r = run_cli(price);
    REQUIRE(r.code == cli::kExitOk);
    CHECK(slurp(dir / "results.csv").rfind("derivative,dataset,measure,generator,price\n", 0) == 0);
    CHECK(r.out.find("european holdout_gbm ERM (lambda=1) gbm: ") != std::string::npos);
  }
}
