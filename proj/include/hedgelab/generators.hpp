#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "hedgelab/fcn_market.hpp"
#include "hedgelab/path_batch.hpp"
#include "hedgelab/stoch_models.hpp"

namespace hedgelab {

enum class GeneratorKind { market, gbm, heston };

GeneratorKind parse_generator_kind(const std::string& name);
std::string generator_name(GeneratorKind kind);

// Underlying-asset simulator selection plus every simulator's parameters;
// only the block matching `kind` is used.
struct GeneratorConfig {
  GeneratorKind kind = GeneratorKind::gbm;
  models::GbmParams gbm;
  models::HestonParams heston;
  market::MarketConfig market;
  market::AgentPopulation population;

  // Sets the path length of every simulator to `days`.
  void set_days(int days);
  void validate() const;
};

struct GeneratedPaths {
  PathBatch paths;
  std::size_t rejected = 0;  // regenerated GBM paths or reseeded market sessions
};

GeneratedPaths generate_paths(const GeneratorConfig& config, std::size_t n_paths,
                              std::uint64_t seed, std::size_t workers = 1);

// JSON <-> config. Unknown keys are rejected so typos surface as validation
// errors; missing keys keep their defaults.
GeneratorConfig generator_from_json(const nlohmann::json& j);
nlohmann::json generator_to_json(const GeneratorConfig& config);

}  // namespace hedgelab
