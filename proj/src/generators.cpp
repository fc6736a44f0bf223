#include "hedgelab/generators.hpp"

#include "hedgelab/common.hpp"
#include "hedgelab/json_util.hpp"

namespace hedgelab {

using nlohmann::json;

GeneratorKind parse_generator_kind(const std::string& name) {
  if (name == "market") return GeneratorKind::market;
  if (name == "gbm" || name == "brownian") return GeneratorKind::gbm;
  if (name == "heston") return GeneratorKind::heston;
  throw ValidationError("unknown generator '" + name + "' (expected market, gbm or heston)");
}

std::string generator_name(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::market: return "market";
    case GeneratorKind::gbm: return "gbm";
    case GeneratorKind::heston: return "heston";
  }
  return "unknown";
}

void GeneratorConfig::set_days(int days) {
  gbm.n_steps = days;
  heston.n_steps = days;
  market.days = days;
}

void GeneratorConfig::validate() const {
  switch (kind) {
    case GeneratorKind::gbm: gbm.validate(); break;
    case GeneratorKind::heston: heston.validate(); break;
    case GeneratorKind::market:
      market.validate();
      population.validate();
      break;
  }
}

GeneratedPaths generate_paths(const GeneratorConfig& config, std::size_t n_paths,
                              std::uint64_t seed, std::size_t workers) {
  config.validate();
  GeneratedPaths out;
  switch (config.kind) {
    case GeneratorKind::gbm: {
      auto batch = models::gbm_paths(config.gbm, n_paths, seed, workers);
      out.paths = std::move(batch.paths);
      out.rejected = batch.regenerated;
      break;
    }
    case GeneratorKind::heston:
      out.paths = models::heston_paths(config.heston, n_paths, seed, workers).paths;
      break;
    case GeneratorKind::market: {
      auto batch =
          market::generate_market_paths(config.market, config.population, n_paths, seed, workers);
      out.paths = std::move(batch.paths);
      out.rejected = batch.rejected_sessions;
      break;
    }
  }
  return out;
}

GeneratorConfig generator_from_json(const json& j) {
  GeneratorConfig c;
  ObjectReader top(j, "generator");
  std::string kind = generator_name(c.kind);
  top.read("kind", kind);
  c.kind = parse_generator_kind(kind);

  json gbm = json::object(), heston = json::object(), mkt = json::object();
  top.read("gbm", gbm);
  top.read("heston", heston);
  top.read("market", mkt);
  top.finish();

  ObjectReader g(gbm, "generator.gbm");
  g.read("mu", c.gbm.mu);
  g.read("sigma", c.gbm.sigma);
  g.read("dt", c.gbm.dt);
  g.finish();

  ObjectReader h(heston, "generator.heston");
  h.read("kappa", c.heston.kappa);
  h.read("theta", c.heston.theta);
  h.read("v0", c.heston.v0);
  h.read("vol_of_vol", c.heston.vol_of_vol);
  h.read("rho", c.heston.rho);
  h.read("dt", c.heston.dt);
  double initial_vol = 0.0;
  h.read("initial_vol", initial_vol);
  h.finish();
  if (heston.contains("initial_vol")) {
    require(!heston.contains("theta") && !heston.contains("v0"),
            "generator.heston: give either initial_vol or theta/v0");
    c.heston.theta = initial_vol * initial_vol;
    c.heston.v0 = initial_vol * initial_vol;
  }

  ObjectReader m(mkt, "generator.market");
  m.read("n_agents", c.market.n_agents);
  m.read("agents_per_step", c.market.agents_per_step);
  m.read("sigma_star", c.market.sigma_star);
  m.read("sigma_noise", c.market.sigma_noise);
  m.read("preopen_steps", c.market.preopen_steps);
  m.read("steps_per_day", c.market.steps_per_day);
  m.read("order_ttl", c.market.order_ttl);
  std::string cap = "opposite_best";
  m.read("quote_cap", cap);
  if (cap == "opposite_best") {
    c.market.quote_cap = market::QuoteCap::opposite_best;
  } else if (cap == "same_side_best") {
    c.market.quote_cap = market::QuoteCap::same_side_best;
  } else {
    throw ValidationError("generator.market.quote_cap: unknown value '" + cap + "'");
  }
  m.read("w_fundamental", c.population.w_fundamental);
  m.read("w_chart", c.population.w_chart);
  m.read("w_noise", c.population.w_noise);
  m.read("tau_star_min", c.population.tau_star_min);
  m.read("tau_star_max", c.population.tau_star_max);
  m.read("tau_min", c.population.tau_min);
  m.read("tau_max", c.population.tau_max);
  m.read("k_min", c.population.k_min);
  m.read("k_max", c.population.k_max);
  m.finish();
  return c;
}

json generator_to_json(const GeneratorConfig& c) {
  return json{
      {"kind", generator_name(c.kind)},
      {"gbm", {{"mu", c.gbm.mu}, {"sigma", c.gbm.sigma}, {"dt", c.gbm.dt}}},
      {"heston",
       {{"kappa", c.heston.kappa},
        {"theta", c.heston.theta},
        {"v0", c.heston.v0},
        {"vol_of_vol", c.heston.vol_of_vol},
        {"rho", c.heston.rho},
        {"dt", c.heston.dt}}},
      {"market",
       {{"n_agents", c.market.n_agents},
        {"agents_per_step", c.market.agents_per_step},
        {"sigma_star", c.market.sigma_star},
        {"sigma_noise", c.market.sigma_noise},
        {"preopen_steps", c.market.preopen_steps},
        {"steps_per_day", c.market.steps_per_day},
        {"order_ttl", c.market.order_ttl},
        {"quote_cap", c.market.quote_cap == market::QuoteCap::opposite_best ? "opposite_best"
                                                                             : "same_side_best"},
        {"w_fundamental", c.population.w_fundamental},
        {"w_chart", c.population.w_chart},
        {"w_noise", c.population.w_noise},
        {"tau_star_min", c.population.tau_star_min},
        {"tau_star_max", c.population.tau_star_max},
        {"tau_min", c.population.tau_min},
        {"tau_max", c.population.tau_max},
        {"k_min", c.population.k_min},
        {"k_max", c.population.k_max}}}};
}

}  // namespace hedgelab
