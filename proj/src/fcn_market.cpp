#include "hedgelab/fcn_market.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace hedgelab::market {

void AgentPopulation::validate() const {
  require(w_fundamental >= 0 && w_chart >= 0 && w_noise >= 0, "agent weights must be nonnegative");
  require(w_fundamental + w_chart + w_noise > 0, "agent weights must not all be zero");
  require(tau_star_min >= 1 && tau_star_min <= tau_star_max, "need 1 <= tau_star_min <= tau_star_max");
  require(tau_min >= 1 && tau_min <= tau_max, "need 1 <= tau_min <= tau_max");
  require(k_min >= 0 && k_min <= k_max && k_max <= 1, "need 0 <= k_min <= k_max <= 1");
}

void MarketConfig::validate() const {
  require(n_agents > 0, "n_agents must be positive");
  require(agents_per_step > 0 && agents_per_step <= n_agents,
          "agents_per_step must be in [1, n_agents]");
  require(sigma_star >= 0 && std::isfinite(sigma_star), "sigma_star must be nonnegative");
  require(sigma_noise >= 0 && std::isfinite(sigma_noise), "sigma_noise must be nonnegative");
  require(preopen_steps >= n_agents, "preopen_steps must be >= n_agents");
  require(steps_per_day > 0 && days > 0, "steps_per_day and days must be positive");
  require(order_ttl > 0, "order_ttl must be positive");
  require(initial_price > 0, "initial_price must be positive");
}

Factors compute_factors(const FcnAgent& agent, std::span<const double> history, double price,
                        double fundamental) {
  Factors f;
  f.fundamental = std::log(fundamental / price) / agent.tau_star;
  if (history.size() >= 2) {
    const std::size_t window =
        std::min<std::size_t>(static_cast<std::size_t>(agent.tau), history.size() - 1);
    // The window sum of log-returns telescopes.
    f.chart = (std::log(history.back()) - std::log(history[history.size() - 1 - window])) /
              static_cast<double>(window);
  }
  return f;
}

double draw_noise(FcnAgent& agent, double sigma) {
  if (sigma == 0.0) return 0.0;
  std::normal_distribution<double> normal(0.0, sigma);
  return normal(agent.rng);
}

double expected_return(const FcnAgent& agent, const Factors& factors) {
  const double total = agent.w_fundamental + agent.w_chart + agent.w_noise;
  return (agent.w_fundamental * factors.fundamental + agent.w_chart * factors.chart +
          agent.w_noise * factors.noise) /
         total;
}

double expected_price(const FcnAgent& agent, double price, const Factors& factors) {
  return price * std::exp(expected_return(agent, factors) * agent.tau);
}

std::optional<OrderIntent> decide_order(const FcnAgent& agent, const Quote& quote,
                                        const Factors& factors, QuoteCap cap) {
  const double target = expected_price(agent, quote.price, factors);
  if (!(std::isfinite(target) && target > 0.0)) return std::nullopt;
  if (target > quote.price) {
    double price = target * (1.0 - agent.margin);
    const auto& limit = cap == QuoteCap::opposite_best ? quote.best_ask : quote.best_bid;
    if (limit) price = std::min(price, *limit);
    if (!(price > 0.0)) return std::nullopt;
    return OrderIntent{lob::Side::bid, price};
  }
  if (target < quote.price) {
    double price = target * (1.0 + agent.margin);
    const auto& limit = cap == QuoteCap::opposite_best ? quote.best_bid : quote.best_ask;
    if (limit) price = std::max(price, *limit);
    return OrderIntent{lob::Side::ask, price};
  }
  return std::nullopt;
}

std::vector<FcnAgent> sample_agents(const AgentPopulation& population, int n_agents,
                                    std::uint64_t seed) {
  population.validate();
  Engine rng = make_engine(seed, 0);
  std::uniform_int_distribution<int> tau_star(population.tau_star_min, population.tau_star_max);
  std::uniform_int_distribution<int> tau(population.tau_min, population.tau_max);
  std::uniform_real_distribution<double> margin(population.k_min, population.k_max);
  std::vector<FcnAgent> agents;
  agents.reserve(static_cast<std::size_t>(n_agents));
  for (int i = 0; i < n_agents; ++i) {
    FcnAgent a;
    a.w_fundamental = population.w_fundamental;
    a.w_chart = population.w_chart;
    a.w_noise = population.w_noise;
    a.tau_star = tau_star(rng);
    a.tau = tau(rng);
    a.margin = population.k_min == population.k_max ? population.k_min : margin(rng);
    a.rng = make_engine(seed, static_cast<std::uint64_t>(i) + 1);
    agents.push_back(std::move(a));
  }
  return agents;
}

SessionResult run_session(const MarketConfig& config, const AgentPopulation& population) {
  config.validate();
  population.validate();

  std::vector<FcnAgent> agents =
      sample_agents(population, config.n_agents, derive_seed(config.seed, 1));
  Engine rng = make_engine(config.seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);

  lob::OrderBook book(config.initial_price);
  SessionResult result;
  lob::OrderId next_id = 1;
  double fundamental = config.initial_price;

  auto submit = [&](FcnAgent& agent, const Quote& quote, std::span<const double> history,
                    lob::Step t, lob::Mode mode) -> std::size_t {
    Factors f = compute_factors(agent, history, quote.price, fundamental);
    f.noise = draw_noise(agent, config.sigma_noise);
    const auto intent = decide_order(agent, quote, f, config.quote_cap);
    if (!intent) return 0;
    ++result.orders;
    lob::Order order{next_id++, intent->side, intent->price, 1, t, t + config.order_ttl};
    return book.insert(order, mode).size();
  };

  // Pre-open: agents visit in shuffled cycles, quoting against the
  // fundamental; nothing matches until the single uncross.
  std::vector<int> order(static_cast<std::size_t>(config.n_agents));
  std::iota(order.begin(), order.end(), 0);
  lob::Step t = 0;
  for (; t < config.preopen_steps; ++t) {
    const auto slot = static_cast<std::size_t>(t % config.n_agents);
    if (slot == 0) std::shuffle(order.begin(), order.end(), rng);
    book.expire(t);
    const Quote quote{fundamental, book.best_bid(), book.best_ask()};
    submit(agents[static_cast<std::size_t>(order[slot])], quote, {}, t, lob::Mode::preopen);
  }
  const auto opening = book.uncross(t, fundamental);
  result.preopen_fills = opening.fills.size();

  const int steps = config.main_steps();
  result.prices.reserve(static_cast<std::size_t>(steps) + 1);
  result.fundamental.reserve(static_cast<std::size_t>(steps) + 1);
  result.prices.push_back(book.last_price());
  result.fundamental.push_back(fundamental);

  std::vector<int> pool(static_cast<std::size_t>(config.n_agents));
  std::iota(pool.begin(), pool.end(), 0);
  const auto n_select = static_cast<std::size_t>(config.agents_per_step);
  for (int s = 1; s <= steps; ++s) {
    ++t;
    if (config.sigma_star > 0) fundamental *= std::exp(config.sigma_star * normal(rng));
    book.expire(t);
    // Partial Fisher-Yates: the first n_select entries are a uniform sample
    // without replacement.
    for (std::size_t j = 0; j < n_select; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, pool.size() - 1);
      std::swap(pool[j], pool[pick(rng)]);
    }
    const std::span<const double> history(result.prices.data(), result.prices.size());
    for (std::size_t j = 0; j < n_select; ++j) {
      const Quote quote{book.last_price(), book.best_bid(), book.best_ask()};
      result.trades += submit(agents[static_cast<std::size_t>(pool[j])], quote, history, t,
                              lob::Mode::continuous);
    }
    result.prices.push_back(book.last_price());
    result.fundamental.push_back(fundamental);
  }
  return result;
}

std::vector<double> extract_path(std::span<const double> session_prices, int days,
                                 int steps_per_day) {
  require(days >= 1 && steps_per_day >= 1, "days and steps_per_day must be positive");
  const auto needed = static_cast<std::size_t>(days) * static_cast<std::size_t>(steps_per_day) + 1;
  require(session_prices.size() >= needed,
          "session has " + std::to_string(session_prices.size()) + " prices, need " +
              std::to_string(needed));
  std::vector<double> path(static_cast<std::size_t>(days) + 1);
  const double base = session_prices[0];
  for (int d = 0; d <= days; ++d) {
    path[static_cast<std::size_t>(d)] =
        session_prices[static_cast<std::size_t>(d) * static_cast<std::size_t>(steps_per_day)] /
        base;
  }
  path[0] = 1.0;
  return path;
}

PathBatch extract_paths(const std::vector<std::vector<double>>& sessions, int days,
                        int steps_per_day) {
  PathBatch batch(static_cast<std::size_t>(days) + 1);
  for (const auto& s : sessions) batch.push_back(extract_path(s, days, steps_per_day));
  return batch;
}

MarketBatch generate_market_paths(const MarketConfig& config, const AgentPopulation& population,
                                  std::size_t n_paths, std::uint64_t seed, std::size_t workers,
                                  int max_attempts) {
  config.validate();
  population.validate();
  std::vector<std::vector<double>> paths(n_paths);
  std::vector<std::size_t> rejections(n_paths, 0);
  parallel_for(n_paths, workers, [&](std::size_t i) {
    MarketConfig c = config;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
      c.seed = derive_seed(seed, (static_cast<std::uint64_t>(i) << 8) |
                                     static_cast<std::uint64_t>(attempt));
      SessionResult r = run_session(c, population);
      if (!r.degenerate()) {
        paths[i] = extract_path(r.prices, c.days, c.steps_per_day);
        return;
      }
      ++rejections[i];
    }
    throw RuntimeFailure("market session " + std::to_string(i) + " produced no trades in " +
                         std::to_string(max_attempts) + " attempts");
  });
  MarketBatch out;
  out.paths = PathBatch(static_cast<std::size_t>(config.days) + 1);
  for (const auto& p : paths) out.paths.push_back(p);
  for (std::size_t r : rejections) out.rejected_sessions += r;
  return out;
}

}  // namespace hedgelab::market
