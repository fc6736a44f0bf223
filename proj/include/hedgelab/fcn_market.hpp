#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "hedgelab/common.hpp"
#include "hedgelab/lob.hpp"
#include "hedgelab/path_batch.hpp"

namespace hedgelab::market {

// Which best quote caps an agent's limit price.
//   opposite_best: bid at min(p̂(1-k), best ask), ask at max(p̂(1+k), best bid).
//     Orders may cross the spread by at most the touch, so continuous trading
//     happens.
//   same_side_best: bid at min(p̂(1-k), best bid), ask at max(p̂(1+k), best ask).
//     Orders never improve the touch; a two-sided book then never trades.
enum class QuoteCap { opposite_best, same_side_best };

struct FcnAgent {
  double w_fundamental = 1.0;
  double w_chart = 0.0;
  double w_noise = 1.0;
  int tau_star = 100;  // mean-reversion time constant (steps)
  int tau = 10;        // chart window (steps)
  double margin = 0.0; // k in [0, 1]
  Engine rng;          // noise stream
};

// Distribution the agent parameters are drawn from. Weights are shared.
struct AgentPopulation {
  double w_fundamental = 1.0;
  double w_chart = 1.0;
  double w_noise = 1.0;
  int tau_star_min = 100;
  int tau_star_max = 100;
  int tau_min = 10;
  int tau_max = 10;
  double k_min = 0.0;
  double k_max = 0.0;

  void validate() const;
};

struct MarketConfig {
  int n_agents = 100;
  int agents_per_step = 10;
  double sigma_star = 1e-3;   // fundamental log-volatility per step
  double sigma_noise = 1e-3;  // std of the noise factor
  int preopen_steps = 100;
  int steps_per_day = 50;
  int days = 20;
  int order_ttl = 200;
  double initial_price = 1.0;
  QuoteCap quote_cap = QuoteCap::opposite_best;
  std::uint64_t seed = 0;

  void validate() const;
  [[nodiscard]] int main_steps() const { return steps_per_day * days; }
};

struct Factors {
  double fundamental = 0.0;
  double chart = 0.0;
  double noise = 0.0;
};

// F = ln(p*/p)/tau*; C = mean of the last tau log-returns of `history`
// (truncated to what is available; 0 with fewer than two prices).
// The noise term is left at 0; draw_noise() fills it.
Factors compute_factors(const FcnAgent& agent, std::span<const double> history, double price,
                        double fundamental);
double draw_noise(FcnAgent& agent, double sigma);

// What an agent sees of the book when deciding.
struct Quote {
  double price = 1.0;
  std::optional<double> best_bid;
  std::optional<double> best_ask;
};

struct OrderIntent {
  lob::Side side;
  double price;
};

double expected_return(const FcnAgent& agent, const Factors& factors);
double expected_price(const FcnAgent& agent, double price, const Factors& factors);

// FCN order rule. Returns nothing when the expected price equals the price.
std::optional<OrderIntent> decide_order(const FcnAgent& agent, const Quote& quote,
                                        const Factors& factors, QuoteCap cap);

std::vector<FcnAgent> sample_agents(const AgentPopulation& population, int n_agents,
                                    std::uint64_t seed);

struct SessionResult {
  // Element 0 is the opening price (uncross price, or the initial price when
  // the pre-open book did not cross); element s is the last trade price at
  // the end of main-session step s.
  std::vector<double> prices;
  std::vector<double> fundamental;
  std::size_t trades = 0;
  std::size_t preopen_fills = 0;
  std::size_t orders = 0;

  [[nodiscard]] bool degenerate() const { return trades == 0; }
};

SessionResult run_session(const MarketConfig& config, const AgentPopulation& population);

// One path per session: the opening price followed by the last price of
// each day, divided by the opening price.
std::vector<double> extract_path(std::span<const double> session_prices, int days,
                                 int steps_per_day);
PathBatch extract_paths(const std::vector<std::vector<double>>& sessions, int days,
                        int steps_per_day);

struct MarketBatch {
  PathBatch paths;
  std::size_t rejected_sessions = 0;
};

// Runs n_paths independent sessions. Session i is seeded from (seed, i) and is
// reseeded on a degenerate outcome, so the output does not depend on
// `workers`.
MarketBatch generate_market_paths(const MarketConfig& config, const AgentPopulation& population,
                                  std::size_t n_paths, std::uint64_t seed,
                                  std::size_t workers = 1, int max_attempts = 50);

}  // namespace hedgelab::market
