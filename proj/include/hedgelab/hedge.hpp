#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "hedgelab/autograd.hpp"
#include "hedgelab/instruments.hpp"
#include "hedgelab/path_batch.hpp"

namespace hedgelab::hedge {

// Terminal P&L of the option seller: pl = -payoff + trading_gain - cost.
struct HedgeOutcome {
  double pl = 0.0;
  double trading_gain = 0.0;
  double cost = 0.0;
  double payoff = 0.0;
};

// Positions delta_{t_0..t_{n-1}}; delta_{-1} = delta_{t_n} = 0 so the book is
// opened at t_0 and liquidated at t_n, both charged at rate `cost_rate`.
HedgeOutcome compute_pl(PathView path, std::span<const double> deltas, const OptionSpec& spec,
                        double cost_rate);

// Differentiable P&L for a minibatch. `deltas` is B x n, `paths` holds the B
// matching paths, `payoffs` their option payoffs. Returns a B x 1 node.
// The |.| kink uses the subgradient sign(0) = 0. `paths` is referenced by the
// backward closure and must outlive the graph.
nn::Var pl_graph(const nn::Var& deltas, const PathBatch& paths, std::span<const double> payoffs,
                 double cost_rate);

struct FeatureConfig {
  double vol_prior = 0.2;
  double vol_floor = 1e-4;
  std::size_t min_returns = 5;   // below this the prior is blended in
  double annualization = 250.0;  // trading days per year
  bool include_prev_position = false;
};

struct FeatureRow {
  double moneyness = 1.0;
  double time_to_maturity = 0.0;
  double volatility = 0.2;
  double bs_delta = 0.5;
  std::optional<double> max_moneyness;  // lookback only
};

// Annualized realized vol of the prefix's log-returns (population std),
// linearly blended toward the prior when fewer than min_returns exist.
double realized_vol(std::span<const double> prefix, const FeatureConfig& config);

// Features at t_i from S_{t_0..t_i} (prefix.size() == i + 1, i < n).
FeatureRow features(std::span<const double> prefix, const OptionSpec& spec,
                    const FeatureConfig& config);

// 4 columns, 5 for lookback (plus one when include_prev_position is set;
// that column is filled by the policy rollout, not here).
std::size_t feature_width(const OptionSpec& spec, const FeatureConfig& config);

// Market features for every (path, step), row p * n + i, without the
// previous-position column.
nn::Matrix feature_matrix(const PathBatch& paths, const OptionSpec& spec,
                          const FeatureConfig& config);

// delta_{t_i} = bs_delta(S_{t_i}, K, vol, (n - i)/250). Lookback options get
// the same European delta as a naive baseline.
std::vector<double> delta_hedge_baseline(PathView path, const OptionSpec& spec, double vol);

// CSV: path_id,payoff,gain,cost,pl
void write_outcomes_csv(std::ostream& out, std::span<const HedgeOutcome> outcomes);

}  // namespace hedgelab::hedge
