#include "hedgelab/hedge.hpp"

#include <algorithm>
#include <cmath>

#include "hedgelab/common.hpp"
#include "hedgelab/instruments.hpp"

namespace hedgelab::hedge {

namespace {
double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }
}  // namespace

HedgeOutcome compute_pl(PathView path, std::span<const double> deltas, const OptionSpec& spec,
                        double cost_rate) {
  require(cost_rate >= 0, "transaction cost rate must be nonnegative");
  require(path.size() >= 2 && deltas.size() == path.size() - 1,
          "need one position per hedging step: path has " + std::to_string(path.size()) +
              " points, got " + std::to_string(deltas.size()) + " positions");
  HedgeOutcome out;
  out.payoff = payoff(spec, path);
  const std::size_t n = deltas.size();
  double previous = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.trading_gain += deltas[i] * (path[i + 1] - path[i]);
    out.cost += cost_rate * path[i] * std::abs(deltas[i] - previous);
    previous = deltas[i];
  }
  out.cost += cost_rate * path[n] * std::abs(previous);
  out.pl = -out.payoff + out.trading_gain - out.cost;
  return out;
}

nn::Var pl_graph(const nn::Var& deltas, const PathBatch& paths, std::span<const double> payoffs,
                 double cost_rate) {
  const nn::Matrix& d = deltas.value();
  const std::size_t batch = d.rows(), n = d.cols();
  require(paths.size() == batch && paths.n_steps() == n && payoffs.size() == batch,
          "pl_graph: deltas, paths and payoffs disagree in shape");
  nn::Matrix out(batch, 1);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto s = paths.path(b);
    const auto row = d.row(b);
    double gain = 0.0, cost = 0.0, previous = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      gain += row[i] * (s[i + 1] - s[i]);
      cost += cost_rate * s[i] * std::abs(row[i] - previous);
      previous = row[i];
    }
    cost += cost_rate * s[n] * std::abs(previous);
    out[b] = -payoffs[b] + gain - cost;
  }
  return nn::make_op(std::move(out), {deltas}, [&paths, cost_rate](nn::Node& self) {
    const nn::Matrix& dv = self.parents[0]->value;
    nn::Matrix& g = self.parents[0]->grad_buffer();
    const std::size_t n = dv.cols();
    for (std::size_t b = 0; b < dv.rows(); ++b) {
      const double upstream = self.grad[b];
      if (upstream == 0.0) continue;
      const auto s = paths.path(b);
      const auto row = dv.row(b);
      for (std::size_t i = 0; i < n; ++i) {
        const double prev = i == 0 ? 0.0 : row[i - 1];
        const double next = i + 1 == n ? 0.0 : row[i + 1];
        // d/d delta_i of: delta_i dS_i - c S_i |delta_i - prev| - c S_{i+1} |next - delta_i|
        const double partial = (s[i + 1] - s[i]) - cost_rate * s[i] * sign(row[i] - prev) +
                               cost_rate * s[i + 1] * sign(next - row[i]);
        g(b, i) += upstream * partial;
      }
    }
  });
}

double realized_vol(std::span<const double> prefix, const FeatureConfig& config) {
  const std::size_t n_returns = prefix.empty() ? 0 : prefix.size() - 1;
  double vol = config.vol_prior;
  if (n_returns > 0) {
    double mean = 0.0;
    for (std::size_t i = 1; i < prefix.size(); ++i) mean += std::log(prefix[i] / prefix[i - 1]);
    mean /= static_cast<double>(n_returns);
    double var = 0.0;
    for (std::size_t i = 1; i < prefix.size(); ++i) {
      const double r = std::log(prefix[i] / prefix[i - 1]) - mean;
      var += r * r;
    }
    var /= static_cast<double>(n_returns);
    const double realized = std::sqrt(var * config.annualization);
    if (n_returns >= config.min_returns) {
      vol = realized;
    } else {
      const double w = static_cast<double>(n_returns) / static_cast<double>(config.min_returns);
      vol = w * realized + (1.0 - w) * config.vol_prior;
    }
  }
  return std::max(vol, config.vol_floor);
}

FeatureRow features(std::span<const double> prefix, const OptionSpec& spec,
                    const FeatureConfig& config) {
  require(!prefix.empty(), "features need at least S_{t_0}");
  const std::size_t i = prefix.size() - 1;
  const auto n = static_cast<std::size_t>(spec.maturity_days);
  require(i < n, "features are defined for t_0..t_{n-1}");
  FeatureRow row;
  const double spot = prefix.back();
  row.moneyness = spot / spec.strike;
  row.time_to_maturity = static_cast<double>(n - i) / config.annualization;
  row.volatility = realized_vol(prefix, config);
  row.bs_delta = bs_delta(spot, spec.strike, row.volatility, row.time_to_maturity);
  if (spec.is_lookback()) {
    row.max_moneyness = *std::max_element(prefix.begin(), prefix.end()) / spec.strike;
  }
  return row;
}

std::size_t feature_width(const OptionSpec& spec, const FeatureConfig& config) {
  return 4 + (spec.is_lookback() ? 1 : 0) + (config.include_prev_position ? 1 : 0);
}

nn::Matrix feature_matrix(const PathBatch& paths, const OptionSpec& spec,
                          const FeatureConfig& config) {
  const std::size_t n = paths.n_steps();
  require(n == static_cast<std::size_t>(spec.maturity_days),
          "paths have " + std::to_string(n) + " steps but the option matures in " +
              std::to_string(spec.maturity_days) + " days");
  const std::size_t width = 4 + (spec.is_lookback() ? 1 : 0);
  nn::Matrix out(paths.size() * n, width);
  for (std::size_t p = 0; p < paths.size(); ++p) {
    const auto s = paths.path(p);
    for (std::size_t i = 0; i < n; ++i) {
      const FeatureRow f = features(s.subspan(0, i + 1), spec, config);
      auto row = out.row(p * n + i);
      row[0] = f.moneyness;
      row[1] = f.time_to_maturity;
      row[2] = f.volatility;
      row[3] = f.bs_delta;
      if (f.max_moneyness) row[4] = *f.max_moneyness;
    }
  }
  return out;
}

std::vector<double> delta_hedge_baseline(PathView path, const OptionSpec& spec, double vol) {
  const auto n = static_cast<std::size_t>(spec.maturity_days);
  require(path.size() == n + 1, "baseline path length does not match the option maturity");
  std::vector<double> deltas(n);
  for (std::size_t i = 0; i < n; ++i) {
    deltas[i] = bs_delta(path[i], spec.strike, vol, static_cast<double>(n - i) / 250.0);
  }
  return deltas;
}

void write_outcomes_csv(std::ostream& out, std::span<const HedgeOutcome> outcomes) {
  out << "path_id,payoff,gain,cost,pl\n";
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& o = outcomes[i];
    out << i << ',' << format_double(o.payoff) << ',' << format_double(o.trading_gain) << ','
        << format_double(o.cost) << ',' << format_double(o.pl) << '\n';
  }
}

}  // namespace hedgelab::hedge
