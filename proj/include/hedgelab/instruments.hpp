#pragma once

#include <string>

#include "hedgelab/path_batch.hpp"

namespace hedgelab {

enum class OptionKind { european_call, lookback_call };

struct OptionSpec {
  OptionKind kind = OptionKind::european_call;
  double strike = 1.0;
  int maturity_days = 20;

  void validate() const;
  [[nodiscard]] bool is_lookback() const { return kind == OptionKind::lookback_call; }
  // "european" / "lookback", as used in configs and result tables.
  [[nodiscard]] std::string name() const;
};

OptionKind parse_option_kind(const std::string& name);

// European: max(S_T - K, 0). Lookback: max(max_i S_{t_i} - K, 0) over the
// hedging grid. Requires path.size() == maturity_days + 1.
double payoff(const OptionSpec& spec, PathView path);

// Zero-rate Black-Scholes call. tau_years <= 0 gives the intrinsic value.
double bs_price(double spot, double strike, double vol, double tau_years);
// Phi(d1); at tau_years <= 0 the indicator 1{S > K} (0.5 at the money).
double bs_delta(double spot, double strike, double vol, double tau_years);

double normal_cdf(double x);

}  // namespace hedgelab
