#include "hedgelab/instruments.hpp"

#include <algorithm>
#include <cmath>

#include "hedgelab/common.hpp"

namespace hedgelab {

void OptionSpec::validate() const {
  require(strike > 0 && std::isfinite(strike), "option strike must be positive");
  require(maturity_days >= 1, "option maturity_days must be >= 1");
}

std::string OptionSpec::name() const { return is_lookback() ? "lookback" : "european"; }

OptionKind parse_option_kind(const std::string& name) {
  if (name == "european" || name == "european_call") return OptionKind::european_call;
  if (name == "lookback" || name == "lookback_call") return OptionKind::lookback_call;
  throw ValidationError("unknown option kind '" + name + "' (expected european or lookback)");
}

double payoff(const OptionSpec& spec, PathView path) {
  require(path.size() == static_cast<std::size_t>(spec.maturity_days) + 1,
          "path has " + std::to_string(path.size()) + " points, option needs " +
              std::to_string(spec.maturity_days + 1));
  const double reference =
      spec.is_lookback() ? *std::max_element(path.begin(), path.end()) : path.back();
  return std::max(reference - spec.strike, 0.0);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double bs_price(double spot, double strike, double vol, double tau_years) {
  if (spot <= 0.0) return 0.0;
  if (tau_years <= 0.0 || vol <= 0.0) return std::max(spot - strike, 0.0);
  const double sd = vol * std::sqrt(tau_years);
  const double d1 = (std::log(spot / strike) + 0.5 * sd * sd) / sd;
  return spot * normal_cdf(d1) - strike * normal_cdf(d1 - sd);
}

double bs_delta(double spot, double strike, double vol, double tau_years) {
  if (spot <= 0.0) return 0.0;
  if (tau_years <= 0.0 || vol <= 0.0) {
    if (spot > strike) return 1.0;
    return spot < strike ? 0.0 : 0.5;
  }
  const double sd = vol * std::sqrt(tau_years);
  return normal_cdf((std::log(spot / strike) + 0.5 * sd * sd) / sd);
}

}  // namespace hedgelab
