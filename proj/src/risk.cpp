#include "hedgelab/risk.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "hedgelab/common.hpp"

namespace hedgelab::risk {

void RiskMeasure::validate() const {
  if (kind == RiskKind::erm) {
    require(lambda > 0 && std::isfinite(lambda), "ERM lambda must be positive");
  } else {
    require(alpha >= 0 && alpha < 1, "CVaR alpha must lie in [0, 1)");
  }
}

std::string RiskMeasure::label() const {
  if (kind == RiskKind::erm) return "ERM (lambda=" + format_double(lambda) + ")";
  return "CVaR (alpha=" + format_double(alpha) + ")";
}

RiskMeasure parse_measure(const std::string& text) {
  const auto colon = text.find(':');
  require(colon != std::string::npos, "risk measure '" + text + "' must look like erm:1 or cvar:0.95");
  const std::string kind = text.substr(0, colon);
  double value = 0.0;
  try {
    value = std::stod(text.substr(colon + 1));
  } catch (const std::exception&) {
    throw ValidationError("risk measure '" + text + "': bad parameter");
  }
  RiskMeasure m;
  if (kind == "erm") {
    m = RiskMeasure::erm(value);
  } else if (kind == "cvar") {
    m = RiskMeasure::cvar(value);
  } else {
    throw ValidationError("unknown risk measure kind '" + kind + "'");
  }
  m.validate();
  return m;
}

double erm(std::span<const double> samples, double lambda) {
  require(!samples.empty(), "erm of an empty sample");
  require(lambda > 0, "erm lambda must be positive");
  double shift = -lambda * samples[0];
  for (double x : samples) shift = std::max(shift, -lambda * x);
  double acc = 0.0;
  for (double x : samples) acc += std::exp(-lambda * x - shift);
  const double log_mean_exp = shift + std::log(acc / static_cast<double>(samples.size()));
  return -log_mean_exp / lambda;
}

std::size_t cvar_tail_size(std::size_t m, double alpha) {
  const double raw = (1.0 - alpha) * static_cast<double>(m);
  const auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::min(k, m);
}

namespace {
// Indices of the k smallest samples, ordered by (value, index).
std::vector<std::size_t> lower_tail(std::span<const double> samples, std::size_t k) {
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto less = [&](std::size_t a, std::size_t b) {
    return samples[a] != samples[b] ? samples[a] < samples[b] : a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(k), idx.end(), less);
  idx.resize(k);
  return idx;
}
}  // namespace

double cvar(std::span<const double> samples, double alpha) {
  require(!samples.empty(), "cvar of an empty sample");
  require(alpha >= 0 && alpha < 1, "cvar alpha must lie in [0, 1)");
  const std::size_t k = cvar_tail_size(samples.size(), alpha);
  require(k >= 1, "cvar tail is empty for alpha=" + format_double(alpha) + " and " +
                      std::to_string(samples.size()) + " samples");
  double total = 0.0;
  for (std::size_t i : lower_tail(samples, k)) total += samples[i];
  return total / static_cast<double>(k);
}

double utility(std::span<const double> samples, const RiskMeasure& measure) {
  measure.validate();
  return measure.kind == RiskKind::erm ? erm(samples, measure.lambda)
                                       : cvar(samples, measure.alpha);
}

double indifference_price(std::span<const double> pl, const RiskMeasure& measure) {
  const double price = -utility(pl, measure);
  std::vector<double> shifted(pl.begin(), pl.end());
  double scale = std::abs(price);
  for (double& x : shifted) {
    scale = std::max(scale, std::abs(x));
    x += price;
  }
  const double residual = utility(shifted, measure);
  if (!(std::abs(residual) <= 1e-9 * (1.0 + scale))) {
    throw RuntimeFailure("indifference price check failed: u(PL + p) = " +
                         format_double(residual));
  }
  return price;
}

nn::Var erm(const nn::Var& samples, double lambda) {
  const auto& x = samples.value().values();
  require(!x.empty(), "erm of an empty sample");
  require(lambda > 0, "erm lambda must be positive");
  const double u = erm(std::span<const double>(x), lambda);
  // du/dx_i = softmax(-lambda x)_i
  std::vector<double> weights(x.size());
  double shift = -lambda * x[0];
  for (double v : x) shift = std::max(shift, -lambda * v);
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    weights[i] = std::exp(-lambda * x[i] - shift);
    total += weights[i];
  }
  for (auto& w : weights) w /= total;
  return nn::make_op(nn::Matrix::scalar(u), {samples},
                     [weights = std::move(weights)](nn::Node& self) {
                       nn::Matrix& g = self.parents[0]->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * weights[i];
                     });
}

nn::Var cvar(const nn::Var& samples, double alpha) {
  const auto& x = samples.value().values();
  require(!x.empty(), "cvar of an empty sample");
  require(alpha >= 0 && alpha < 1, "cvar alpha must lie in [0, 1)");
  const std::size_t k = cvar_tail_size(x.size(), alpha);
  require(k >= 1, "cvar tail is empty");
  auto tail = lower_tail(std::span<const double>(x), k);
  double total = 0.0;
  for (std::size_t i : tail) total += x[i];
  const double weight = 1.0 / static_cast<double>(k);
  return nn::make_op(nn::Matrix::scalar(total * weight), {samples},
                     [tail = std::move(tail), weight](nn::Node& self) {
                       nn::Matrix& g = self.parents[0]->grad_buffer();
                       for (std::size_t i : tail) g[i] += self.grad[0] * weight;
                     });
}

nn::Var utility(const nn::Var& samples, const RiskMeasure& measure) {
  measure.validate();
  return measure.kind == RiskKind::erm ? erm(samples, measure.lambda)
                                       : cvar(samples, measure.alpha);
}

}  // namespace hedgelab::risk
