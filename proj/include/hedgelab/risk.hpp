#pragma once

#include <span>
#include <string>

#include "hedgelab/autograd.hpp"

namespace hedgelab::risk {

enum class RiskKind { erm, cvar };

// Utility-oriented risk measure: higher u is better. Both kinds are
// cash-invariant, u(x + c) = u(x) + c.
struct RiskMeasure {
  RiskKind kind = RiskKind::erm;
  double lambda = 1.0;  // ERM risk aversion, > 0
  double alpha = 0.95;  // CVaR confidence, in [0, 1)

  static RiskMeasure erm(double lambda) { return {RiskKind::erm, lambda, 0.95}; }
  static RiskMeasure cvar(double alpha) { return {RiskKind::cvar, 1.0, alpha}; }

  void validate() const;
  // Table label, e.g. "ERM (lambda=1)" or "CVaR (alpha=0.95)".
  [[nodiscard]] std::string label() const;
};

// Parses "erm:1", "erm:10", "cvar:0.95".
RiskMeasure parse_measure(const std::string& text);

// u = -(1/lambda) log mean exp(-lambda x), max-shifted.
double erm(std::span<const double> samples, double lambda);

// Number of lower-tail samples averaged by cvar(): ceil((1 - alpha) m),
// with a 1e-9 slack so that e.g. (1 - 0.95) * 20 counts as exactly 1.
std::size_t cvar_tail_size(std::size_t m, double alpha);

// Mean of the cvar_tail_size() smallest samples; ties broken by index.
double cvar(std::span<const double> samples, double alpha);

double utility(std::span<const double> samples, const RiskMeasure& measure);

// Solves u(PL + p) = u(0) = 0. Cash invariance gives p = -u(PL); the
// defining equation is then re-evaluated and a RuntimeFailure is thrown if
// the residual is not at rounding level.
double indifference_price(std::span<const double> pl, const RiskMeasure& measure);

// Differentiable counterparts over an m x 1 (or 1 x m) sample node; the
// result is a 1x1 node.
nn::Var erm(const nn::Var& samples, double lambda);
nn::Var cvar(const nn::Var& samples, double alpha);
nn::Var utility(const nn::Var& samples, const RiskMeasure& measure);

}  // namespace hedgelab::risk
