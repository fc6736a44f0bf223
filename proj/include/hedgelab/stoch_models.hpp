#pragma once

#include <cstdint>

#include "hedgelab/path_batch.hpp"

namespace hedgelab::models {

inline constexpr double kTradingDaysPerYear = 250.0;

struct GbmParams {
  double mu = 0.0;     // annualized drift
  double sigma = 0.2;  // annualized volatility
  double dt = 1.0 / kTradingDaysPerYear;
  int n_steps = 20;

  void validate() const;
};

struct HestonParams {
  double kappa = 1.0;
  double theta = 0.04;
  double v0 = 0.04;
  double vol_of_vol = 0.2;
  double rho = -0.7;
  double dt = 1.0 / kTradingDaysPerYear;
  int n_steps = 20;

  void validate() const;
  // Sets theta = v0 = vol^2.
  static HestonParams from_initial_vol(double vol, double kappa, double rho);
};

struct GbmBatch {
  PathBatch paths;
  std::size_t regenerated = 0;  // paths discarded for touching S <= 0
};

// Euler step S' = S (1 + mu dt + sigma sqrt(dt) eps), S_0 = 1.
GbmBatch gbm_paths(const GbmParams& params, std::size_t n_paths, std::uint64_t seed,
                   std::size_t workers = 1);

struct HestonBatch {
  PathBatch paths;
  PathBatch variance;  // V_{t_0..t_n} alongside each price path
};

// Andersen's quadratic-exponential variance step with the martingale
// corrected log-price drift (zero rate), so E[S_{t+dt} | S_t] = S_t.
HestonBatch heston_paths(const HestonParams& params, std::size_t n_paths, std::uint64_t seed,
                         std::size_t workers = 1);

// Single QE variance transition, exposed for tests. `normal` drives the
// quadratic branch, `uniform` the exponential branch.
struct QeStep {
  double next_variance;
  double k0_corrected;  // martingale-corrected log drift constant
};
QeStep qe_variance_step(const HestonParams& p, double v, double normal, double uniform);

// Conditional mean and variance of V_{t+dt} given V_t = v under CIR.
struct VarianceMoments {
  double mean;
  double variance;
};
VarianceMoments cir_moments(const HestonParams& p, double v, double dt);

}  // namespace hedgelab::models
