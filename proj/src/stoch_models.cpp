#include "hedgelab/stoch_models.hpp"

#include <cmath>
#include <random>
#include <vector>

#include "hedgelab/common.hpp"

namespace hedgelab::models {

namespace {
constexpr double kPsiCritical = 1.5;
constexpr double kGamma1 = 0.5;  // central discretization weights for the
constexpr double kGamma2 = 0.5;  // integrated variance
}  // namespace

void GbmParams::validate() const {
  require(std::isfinite(mu), "gbm mu must be finite");
  require(sigma > 0 && std::isfinite(sigma), "gbm sigma must be positive");
  require(dt > 0, "gbm dt must be positive");
  require(n_steps >= 1, "gbm n_steps must be >= 1");
}

void HestonParams::validate() const {
  require(kappa >= 0 && std::isfinite(kappa), "heston kappa must be >= 0");
  require(theta > 0 && v0 > 0, "heston theta and v0 must be positive");
  require(vol_of_vol > 0 && std::isfinite(vol_of_vol), "heston vol_of_vol must be positive");
  require(rho >= -1 && rho <= 1, "heston rho must lie in [-1, 1]");
  require(dt > 0, "heston dt must be positive");
  require(n_steps >= 1, "heston n_steps must be >= 1");
}

HestonParams HestonParams::from_initial_vol(double vol, double kappa, double rho) {
  HestonParams p;
  p.theta = vol * vol;
  p.v0 = vol * vol;
  p.kappa = kappa;
  p.rho = rho;
  return p;
}

GbmBatch gbm_paths(const GbmParams& params, std::size_t n_paths, std::uint64_t seed,
                   std::size_t workers) {
  params.validate();
  const auto n_points = static_cast<std::size_t>(params.n_steps) + 1;
  GbmBatch out;
  out.paths = PathBatch(n_paths, n_points);
  std::vector<std::size_t> regenerated(n_paths, 0);
  const double drift = params.mu * params.dt;
  const double diffusion = params.sigma * std::sqrt(params.dt);
  parallel_for(n_paths, workers, [&](std::size_t i) {
    Engine rng = make_engine(seed, i);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto path = out.paths.path(i);
    bool ok = false;
    while (!ok) {
      ok = true;
      path[0] = 1.0;
      for (std::size_t j = 1; j < n_points; ++j) {
        path[j] = path[j - 1] * (1.0 + drift + diffusion * normal(rng));
        if (!(path[j] > 0.0)) ok = false;
      }
      if (!ok) ++regenerated[i];
    }
  });
  for (std::size_t r : regenerated) out.regenerated += r;
  return out;
}

VarianceMoments cir_moments(const HestonParams& p, double v, double dt) {
  const double e = std::exp(-p.kappa * dt);
  const double one_minus_e = -std::expm1(-p.kappa * dt);
  // (1 - e^{-kappa dt}) / kappa, continuous at kappa = 0.
  const double ratio = p.kappa > 0 ? one_minus_e / p.kappa : dt;
  const double s2v = p.vol_of_vol * p.vol_of_vol;
  return {p.theta + (v - p.theta) * e,
          v * s2v * e * ratio + 0.5 * p.theta * s2v * one_minus_e * ratio};
}

namespace {

struct LogDriftConstants {
  double k0, k1, k2, k3, k4;
};

LogDriftConstants log_constants(const HestonParams& p) {
  const double dt = p.dt;
  const double s = p.vol_of_vol;
  const double common = p.kappa * p.rho / s - 0.5;
  return {-p.rho * p.kappa * p.theta * dt / s, kGamma1 * dt * common - p.rho / s,
          kGamma2 * dt * common + p.rho / s, kGamma1 * dt * (1 - p.rho * p.rho),
          kGamma2 * dt * (1 - p.rho * p.rho)};
}

}  // namespace

QeStep qe_variance_step(const HestonParams& p, double v, double normal, double uniform) {
  const auto k = log_constants(p);
  const double big_a = k.k2 + 0.5 * k.k4;
  const double carry = (k.k1 + 0.5 * k.k3) * v;
  const auto [m, s2] = cir_moments(p, v, p.dt);

  if (!(m > 1e-300)) {
    // Absorbed at zero (only possible for kappa = 0): V stays 0.
    return {0.0, -carry};
  }
  const double psi = s2 / (m * m);
  if (psi <= kPsiCritical) {
    const double inv = 2.0 / psi;
    const double b2 = inv - 1.0 + std::sqrt(inv) * std::sqrt(inv - 1.0);
    const double b = std::sqrt(b2);
    const double a = m / (1.0 + b2);
    const double next = a * (b + normal) * (b + normal);
    double k0 = k.k0;
    if (big_a < 1.0 / (2.0 * a)) {
      const double q = 1.0 - 2.0 * big_a * a;
      k0 = -big_a * b2 * a / q + 0.5 * std::log(q) - carry;
    }
    return {next, k0};
  }
  const double prob_zero = (psi - 1.0) / (psi + 1.0);
  const double beta = (1.0 - prob_zero) / m;
  const double next =
      uniform <= prob_zero ? 0.0 : std::log((1.0 - prob_zero) / (1.0 - uniform)) / beta;
  double k0 = k.k0;
  if (big_a < beta) {
    k0 = -std::log(prob_zero + beta * (1.0 - prob_zero) / (beta - big_a)) - carry;
  }
  return {next, k0};
}

HestonBatch heston_paths(const HestonParams& params, std::size_t n_paths, std::uint64_t seed,
                         std::size_t workers) {
  params.validate();
  const auto n_points = static_cast<std::size_t>(params.n_steps) + 1;
  const auto k = log_constants(params);
  HestonBatch out;
  out.paths = PathBatch(n_paths, n_points);
  out.variance = PathBatch(n_paths, n_points);
  parallel_for(n_paths, workers, [&](std::size_t i) {
    Engine rng = make_engine(seed, i);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    auto s = out.paths.path(i);
    auto var = out.variance.path(i);
    s[0] = 1.0;
    var[0] = params.v0;
    double log_s = 0.0;
    for (std::size_t j = 1; j < n_points; ++j) {
      const double zv = normal(rng);
      const double u = unif(rng);
      const double zx = normal(rng);
      const double v = var[j - 1];
      const QeStep step = qe_variance_step(params, v, zv, u);
      const double vn = step.next_variance;
      const double diffusion_var = std::max(0.0, k.k3 * v + k.k4 * vn);
      log_s += step.k0_corrected + k.k1 * v + k.k2 * vn + std::sqrt(diffusion_var) * zx;
      var[j] = vn;
      s[j] = std::exp(log_s);
    }
  });
  return out;
}

}  // namespace hedgelab::models
