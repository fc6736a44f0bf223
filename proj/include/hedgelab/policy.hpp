#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "hedgelab/autograd.hpp"
#include "hedgelab/hedge.hpp"
#include "hedgelab/instruments.hpp"
#include "hedgelab/path_batch.hpp"
#include "hedgelab/risk.hpp"

namespace hedgelab::nn {

// Hedging policy: (n_layers - 1) blocks of Linear -> LayerNorm -> ReLU of
// width `hidden`, then a linear head producing one position per row.
// Hidden weights use He-uniform fan-in init; the head starts at zero, so an
// untrained policy holds no position.
class MlpPolicy {
 public:
  MlpPolicy(std::size_t input_dim, std::uint64_t seed, std::size_t hidden = 32,
            std::size_t n_layers = 4, double ln_eps = 1e-5);

  [[nodiscard]] Var forward(const Var& features) const;
  // Gradient-free forward pass.
  [[nodiscard]] Matrix predict(const Matrix& features) const;

  [[nodiscard]] const std::vector<Var>& parameters() const { return params_; }
  [[nodiscard]] std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);
  [[nodiscard]] bool finite() const;

  [[nodiscard]] std::size_t input_dim() const { return input_dim_; }
  [[nodiscard]] std::size_t hidden() const { return hidden_; }
  [[nodiscard]] std::size_t n_layers() const { return n_layers_; }

  // Versioned little-endian checkpoint carrying `config_hash`.
  void save(const std::filesystem::path& file, std::uint64_t config_hash) const;
  static MlpPolicy load(const std::filesystem::path& file, std::uint64_t* config_hash = nullptr);

 private:
  std::size_t input_dim_, hidden_, n_layers_;
  double ln_eps_;
  // Per hidden block: weight, bias, ln gain, ln bias. Head: weight, bias.
  std::vector<Var> params_;
};

class Adam {
 public:
  explicit Adam(std::vector<Var> params, double learning_rate, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  void zero_grad();
  void step();
  [[nodiscard]] std::size_t steps() const { return t_; }
  [[nodiscard]] double learning_rate() const { return lr_; }

 private:
  std::vector<Var> params_;
  std::vector<Matrix> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

}  // namespace hedgelab::nn

namespace hedgelab::training {

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 100;
  std::size_t minibatch = 256;
  std::uint64_t seed = 0;
  double cost_rate = 0.0;
  hedge::FeatureConfig features;
  std::size_t workers = 1;  // validation evaluation threads

  void validate() const;
};

struct TrainReport {
  std::vector<double> val_prices;   // one per completed epoch
  std::vector<double> train_losses; // mean minibatch loss per epoch
  std::size_t best_epoch = 0;
  double best_price = 0.0;
  std::vector<std::string> diagnostics;

  [[nodiscard]] bool empty() const { return val_prices.empty(); }
};

// Positions for every (path, step) of `paths` as a B x n node, using the
// precomputed market features (rows p * n + i). With
// features.include_prev_position the rollout is sequential and feeds the
// previous output back as an extra input.
nn::Var positions(const nn::MlpPolicy& policy, const nn::Matrix& market_features,
                  std::size_t n_paths, std::size_t n_steps, const hedge::FeatureConfig& features);

// Loss -u(PL) on a batch, as a graph node (used by training and the
// gradient checks).
nn::Var loss_graph(const nn::MlpPolicy& policy, const PathBatch& paths,
                   const nn::Matrix& market_features, std::span<const double> payoffs,
                   const risk::RiskMeasure& measure, double cost_rate,
                   const hedge::FeatureConfig& features);

std::vector<hedge::HedgeOutcome> evaluate_outcomes(const nn::MlpPolicy& policy,
                                                   const PathBatch& paths, const OptionSpec& spec,
                                                   double cost_rate,
                                                   const hedge::FeatureConfig& features,
                                                   std::size_t workers = 1);

// Indifference price of the policy's P&L on `paths`.
double evaluate_price(const nn::MlpPolicy& policy, const PathBatch& paths, const OptionSpec& spec,
                      const risk::RiskMeasure& measure, double cost_rate,
                      const hedge::FeatureConfig& features, std::size_t workers = 1);

// Adam on minibatch losses -u(PL), reshuffled each epoch. After every epoch
// the validation price is recorded; the policy ends at the best epoch's
// parameters. A non-finite loss aborts the epoch and restores the
// parameters from its start.
TrainReport train(nn::MlpPolicy& policy, const PathBatch& train_paths,
                  const PathBatch& validation_paths, const OptionSpec& spec,
                  const risk::RiskMeasure& measure, const TrainConfig& config);

// CSV: epoch,val_price
void write_report_csv(std::ostream& out, const TrainReport& report);

}  // namespace hedgelab::training
