#include "hedgelab/policy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "hedgelab/common.hpp"

namespace hedgelab::nn {

namespace {
constexpr std::array<char, 8> kMagic{'H', 'L', 'P', 'O', 'L', 'I', 'C', 'Y'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ValidationError("truncated policy checkpoint");
  return value;
}
}  // namespace

MlpPolicy::MlpPolicy(std::size_t input_dim, std::uint64_t seed, std::size_t hidden,
                     std::size_t n_layers, double ln_eps)
    : input_dim_(input_dim), hidden_(hidden), n_layers_(n_layers), ln_eps_(ln_eps) {
  require(input_dim >= 1 && hidden >= 1 && n_layers >= 2, "policy needs input, hidden >= 1 and >= 2 layers");
  Engine rng = make_engine(seed, 0x706f6c);
  std::size_t fan_in = input_dim;
  for (std::size_t l = 0; l + 1 < n_layers; ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> init(-bound, bound);
    Matrix w(fan_in, hidden);
    for (auto& v : w.values()) v = init(rng);
    params_.push_back(parameter(std::move(w)));
    params_.push_back(parameter(Matrix(1, hidden, 0.0)));
    params_.push_back(parameter(Matrix(1, hidden, 1.0)));
    params_.push_back(parameter(Matrix(1, hidden, 0.0)));
    fan_in = hidden;
  }
  params_.push_back(parameter(Matrix(hidden, 1, 0.0)));
  params_.push_back(parameter(Matrix(1, 1, 0.0)));
}

Var MlpPolicy::forward(const Var& features) const {
  require(features.value().cols() == input_dim_,
          "policy expects " + std::to_string(input_dim_) + " features, got " +
              std::to_string(features.value().cols()));
  Var h = features;
  std::size_t k = 0;
  for (std::size_t l = 0; l + 1 < n_layers_; ++l, k += 4) {
    h = add_row(matmul(h, params_[k]), params_[k + 1]);
    h = relu(layer_norm(h, params_[k + 2], params_[k + 3], ln_eps_));
  }
  return add_row(matmul(h, params_[k]), params_[k + 1]);
}

Matrix MlpPolicy::predict(const Matrix& features) const {
  NoGradGuard guard;
  return forward(constant(features)).value();
}

std::vector<Matrix> MlpPolicy::snapshot() const {
  std::vector<Matrix> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value());
  return out;
}

void MlpPolicy::restore(const std::vector<Matrix>& values) {
  require(values.size() == params_.size(), "snapshot does not match the policy");
  for (std::size_t i = 0; i < values.size(); ++i) {
    require(values[i].same_shape(params_[i].value()), "snapshot shape mismatch");
    params_[i].mutable_value() = values[i];
  }
}

bool MlpPolicy::finite() const {
  for (const auto& p : params_) {
    for (double v : p.value().values()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

void MlpPolicy::save(const std::filesystem::path& file, std::uint64_t config_hash) const {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write checkpoint " + file.string());
  out.write(kMagic.data(), kMagic.size());
  write_pod<std::uint32_t>(out, kCheckpointVersion);
  write_pod<std::uint64_t>(out, config_hash);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(input_dim_));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(hidden_));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(n_layers_));
  write_pod<double>(out, ln_eps_);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params_.size()));
  for (const auto& p : params_) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p.value().rows()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p.value().cols()));
    out.write(reinterpret_cast<const char*>(p.value().values().data()),
              static_cast<std::streamsize>(p.value().size() * sizeof(double)));
  }
  if (!out) throw RuntimeFailure("failed writing checkpoint " + file.string());
}

MlpPolicy MlpPolicy::load(const std::filesystem::path& file, std::uint64_t* config_hash) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + file.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw ValidationError(file.string() + " is not a policy checkpoint");
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto hash = read_pod<std::uint64_t>(in);
  const auto input_dim = read_pod<std::uint32_t>(in);
  const auto hidden = read_pod<std::uint32_t>(in);
  const auto n_layers = read_pod<std::uint32_t>(in);
  const auto eps = read_pod<double>(in);
  MlpPolicy policy(input_dim, 0, hidden, n_layers, eps);
  const auto count = read_pod<std::uint32_t>(in);
  if (count != policy.params_.size()) throw ValidationError("checkpoint parameter count mismatch");
  std::vector<Matrix> values;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto rows = read_pod<std::uint32_t>(in);
    const auto cols = read_pod<std::uint32_t>(in);
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.values().data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw ValidationError("truncated policy checkpoint");
    values.push_back(std::move(m));
  }
  policy.restore(values);
  if (config_hash) *config_hash = hash;
  return policy;
}

Adam::Adam(std::vector<Var> params, double learning_rate, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
  require(learning_rate > 0, "learning rate must be positive");
  for (const auto& p : params_) {
    m_.emplace_back(p.value().rows(), p.value().cols());
    v_.emplace_back(p.value().rows(), p.value().cols());
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const Matrix& g = params_[k].grad();
    if (!g.same_shape(params_[k].value())) continue;
    Matrix& w = params_[k].mutable_value();
    Matrix& m = m_[k];
    Matrix& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

}  // namespace hedgelab::nn

namespace hedgelab::training {

using nn::Matrix;
using nn::Var;

void TrainConfig::validate() const {
  require(learning_rate > 0 && std::isfinite(learning_rate), "learning rate must be positive");
  require(epochs >= 0, "epochs must be >= 0");
  require(minibatch >= 1, "minibatch must be >= 1");
  require(cost_rate >= 0, "cost rate must be nonnegative");
}

namespace {

Matrix gather_rows(const Matrix& features, std::span<const std::size_t> paths, std::size_t n) {
  Matrix out(paths.size() * n, features.cols());
  for (std::size_t b = 0; b < paths.size(); ++b) {
    const double* src = features.row(paths[b] * n).data();
    std::copy(src, src + n * features.cols(), out.row(b * n).data());
  }
  return out;
}

std::vector<double> payoffs_of(const PathBatch& paths, const OptionSpec& spec) {
  std::vector<double> out(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i) out[i] = payoff(spec, paths.path(i));
  return out;
}

}  // namespace

Var positions(const nn::MlpPolicy& policy, const Matrix& market_features, std::size_t n_paths,
              std::size_t n_steps, const hedge::FeatureConfig& features) {
  require(market_features.rows() == n_paths * n_steps, "feature rows do not match paths x steps");
  if (!features.include_prev_position) {
    return nn::reshape(policy.forward(nn::constant(market_features)), n_paths, n_steps);
  }
  std::vector<Var> columns;
  columns.reserve(n_steps);
  Var previous = nn::constant(Matrix(n_paths, 1, 0.0));
  for (std::size_t i = 0; i < n_steps; ++i) {
    Matrix step_rows(n_paths, market_features.cols());
    for (std::size_t b = 0; b < n_paths; ++b) {
      const auto src = market_features.row(b * n_steps + i);
      std::copy(src.begin(), src.end(), step_rows.row(b).begin());
    }
    Var out = policy.forward(nn::concat_cols({nn::constant(std::move(step_rows)), previous}));
    columns.push_back(out);
    previous = out;
  }
  return nn::concat_cols(columns);
}

Var loss_graph(const nn::MlpPolicy& policy, const PathBatch& paths, const Matrix& market_features,
               std::span<const double> payoffs, const risk::RiskMeasure& measure,
               double cost_rate, const hedge::FeatureConfig& features) {
  const Var deltas = positions(policy, market_features, paths.size(), paths.n_steps(), features);
  const Var pl = hedge::pl_graph(deltas, paths, payoffs, cost_rate);
  return nn::scale(risk::utility(pl, measure), -1.0);
}

std::vector<hedge::HedgeOutcome> evaluate_outcomes(const nn::MlpPolicy& policy,
                                                   const PathBatch& paths, const OptionSpec& spec,
                                                   double cost_rate,
                                                   const hedge::FeatureConfig& features,
                                                   std::size_t workers) {
  const std::size_t n = paths.n_steps();
  const Matrix all_features = hedge::feature_matrix(paths, spec, features);
  std::vector<hedge::HedgeOutcome> out(paths.size());
  constexpr std::size_t kChunk = 1024;
  const std::size_t n_chunks = (paths.size() + kChunk - 1) / kChunk;
  parallel_for(n_chunks, workers, [&](std::size_t c) {
    nn::NoGradGuard guard;
    const std::size_t begin = c * kChunk;
    const std::size_t end = std::min(paths.size(), begin + kChunk);
    std::vector<std::size_t> rows(end - begin);
    std::iota(rows.begin(), rows.end(), begin);
    const Matrix x = gather_rows(all_features, rows, n);
    const Var deltas = positions(policy, x, rows.size(), n, features);
    for (std::size_t b = 0; b < rows.size(); ++b) {
      out[begin + b] = hedge::compute_pl(paths.path(begin + b), deltas.value().row(b), spec,
                                         cost_rate);
    }
  });
  return out;
}

double evaluate_price(const nn::MlpPolicy& policy, const PathBatch& paths, const OptionSpec& spec,
                      const risk::RiskMeasure& measure, double cost_rate,
                      const hedge::FeatureConfig& features, std::size_t workers) {
  const auto outcomes = evaluate_outcomes(policy, paths, spec, cost_rate, features, workers);
  std::vector<double> pl(outcomes.size());
  for (std::size_t i = 0; i < outcomes.size(); ++i) pl[i] = outcomes[i].pl;
  return risk::indifference_price(pl, measure);
}

TrainReport train(nn::MlpPolicy& policy, const PathBatch& train_paths,
                  const PathBatch& validation_paths, const OptionSpec& spec,
                  const risk::RiskMeasure& measure, const TrainConfig& config) {
  config.validate();
  measure.validate();
  spec.validate();
  require(!train_paths.empty(), "training needs at least one path");
  require(!validation_paths.empty(), "training needs a nonempty validation set");
  require(policy.input_dim() == hedge::feature_width(spec, config.features),
          "policy input width does not match the feature set");

  TrainReport report;
  if (config.epochs == 0) return report;

  const std::size_t n = train_paths.n_steps();
  const Matrix features = hedge::feature_matrix(train_paths, spec, config.features);
  const std::vector<double> payoffs = payoffs_of(train_paths, spec);

  nn::Adam adam(policy.parameters(), config.learning_rate);
  Engine shuffle_rng = make_engine(config.seed, 0x73687566);
  std::vector<std::size_t> order(train_paths.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<Matrix> best_params = policy.snapshot();
  bool have_best = false;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<Matrix> epoch_start = policy.snapshot();
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_total = 0.0;
    std::size_t batches = 0;
    bool aborted = false;
    for (std::size_t begin = 0; begin < order.size(); begin += config.minibatch) {
      const std::size_t end = std::min(order.size(), begin + config.minibatch);
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      const PathBatch batch = train_paths.subset(rows);
      std::vector<double> batch_payoffs(rows.size());
      for (std::size_t b = 0; b < rows.size(); ++b) batch_payoffs[b] = payoffs[rows[b]];
      const Matrix x = gather_rows(features, rows, n);

      adam.zero_grad();
      const Var loss =
          loss_graph(policy, batch, x, batch_payoffs, measure, config.cost_rate, config.features);
      if (!std::isfinite(loss.item())) {
        aborted = true;
        break;
      }
      nn::backward(loss);
      adam.step();
      if (!policy.finite()) {
        aborted = true;
        break;
      }
      loss_total += loss.item();
      ++batches;
    }
    if (aborted) {
      policy.restore(epoch_start);
      report.diagnostics.push_back("epoch " + std::to_string(epoch) +
                                   ": non-finite loss or parameters, epoch aborted and "
                                   "parameters restored");
    }
    report.train_losses.push_back(batches ? loss_total / static_cast<double>(batches)
                                          : std::numeric_limits<double>::quiet_NaN());

    double price = std::numeric_limits<double>::infinity();
    try {
      price = evaluate_price(policy, validation_paths, spec, measure, config.cost_rate,
                             config.features, config.workers);
    } catch (const RuntimeFailure& e) {
      report.diagnostics.push_back("epoch " + std::to_string(epoch) + ": " + e.what());
    }
    if (!std::isfinite(price)) price = std::numeric_limits<double>::infinity();
    report.val_prices.push_back(price);
    if (!have_best || price < report.best_price) {
      have_best = true;
      report.best_price = price;
      report.best_epoch = static_cast<std::size_t>(epoch);
      best_params = policy.snapshot();
    }
  }
  policy.restore(best_params);
  return report;
}

void write_report_csv(std::ostream& out, const TrainReport& report) {
  out << "epoch,val_price\n";
  for (std::size_t e = 0; e < report.val_prices.size(); ++e) {
    out << e << ',' << format_double(report.val_prices[e]) << '\n';
  }
}

}  // namespace hedgelab::training
