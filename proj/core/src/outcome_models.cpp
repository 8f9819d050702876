#include "tiltlab/outcome_models.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <numeric>

#include <Eigen/Dense>

#include "tiltlab/rng.hpp"

namespace tiltlab::outcome {

namespace {

constexpr std::uint64_t kSplitStream = 0x53504C4954ULL;
constexpr std::uint64_t kInitStream = 0x494E4954ULL;
constexpr std::uint64_t kEpochStream = 0x45504F4348ULL;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double standard_normal(Rng& rng) {
  // Box-Muller; 1 - u keeps the log argument in (0, 1].
  const double u = 1.0 - uniform01(rng);
  const double v = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
}

// Forward pass for one example. `hidden_out` receives the tanh activations (mlp only).
double forward(const WinModel& m, std::span<const double> w, const FeatureVector& x,
               std::vector<double>& hidden_out) {
  const std::size_t d = m.input_dim;
  if (m.kind == WinModelKind::logistic) {
    double z = w[d];
    for (const auto k : x.active) z += w[k];
    return z;
  }
  const std::size_t h = m.hidden;
  const double* b1 = w.data() + h * d;
  const double* w2 = b1 + h;
  const double b2 = w2[h];
  hidden_out.resize(h);
  double z = b2;
  for (std::size_t j = 0; j < h; ++j) {
    double a = b1[j];
    const double* row = w.data() + j * d;
    for (const auto k : x.active) a += row[k];
    hidden_out[j] = std::tanh(a);
    z += w2[j] * hidden_out[j];
  }
  return z;
}

// Adds d(loss_i)/dw for one example, scaled by `scale`, and returns loss_i.
double accumulate(const WinModel& m, std::span<const double> w, const FeatureVector& x, int y,
                  double scale, std::vector<double>& grad, std::vector<double>& hidden) {
  const double z = forward(m, w, x, hidden);
  const double loss = softplus(z) - static_cast<double>(y) * z;
  const double dz = scale * (sigmoid(z) - static_cast<double>(y));
  const std::size_t d = m.input_dim;
  if (m.kind == WinModelKind::logistic) {
    for (const auto k : x.active) grad[k] += dz;
    grad[d] += dz;
    return loss;
  }
  const std::size_t h = m.hidden;
  const double* w2 = w.data() + h * d + h;
  for (std::size_t j = 0; j < h; ++j) {
    grad[h * d + h + j] += dz * hidden[j];
    const double da = dz * w2[j] * (1.0 - hidden[j] * hidden[j]);
    grad[h * d + j] += da;
    for (const auto k : x.active) grad[j * d + k] += da;
  }
  grad[h * d + 2 * h] += dz;
  return loss;
}

void check_features(const WinModel& m, const FeatureVector& x) {
  for (const auto k : x.active) {
    if (k >= m.input_dim) {
      throw DataError("feature index " + std::to_string(k) + " outside model dimension " +
                      std::to_string(m.input_dim));
    }
  }
}

double accuracy(const WinModel& m, std::span<const FeatureVector> xs, std::span<const int> ys,
                std::span<const std::size_t> rows) {
  if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t hits = 0;
  for (const auto i : rows) {
    const int predicted = m.predict(xs[i]) >= 0.5 ? 1 : 0;
    if (predicted == ys[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

}  // namespace

FeatureEncoder::FeatureEncoder(std::vector<std::string> players) : players_(std::move(players)) {
  std::sort(players_.begin(), players_.end());
  players_.erase(std::unique(players_.begin(), players_.end()), players_.end());
}

FeatureEncoder FeatureEncoder::from_decisions(
    std::span<const extract::PreflopDecision> decisions) {
  std::vector<std::string> players;
  for (const auto& d : decisions) players.push_back(d.player);
  return FeatureEncoder(std::move(players));
}

std::size_t FeatureEncoder::sklansky_seat_offset() const {
  return player_seat_offset() + players_.size() * kSeats;
}

std::size_t FeatureEncoder::dimension() const {
  return sklansky_seat_offset() + kSklanskyGroups * kSeats;
}

FeatureVector FeatureEncoder::encode(const extract::PreflopDecision& decision) const {
  if (!decision.sklansky) throw DataError("decision has no sklansky rank to encode");
  const int sk = *decision.sklansky;
  const int seat = decision.seat;
  if (sk < 1 || sk > kSklanskyGroups) throw DataError("sklansky rank outside 1..9");
  if (seat < 1 || seat > kSeats) throw DataError("seat outside 1..6");
  const auto s0 = static_cast<std::size_t>(sk - 1);
  const auto t0 = static_cast<std::size_t>(seat - 1);
  FeatureVector x;
  x.active.push_back(sklansky_offset() + s0);
  x.active.push_back(seat_offset() + t0);
  const auto it = std::lower_bound(players_.begin(), players_.end(), decision.player);
  if (it != players_.end() && *it == decision.player) {
    const auto p = static_cast<std::size_t>(it - players_.begin());
    x.active.push_back(player_seat_offset() + p * kSeats + t0);
  }
  x.active.push_back(sklansky_seat_offset() + s0 * kSeats + t0);
  return x;
}

std::string_view to_string(WinModelKind kind) {
  return kind == WinModelKind::logistic ? "logistic" : "mlp";
}

WinModelKind parse_win_model_kind(std::string_view text) {
  if (text == "logistic") return WinModelKind::logistic;
  if (text == "mlp") return WinModelKind::mlp;
  throw DataError("unknown win model kind '" + std::string(text) + "'");
}

std::size_t WinModel::parameter_count() const {
  if (kind == WinModelKind::logistic) return input_dim + 1;
  return hidden * input_dim + 2 * hidden + 1;
}

double WinModel::predict(const FeatureVector& x) const {
  if (!fitted()) throw DataError("win model has not been fitted");
  check_features(*this, x);
  std::vector<double> hidden_buf;
  const double p = sigmoid(forward(*this, weights, x, hidden_buf));
  constexpr double kEdge = 1e-12;
  return std::clamp(p, kEdge, 1.0 - kEdge);
}

double WinModel::loss(std::span<const FeatureVector> xs, std::span<const int> ys, double l2,
                      std::vector<double>* gradient) const {
  if (xs.size() != ys.size() || xs.empty()) {
    throw DataError("win model loss needs matching, non-empty features and labels");
  }
  std::vector<double> grad(weights.size(), 0.0);
  std::vector<double> hidden_buf;
  const double scale = 1.0 / static_cast<double>(xs.size());
  double total = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    check_features(*this, xs[i]);
    total += accumulate(*this, weights, xs[i], ys[i], scale, grad, hidden_buf);
  }
  double penalty = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    penalty += weights[k] * weights[k];
    grad[k] += l2 * weights[k];
  }
  if (gradient) *gradient = std::move(grad);
  return total * scale + 0.5 * l2 * penalty;
}

WinModel initial_win_model(std::size_t input_dim, const WinModelConfig& config) {
  if (input_dim == 0) throw DataError("win model needs at least one feature");
  WinModel m;
  m.kind = config.kind;
  m.input_dim = input_dim;
  m.hidden = config.kind == WinModelKind::mlp ? config.hidden : 0;
  if (config.kind == WinModelKind::mlp && m.hidden == 0) {
    throw DataError("mlp win model needs a hidden layer");
  }
  m.seed = config.seed;
  m.weights.assign(m.parameter_count(), 0.0);
  if (m.kind == WinModelKind::mlp) {
    Rng rng(derive_seed(config.seed, kInitStream));
    const std::size_t d = m.input_dim;
    const std::size_t h = m.hidden;
    // Each example has four active inputs, so unit-scale first-layer weights
    // keep tanh out of saturation at the start.
    for (std::size_t k = 0; k < h * d; ++k) m.weights[k] = 0.5 * standard_normal(rng);
    const double out_scale = 1.0 / std::sqrt(static_cast<double>(h));
    for (std::size_t j = 0; j < h; ++j) m.weights[h * d + h + j] = out_scale * standard_normal(rng);
  }
  return m;
}

WinModel fit_win_model(std::span<const FeatureVector> xs, std::span<const int> ys,
                       std::size_t input_dim, const WinModelConfig& config) {
  if (xs.empty() || xs.size() != ys.size()) {
    throw DataError("win model training needs matching, non-empty features and labels");
  }
  if (config.test_fraction < 0.0 || config.test_fraction >= 1.0) {
    throw DataError("test fraction must lie in [0, 1)");
  }
  if (config.batch_size == 0 || config.epochs < 0) throw DataError("invalid win model schedule");

  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng(derive_seed(config.seed, kSplitStream));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[uniform_index(split_rng, i)]);
  }
  const auto n_test = static_cast<std::size_t>(
      std::llround(config.test_fraction * static_cast<double>(xs.size())));
  std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());

  std::size_t positives = 0;
  for (const auto i : train) positives += ys[i] == 1 ? 1 : 0;
  if (train.empty() || positives == 0 || positives == train.size()) {
    throw DataError("win model training set must contain both won and lost hands");
  }

  WinModel m = initial_win_model(input_dim, config);
  for (const auto& x : xs) check_features(m, x);
  m.epochs = config.epochs;
  m.n_train = train.size();
  m.n_test = test.size();

  const std::size_t n_params = m.weights.size();
  std::vector<double> grad(n_params), first(n_params, 0.0), second(n_params, 0.0);
  std::vector<double> hidden_buf;
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  long step = 0;
  std::vector<std::size_t> batch_order = train;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, kEpochStream, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = batch_order.size(); i > 1; --i) {
      std::swap(batch_order[i - 1], batch_order[uniform_index(rng, i)]);
    }
    for (std::size_t start = 0; start < batch_order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(start + config.batch_size, batch_order.size());
      std::fill(grad.begin(), grad.end(), 0.0);
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (std::size_t b = start; b < stop; ++b) {
        const auto i = batch_order[b];
        accumulate(m, m.weights, xs[i], ys[i], scale, grad, hidden_buf);
      }
      ++step;
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      for (std::size_t k = 0; k < n_params; ++k) {
        const double g = grad[k] + config.l2 * m.weights[k];
        first[k] = kBeta1 * first[k] + (1.0 - kBeta1) * g;
        second[k] = kBeta2 * second[k] + (1.0 - kBeta2) * g * g;
        m.weights[k] -= config.learning_rate * (first[k] / c1) / (std::sqrt(second[k] / c2) + kEps);
      }
    }
  }
  m.train_accuracy = accuracy(m, xs, ys, train);
  m.test_accuracy = accuracy(m, xs, ys, test);
  return m;
}

double LinearFit::predict(std::span<const double> regressors) const {
  if (coefficients.size() != regressors.size() + 1) {
    throw DataError("regressor count does not match the fitted model");
  }
  double y = coefficients[0];
  for (std::size_t k = 0; k < regressors.size(); ++k) y += coefficients[k + 1] * regressors[k];
  return y;
}

LinearFit fit_ols(std::span<const std::vector<double>> rows, std::span<const double> y) {
  if (rows.size() != y.size()) throw DataError("OLS needs one response per row");
  const std::size_t p = rows.empty() ? 1 : rows.front().size() + 1;
  if (rows.size() < std::max<std::size_t>(3, p)) {
    throw DataError("OLS needs at least max(3, parameters) observations");
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd X(n, static_cast<Eigen::Index>(p));
  Eigen::VectorXd Y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    if (r.size() + 1 != p) throw DataError("OLS rows have differing regressor counts");
    X(i, 0) = 1.0;
    for (std::size_t k = 0; k < r.size(); ++k) X(i, static_cast<Eigen::Index>(k + 1)) = r[k];
    Y(i) = y[static_cast<std::size_t>(i)];
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < static_cast<Eigen::Index>(p)) {
    throw DataError("OLS design matrix is rank deficient");
  }
  const Eigen::VectorXd beta = qr.solve(Y);
  const Eigen::VectorXd residual = Y - X * beta;
  const double ss_res = residual.squaredNorm();
  const double ss_tot = (Y.array() - Y.mean()).square().sum();

  LinearFit fit;
  fit.coefficients.assign(beta.data(), beta.data() + beta.size());
  fit.n = rows.size();
  // A constant response that is fitted exactly counts as a perfect fit.
  fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  return fit;
}

double PayoffModels::predict_win(const extract::PreflopDecision& d) const {
  const std::array<double, 2> x = {static_cast<double>(d.preflop_pot),
                                   static_cast<double>(d.n_active)};
  return win.predict(x);
}

double PayoffModels::predict_loss(const extract::PreflopDecision& d) const {
  const std::array<double, 1> x = {static_cast<double>(d.stake_if_play)};
  return loss.predict(x);
}

PayoffModels fit_payoff_models(std::span<const extract::PreflopDecision> decisions) {
  std::vector<std::vector<double>> win_rows, loss_rows;
  std::vector<double> win_y, loss_y;
  for (const auto& d : decisions) {
    if (!d.fittable() || d.choice != Choice::play) continue;
    if (d.net > 0) {
      win_rows.push_back({static_cast<double>(d.preflop_pot), static_cast<double>(d.n_active)});
      win_y.push_back(static_cast<double>(d.net));
    } else if (d.net < 0) {
      loss_rows.push_back({static_cast<double>(d.stake_if_play)});
      loss_y.push_back(static_cast<double>(d.net));
    }
  }
  PayoffModels models;
  try {
    models.win = fit_ols(win_rows, win_y);
  } catch (const DataError& e) {
    throw DataError(std::string("win payoff regression: ") + e.what());
  }
  try {
    models.loss = fit_ols(loss_rows, loss_y);
  } catch (const DataError& e) {
    throw DataError(std::string("loss payoff regression: ") + e.what());
  }
  return models;
}

double NormalizationSpec::apply(double raw) const { return (raw - minimum) / stddev + 1.0; }

NormalizationSpec fit_normalization(std::span<const double> pooled_raw) {
  if (pooled_raw.size() < 2) throw DataError("normalization needs at least two payoffs");
  const double n = static_cast<double>(pooled_raw.size());
  const double mean = std::accumulate(pooled_raw.begin(), pooled_raw.end(), 0.0) / n;
  double ss = 0.0;
  for (const double v : pooled_raw) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 0.0) || !std::isfinite(sd)) {
    throw DataError("pooled payoffs have no spread; normalization is undefined");
  }
  NormalizationSpec spec;
  spec.mean = mean;
  spec.stddev = sd;
  spec.minimum = *std::min_element(pooled_raw.begin(), pooled_raw.end());
  spec.shift = 1.0 - (spec.minimum - mean) / sd;
  return spec;
}

RawPayoffs raw_payoffs(const extract::PreflopDecision& decision, const OutcomeModels& models) {
  if (!models.win.fitted()) throw DataError("win model has not been fitted");
  RawPayoffs raw;
  raw.p_win = models.win.predict(models.encoder.encode(decision));
  raw.v_win = models.payoffs.predict_win(decision);
  raw.v_lose = models.payoffs.predict_loss(decision);
  raw.v_fold = -static_cast<double>(decision.committed_before);
  return raw;
}

BuiltGamble build_gamble(const extract::PreflopDecision& decision, const OutcomeModels& models) {
  BuiltGamble out;
  out.raw = raw_payoffs(decision, models);
  auto normalized = [&](double raw) {
    const double v = models.norm.apply(raw);
    if (v < 1.0) {
      ++out.clamped;
      return kClampedPayoff;
    }
    return v;
  };
  out.gamble = make_gamble(out.raw.p_win, normalized(out.raw.v_win), normalized(out.raw.v_lose),
                           normalized(out.raw.v_fold));
  return out;
}

GambleBuildResult build_gambles(std::span<const extract::PreflopDecision> decisions,
                                const OutcomeModels& models, const rum::OmegaGrid& grid) {
  GambleBuildResult out;
  for (const auto& d : decisions) {
    if (!d.fittable()) {
      ++out.skipped;
      continue;
    }
    const auto built = build_gamble(d, models);
    out.clamped_payoffs += static_cast<std::size_t>(built.clamped);
    GambleDecision g;
    g.agent = d.agent;
    g.player = d.player;
    g.game_id = d.game_id;
    g.hand_index = d.hand_index;
    g.trigger = d.trigger;
    g.choice = d.choice;
    g.gamble = built.gamble;
    g.cls = rum::classify_gamble(built.gamble, grid);
    out.decisions.push_back(std::move(g));
  }
  return out;
}

OutcomeModels fit_outcome_models(std::span<const extract::PreflopDecision> decisions,
                                 const OutcomeFitConfig& config) {
  std::vector<extract::PreflopDecision> train;
  for (const auto& d : decisions) {
    if (d.fittable()) train.push_back(d);
  }
  if (train.empty()) throw DataError("no fittable decisions for the outcome models");

  OutcomeModels models;
  models.encoder = FeatureEncoder::from_decisions(train);
  std::vector<FeatureVector> xs;
  std::vector<int> ys;
  xs.reserve(train.size());
  ys.reserve(train.size());
  for (const auto& d : train) {
    xs.push_back(models.encoder.encode(d));
    ys.push_back(d.won ? 1 : 0);
  }
  auto win_job = std::async(std::launch::async, [&] {
    return fit_win_model(xs, ys, models.encoder.dimension(), config.win);
  });
  models.payoffs = fit_payoff_models(train);
  models.win = win_job.get();

  std::vector<double> pooled;
  pooled.reserve(train.size() * 3);
  for (const auto& d : train) {
    pooled.push_back(models.payoffs.predict_win(d));
    pooled.push_back(models.payoffs.predict_loss(d));
    pooled.push_back(-static_cast<double>(d.committed_before));
  }
  models.norm = fit_normalization(pooled);
  return models;
}

}  // namespace tiltlab::outcome
