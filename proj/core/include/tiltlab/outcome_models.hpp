#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tiltlab/choice_extraction.hpp"
#include "tiltlab/crra_rum.hpp"
#include "tiltlab/types.hpp"

namespace tiltlab::outcome {

// Sparse binary feature vector: indices of the active cells, ascending.
struct FeatureVector {
  std::vector<std::size_t> active;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

inline constexpr int kSklanskyGroups = 9;
inline constexpr int kSeats = 6;

// Layout: sklansky one-hot (9) | seat one-hot (6) | player x seat (6 per known
// player, players in sorted order) | sklansky x seat (54).
class FeatureEncoder {
 public:
  FeatureEncoder() = default;
  explicit FeatureEncoder(std::vector<std::string> players);

  /// Encoder over every player id appearing in `decisions`.
  static FeatureEncoder from_decisions(std::span<const extract::PreflopDecision> decisions);

  std::size_t dimension() const;
  const std::vector<std::string>& players() const { return players_; }

  std::size_t sklansky_offset() const { return 0; }
  std::size_t seat_offset() const { return kSklanskyGroups; }
  std::size_t player_seat_offset() const { return kSklanskyGroups + kSeats; }
  std::size_t sklansky_seat_offset() const;

  /// A player the encoder has not seen gets no player x seat cell.
  /// Throws DataError when sklansky is absent or the seat is outside 1..6.
  FeatureVector encode(const extract::PreflopDecision& decision) const;

 private:
  std::vector<std::string> players_;
};

enum class WinModelKind { logistic, mlp };

std::string_view to_string(WinModelKind kind);
WinModelKind parse_win_model_kind(std::string_view text);

struct WinModelConfig {
  WinModelKind kind = WinModelKind::mlp;
  std::size_t hidden = 16;
  int epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 0.01;  // Adam step size
  double l2 = 1e-4;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

// Logistic regression, or one tanh hidden layer feeding a logistic output.
// weights layout:
//   logistic: w[input_dim], b
//   mlp:      W1[hidden][input_dim] (row major), b1[hidden], w2[hidden], b2
struct WinModel {
  WinModelKind kind = WinModelKind::logistic;
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
  std::vector<double> weights;
  // Training metadata.
  int epochs = 0;
  std::uint64_t seed = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;

  bool fitted() const { return !weights.empty(); }
  std::size_t parameter_count() const;

  /// P(win), strictly inside (0, 1). Throws DataError if a feature index is
  /// out of range and if the model has no weights.
  double predict(const FeatureVector& x) const;

  /// Mean log-loss plus (l2 / 2) * |weights|^2. Writes the gradient with
  /// respect to `weights` when `gradient` is non-null.
  double loss(std::span<const FeatureVector> xs, std::span<const int> ys, double l2,
              std::vector<double>* gradient = nullptr) const;
};

/// Zero-initialised logistic model or a seeded random MLP, ready for training.
WinModel initial_win_model(std::size_t input_dim, const WinModelConfig& config);

/// Random train/test split (config.test_fraction, seeded), mini-batch Adam on
/// the training part, accuracy at threshold 0.5 on both parts. Labels are 1 for
/// a won hand and 0 otherwise. Throws DataError for empty input, a feature
/// index >= input_dim, or a training set holding a single class.
WinModel fit_win_model(std::span<const FeatureVector> xs, std::span<const int> ys,
                       std::size_t input_dim, const WinModelConfig& config);

struct LinearFit {
  std::vector<double> coefficients;  // intercept first
  double r_squared = 0.0;
  std::size_t n = 0;

  double predict(std::span<const double> regressors) const;  // without the intercept
};

/// Ordinary least squares with an intercept. Each row holds the regressors
/// only. Throws DataError for too few rows or a rank-deficient design.
LinearFit fit_ols(std::span<const std::vector<double>> rows, std::span<const double> y);

struct PayoffModels {
  LinearFit win;   // net won ~ 1 + preflop_pot + n_active, on hands played and won
  LinearFit loss;  // net lost (signed) ~ 1 + stake_if_play, on hands played and lost

  double predict_win(const extract::PreflopDecision& d) const;
  double predict_loss(const extract::PreflopDecision& d) const;
};

/// Both regressions over the fittable play decisions.
PayoffModels fit_payoff_models(std::span<const extract::PreflopDecision> decisions);

// z-score by the pooled mean and standard deviation, then shift so the pooled
// minimum lands on 1: apply(v) = (v - mean) / stddev + shift.
struct NormalizationSpec {
  double mean = 0.0;
  double stddev = 1.0;
  double shift = 1.0;
  double minimum = 0.0;  // pooled raw minimum

  /// Evaluated as (v - minimum) / stddev + 1, the same affine map written so
  /// that the pooled minimum maps to 1 without rounding.
  double apply(double raw) const;
};

/// Sample standard deviation. Throws DataError for fewer than two values or zero spread.
NormalizationSpec fit_normalization(std::span<const double> pooled_raw);

inline constexpr double kClampedPayoff = 1.0 + 1e-6;

struct OutcomeModels {
  FeatureEncoder encoder;
  WinModel win;
  PayoffModels payoffs;
  NormalizationSpec norm;
};

struct RawPayoffs {
  double p_win = 0.0;
  double v_win = 0.0;
  double v_lose = 0.0;
  double v_fold = 0.0;
};

/// Model inputs for one decision before normalization. The loss regression is
/// read at stake_if_play and v_fold = -committed_before.
RawPayoffs raw_payoffs(const extract::PreflopDecision& decision, const OutcomeModels& models);

struct BuiltGamble {
  Gamble gamble;
  RawPayoffs raw;
  int clamped = 0;  // normalized payoffs raised to kClampedPayoff
};

/// play = {(p_win, norm(v_win)), (1 - p_win, norm(v_lose))}, fold = {(1, norm(v_fold))}.
/// Throws DataError if the win model is not fitted.
BuiltGamble build_gamble(const extract::PreflopDecision& decision, const OutcomeModels& models);

// A fittable decision paired with its constructed gamble: the unit the RUM
// fits and the analysis reports consume.
struct GambleDecision {
  Agent agent = Agent::human;
  std::string player;
  std::string game_id;
  int hand_index = 0;
  Trigger trigger = Trigger::neutral;
  Choice choice = Choice::fold;
  Gamble gamble;
  rum::GambleClass cls = rum::GambleClass::mixed;

  friend bool operator==(const GambleDecision&, const GambleDecision&) = default;
};

struct GambleBuildResult {
  std::vector<GambleDecision> decisions;
  std::size_t skipped = 0;          // forced or missing hole cards
  std::size_t clamped_payoffs = 0;  // normalized payoffs raised to kClampedPayoff
};

/// build_gamble and classify_gamble for every fittable decision, input order kept.
GambleBuildResult build_gambles(std::span<const extract::PreflopDecision> decisions,
                                const OutcomeModels& models, const rum::OmegaGrid& grid = {});

struct OutcomeFitConfig {
  WinModelConfig win;
};

/// Encoder, win model (on every fittable decision, label won), payoff
/// regressions and the pooled normalization over the raw payoffs of every
/// fittable decision. The win model trains concurrently with the regressions.
OutcomeModels fit_outcome_models(std::span<const extract::PreflopDecision> decisions,
                                 const OutcomeFitConfig& config);

}  // namespace tiltlab::outcome
