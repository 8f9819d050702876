#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tiltlab/types.hpp"

namespace tiltlab::rum {

// omega: CRRA risk aversion. lambda: logit precision ("rationality"), lambda >= 0.
struct RumParams {
  double omega = 0.0;
  double lambda = 1.0;
};

/// CRRA utility v^(1-omega)/(1-omega); log(v) at omega == 1. Throws DataError for v <= 0.
double crra_utility(double payoff, double omega);

/// Expected CRRA utility of a lottery, sum of p * crra_utility(v, omega).
double option_utility(std::span<const Outcome> option, double omega);

/// u_play - u_fold.
///
/// Both options carry total probability one, so the 1/(1-omega) pole of the
/// CRRA form cancels in the difference. The gap is evaluated through
/// expm1((1-omega) log v) / (1-omega), which is continuous through omega = 1
/// and does not lose precision there.
double utility_gap(const Gamble& gamble, double omega);

namespace detail {
// (v^a - 1)/a for a = 1 - omega, given log v; log v at a == 0.
double shifted_crra(double a, double log_v);
}  // namespace detail

/// d(u_play - u_fold) / d omega.
double utility_gap_derivative(const Gamble& gamble, double omega);

/// P(play) = exp(l*u_play) / (exp(l*u_play) + exp(l*u_fold)), overflow safe.
/// Throws NumericalError if the utilities are not finite or lambda < 0.
double choice_probability(const Gamble& gamble, const RumParams& params);

enum class GambleClass { risk_dominant, safe_dominant, mixed };

inline constexpr std::array<GambleClass, 3> kGambleClasses = {
    GambleClass::mixed, GambleClass::risk_dominant, GambleClass::safe_dominant};

std::string_view to_string(GambleClass cls);
GambleClass parse_gamble_class(std::string_view text);

// Closed, evenly spaced grid of risk-aversion values [lo, hi].
struct OmegaGrid {
  double lo = -10.0;
  double hi = 10.0;
  double step = 0.01;

  std::size_t size() const;
  double at(std::size_t i) const;
};

/// Utility gaps within this distance of zero are treated as indifference.
inline constexpr double kIndifferenceTolerance = 1e-9;

/// risk_dominant if play is strictly preferred at every grid point (ties ignored),
/// safe_dominant if fold is, mixed when both strict directions occur. A gamble
/// with no strict preference anywhere on the grid is reported as mixed.
/// Throws DataError for an empty grid.
GambleClass classify_gamble(const Gamble& gamble, const OmegaGrid& grid = {});

struct OmegaInterval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double omega) const { return omega >= lo && omega <= hi; }
};

/// Maximal grid intervals on which P(play) is non-increasing in omega at fixed
/// lambda, from the sign of forward differences between consecutive grid points.
std::vector<OmegaInterval> monotonic_domain(const Gamble& gamble, double lambda,
                                            const OmegaGrid& grid = {});

struct Observation {
  Gamble gamble;
  Choice choice = Choice::fold;
};

/// Sum of log P(observed choice). Throws DataError on an empty set.
double log_likelihood(const RumParams& params, std::span<const Observation> data);

struct LikelihoodValue {
  double value = 0.0;
  // d/d omega, d/d log(lambda)
  std::array<double, 2> gradient{};
};

// Observations packed into log-payoff form for repeated likelihood evaluation.
class LikelihoodModel {
 public:
  explicit LikelihoodModel(std::span<const Observation> data);

  std::size_t size() const { return rows_.size(); }

  LikelihoodValue evaluate(double omega, double log_lambda) const;
  double value(double omega, double log_lambda) const;

 private:
  struct Row {
    double p_win;
    double p_lose;
    double log_win;
    double log_lose;
    double log_fold;
    double y;  // 1 for play, 0 for fold
  };
  std::vector<Row> rows_;
};

// flat: the gradient vanished without positive curvature, so no maximum is isolated there.
enum class StartStatus { converged, boundary, max_iterations, line_search_failed, non_finite, flat };

std::string_view to_string(StartStatus status);

struct StartResult {
  std::size_t index = 0;
  RumParams start;
  RumParams estimate;
  double log_likelihood = 0.0;
  double start_log_likelihood = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  StartStatus status = StartStatus::non_finite;

  bool valid() const { return status == StartStatus::converged; }
};

struct FitConfig {
  std::size_t starts = 200;
  std::size_t valid_sample = 35;
  std::uint64_t seed = 0;
  double omega_lo = -5.0;
  double omega_hi = 5.0;
  double log_lambda_lo = -4.605170185988091;  // log(0.01)
  double log_lambda_hi = 6.907755278982137;   // log(1000)
  double gradient_tolerance = 1e-6;
  // A small gradient counts as converged only if the Newton step is also this small.
  double step_tolerance = 1e-4;
  int max_iterations = 500;
  // Extra start points tried before the random ones (e.g. a previous estimate).
  std::vector<RumParams> seeded_starts;
  // 0 means std::thread::hardware_concurrency().
  unsigned workers = 0;
};

struct RumFit {
  std::vector<StartResult> starts;
  std::size_t valid_count = 0;
  // Start indices of the valid convergences that entered the summary, ascending.
  std::vector<std::size_t> sampled;
  double omega_mean = 0.0;
  double lambda_mean = 0.0;
  double omega_sd = 0.0;
  double lambda_sd = 0.0;
  double log_likelihood_at_mean = 0.0;

  RumParams expected() const { return {omega_mean, lambda_mean}; }
};

class RumFitError : public NumericalError {
 public:
  RumFitError(const std::string& what, std::vector<StartResult> starts)
      : NumericalError(what), starts_(std::move(starts)) {}

  const std::vector<StartResult>& starts() const { return starts_; }

 private:
  std::vector<StartResult> starts_;
};

/// Single bounded quasi-Newton (BFGS) ascent of the log-likelihood over
/// (omega, log lambda) from one start point.
StartResult optimize_from(const LikelihoodModel& model, const RumParams& start,
                          const FitConfig& config);

/// Multi-start maximum likelihood. Starts are independent and reduced in index
/// order, so the result depends only on the data and config.seed.
/// Throws RumFitError (with every start's diagnostics) if no start converges validly.
RumFit fit_rum(std::span<const Observation> data, const FitConfig& config = {});

/// Fraction of gambles for which the fit's expected omega lies outside the
/// non-increasing domain of P(play), evaluated at the fit's expected lambda.
/// Throws NumericalError if the fit has no valid convergence.
double diagnose_omega_validity(const RumFit& fit, std::span<const Gamble> gambles,
                               const OmegaGrid& grid = {});

}  // namespace tiltlab::rum
