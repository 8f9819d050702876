#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tiltlab/crra_rum.hpp"
#include "tiltlab/outcome_models.hpp"
#include "tiltlab/types.hpp"

namespace tiltlab::analysis {

using outcome::GambleDecision;
using rum::GambleClass;

using FitKey = std::pair<Agent, Trigger>;
// Fits per (agent, state); a missing key means that cell's fit failed or was not run.
using FitTable = std::map<FitKey, rum::RumFit>;

enum class Rationality { rational, irrational };

std::string_view to_string(Rationality r);

/// Rational iff the choice picks an option of maximal expected utility; on a
/// tie either choice is rational.
Rationality rational_label(double u_play, double u_fold, Choice choice);
Rationality rational_label(const Gamble& gamble, Choice choice, double omega);

// One (agent, state, class) cell of the observed-choice table. `trigger` empty
// means all states pooled. Shares are over the agent's decisions in the same
// state scope, so the six class x choice shares of a scope sum to 1.
struct RationalityCell {
  Agent agent = Agent::human;
  std::optional<Trigger> trigger;
  GambleClass cls = GambleClass::mixed;
  std::size_t play = 0;
  std::size_t fold = 0;
  std::size_t rational_play = 0;
  std::size_t irrational_play = 0;
  std::size_t rational_fold = 0;
  std::size_t irrational_fold = 0;
  std::size_t unlabeled = 0;  // no fit for the decision's (agent, state)
  std::size_t scope_total = 0;

  double play_share() const;
  double fold_share() const;
};

/// Rows for both agents, for every state and the pooled scope, and every class,
/// empty cells included.
std::vector<RationalityCell> rationality_table(std::span<const GambleDecision> decisions,
                                               const FitTable& fits);

struct HistogramConfig {
  double half_width = 0.5;  // gaps beyond +-half_width collapse to point masses
  std::size_t bins = 21;    // odd, so one bin is centred on zero
};

struct HistogramBin {
  Agent agent = Agent::human;
  double lo = 0.0;
  double hi = 0.0;
  bool point_mass = false;
  std::size_t rational = 0;
  std::size_t irrational = 0;
};

/// Per agent: a point mass at -half_width, `bins` equal bins over
/// [-half_width, half_width] (half-open except the last), and a point mass at
/// +half_width. Gaps use the expected omega of each decision's (agent, state)
/// fit; decisions without a fit are left out.
std::vector<HistogramBin> utility_gap_histogram(std::span<const GambleDecision> decisions,
                                                const FitTable& fits,
                                                const HistogramConfig& config = {});

struct EuDiffCell {
  Agent agent = Agent::human;
  Trigger trigger = Trigger::neutral;
  GambleClass cls = GambleClass::mixed;
  std::size_t n = 0;
  double mean_gap = 0.0;  // NaN when n == 0 or the cell has no fit
};

/// Mean u_play - u_fold at the cell's expected omega for every agent x state x class.
std::vector<EuDiffCell> eu_diff_table(std::span<const GambleDecision> decisions,
                                      const FitTable& fits);

inline constexpr std::string_view kBootstrapMethod = "bootstrap-centered-two-sided";

struct ComparisonResult {
  std::string parameter;  // "omega" or "lambda"
  std::string group_a;
  std::string group_b;
  double estimate_a = 0.0;
  double estimate_b = 0.0;
  double delta = 0.0;  // a - b
  double ratio = 0.0;  // a / b
  double p_value = 1.0;
  std::string method{kBootstrapMethod};
  std::size_t replicates = 0;
  std::size_t failed_replicates = 0;
};

struct BootstrapConfig {
  std::size_t replicates = 500;
  std::uint64_t seed = 0;
  // Refit settings per replicate. Each refit starts from the group's point
  // estimate plus `refit_random_starts` random points.
  rum::FitConfig refit;
  std::size_t refit_random_starts = 0;
  double max_failure_rate = 0.2;
  unsigned workers = 0;  // 0: hardware concurrency
};

/// Nonparametric bootstrap of the difference in expected omega and lambda
/// between two groups. Each replicate resamples both groups' decisions with
/// replacement and refits. p-value: (1 + #{|d* - d| >= |d|}) / (B + 1), where d
/// is the point-estimate difference and d* the replicate difference. Returns
/// the omega comparison then the lambda comparison. Throws NumericalError when
/// more than max_failure_rate of the replicates fail to refit, and DataError
/// for fewer than 200 replicates or an empty group.
std::array<ComparisonResult, 2> compare_parameters(const rum::RumFit& fit_a,
                                                   const rum::RumFit& fit_b,
                                                   std::span<const rum::Observation> data_a,
                                                   std::span<const rum::Observation> data_b,
                                                   const BootstrapConfig& config,
                                                   std::string_view name_a = "a",
                                                   std::string_view name_b = "b");

inline constexpr std::size_t kMinReplicates = 200;

struct FoldRateCell {
  Agent agent = Agent::human;
  Trigger trigger = Trigger::neutral;
  std::optional<GambleClass> cls;  // empty: all classes
  std::size_t n = 0;
  std::size_t folds = 0;
  double rate = 0.0;  // NaN when n == 0
  // Two-proportion z-test against the same agent and class in the neutral
  // state (empty for the neutral rows or when either cell is empty).
  std::optional<double> diff_vs_neutral;
  std::optional<double> p_value_vs_neutral;
  bool significant = false;  // p < 0.05
};

std::vector<FoldRateCell> fold_rate_report(std::span<const GambleDecision> decisions);

struct FitSummaryRow {
  Agent agent = Agent::human;
  Trigger trigger = Trigger::neutral;
  std::size_t n = 0;
  std::optional<rum::RumFit> fit;
  std::optional<double> omega_outside_domain;
};

/// One row per agent x state with the fit (when present) and the share of that
/// cell's gambles whose expected omega is outside the non-increasing domain.
std::vector<FitSummaryRow> fit_summary(std::span<const GambleDecision> decisions,
                                       const FitTable& fits, const rum::OmegaGrid& grid = {});

/// Observations of one agent and state.
std::vector<rum::Observation> observations_for(std::span<const GambleDecision> decisions,
                                               Agent agent, Trigger trigger);

// CSV writers; the header line is the first row of each file.
void write_table1_csv(std::ostream& out, std::span<const RationalityCell> cells);
void write_table4_csv(std::ostream& out, std::span<const EuDiffCell> cells);
void write_table5_csv(std::ostream& out, std::span<const FitSummaryRow> rows);
void write_comparisons_csv(std::ostream& out, std::span<const ComparisonResult> rows);
void write_fold_rates_csv(std::ostream& out, std::span<const FoldRateCell> cells);
void write_histogram_csv(std::ostream& out, std::span<const HistogramBin> bins);

}  // namespace tiltlab::analysis
