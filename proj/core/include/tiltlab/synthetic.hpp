#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "tiltlab/crra_rum.hpp"
#include "tiltlab/types.hpp"

namespace tiltlab::synth {

// Ground-truth (omega, lambda) per trigger state.
struct AgentProfile {
  Agent agent = Agent::pluribus;
  std::map<Trigger, rum::RumParams> params;

  const rum::RumParams& at(Trigger state) const;
};

// Requested share of each gamble class; must be non-negative and sum to 1.
struct ClassMix {
  double mixed = 0.21;
  double risk_dominant = 0.23;
  double safe_dominant = 0.56;
};

// Gambles are drawn directly on the normalized payoff scale with the ordering
// a real hand imposes: losing after playing costs at least as much as folding,
// and winning pays more than folding.
//   v_lose ~ U[lose_lo, lose_hi]
//   v_fold = v_lose + U[0, fold_spread]
//   v_win  = v_fold + U[win_spread_lo, win_spread_hi]
//   p_win  ~ U[p_lo, p_hi]
// Candidates are classified on `grid` and accepted until each class quota is met.
struct GambleGenConfig {
  std::size_t count = 1000;
  ClassMix mix;
  double lose_lo = 1.0;
  double lose_hi = 3.0;
  double fold_spread = 2.0;
  double win_spread_lo = 0.1;
  double win_spread_hi = 6.0;
  double p_lo = 0.05;
  double p_hi = 0.95;
  rum::OmegaGrid grid;
  std::uint64_t seed = 0;
  // Rejection-sampling budget, in candidates per requested gamble.
  std::size_t max_attempts_per_gamble = 2000;
};

/// Deterministic given config.seed. Throws DataError when the mix is malformed
/// or a requested class cannot be produced from the payoff ranges.
std::vector<Gamble> generate_gambles(const GambleGenConfig& config);

struct SyntheticDecision {
  Gamble gamble;
  Trigger trigger = Trigger::neutral;
  Choice choice = Choice::fold;
};

/// Draws play with probability choice_probability(gamble, profile.at(state)).
/// `states` must have one entry per gamble.
std::vector<SyntheticDecision> simulate_agent(std::span<const Gamble> gambles,
                                              const AgentProfile& profile,
                                              std::span<const Trigger> states,
                                              std::uint64_t seed);

std::vector<rum::Observation> to_observations(std::span<const SyntheticDecision> decisions);

/// `n_per_state` fresh gambles and decisions for every state of the profile,
/// states in enum order. Uses the same per-state seeds as recovery_experiment.
std::vector<SyntheticDecision> simulate_profile(const AgentProfile& profile,
                                                std::size_t n_per_state, std::uint64_t seed,
                                                const GambleGenConfig& gambles = {});

struct RecoveryRow {
  Trigger state = Trigger::neutral;
  rum::RumParams truth;
  rum::RumParams estimate;
  double omega_error = 0.0;           // estimate - truth
  double lambda_relative_error = 0.0;  // estimate / truth - 1
  std::size_t valid_convergences = 0;
};

struct RecoveryConfig {
  std::size_t n_per_state = 10000;
  std::uint64_t seed = 0;
  GambleGenConfig gambles;
  rum::FitConfig fit;
};

/// generate -> simulate -> fit_rum for every state present in the profile.
/// Seeds for each state are derived from config.seed. Propagates RumFitError.
std::vector<RecoveryRow> recovery_experiment(const AgentProfile& truth,
                                             const RecoveryConfig& config);

}  // namespace tiltlab::synth
