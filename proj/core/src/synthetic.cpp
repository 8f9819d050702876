#include "tiltlab/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "tiltlab/rng.hpp"


namespace tiltlab::synth {

const rum::RumParams& AgentProfile::at(Trigger state) const {
  const auto it = params.find(state);
  if (it == params.end()) {
    throw DataError("agent profile has no parameters for state " + std::string(to_string(state)));
  }
  return it->second;
}

namespace {

constexpr std::uint64_t kGambleStream = 0x47414D42ULL;
constexpr std::uint64_t kChoiceStream = 0x43484F49ULL;

std::size_t class_slot(rum::GambleClass cls) {
  switch (cls) {
    case rum::GambleClass::mixed:
      return 0;
    case rum::GambleClass::risk_dominant:
      return 1;
    case rum::GambleClass::safe_dominant:
      return 2;
  }
  return 0;
}

// Largest-remainder apportionment of `count` over the mix.
std::array<std::size_t, 3> quotas(const ClassMix& mix, std::size_t count) {
  const std::array<double, 3> shares = {mix.mixed, mix.risk_dominant, mix.safe_dominant};
  std::array<std::size_t, 3> q{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = shares[i] * static_cast<double>(count);
    q[i] = static_cast<std::size_t>(std::floor(exact));
    remainder[i] = exact - static_cast<double>(q[i]);
    assigned += q[i];
  }
  while (assigned < count) {
    const auto i = static_cast<std::size_t>(
        std::max_element(remainder.begin(), remainder.end()) - remainder.begin());
    ++q[i];
    remainder[i] = -1.0;
    ++assigned;
  }
  return q;
}

}  // namespace

std::vector<Gamble> generate_gambles(const GambleGenConfig& config) {
  const auto& mix = config.mix;
  if (mix.mixed < 0.0 || mix.risk_dominant < 0.0 || mix.safe_dominant < 0.0 ||
      std::abs(mix.mixed + mix.risk_dominant + mix.safe_dominant - 1.0) > 1e-9) {
    throw DataError("gamble class mix must be non-negative and sum to 1");
  }
  if (!(config.lose_lo > 0.0) || config.lose_hi < config.lose_lo || config.fold_spread < 0.0 ||
      config.win_spread_lo < 0.0 || config.win_spread_hi < config.win_spread_lo ||
      config.p_lo < 0.0 || config.p_hi > 1.0 || config.p_hi < config.p_lo) {
    throw DataError("gamble payoff ranges must keep payoffs positive and ordered");
  }
  if (config.grid.size() == 0) throw DataError("omega grid is empty");

  const auto want = quotas(mix, config.count);
  // Slot order: mixed, risk_dominant, safe_dominant. Each requested gamble
  // gets a target class in a shuffled order so that classes interleave.
  std::vector<std::size_t> targets;
  targets.reserve(config.count);
  for (std::size_t slot = 0; slot < 3; ++slot) targets.insert(targets.end(), want[slot], slot);
  Rng rng(derive_seed(config.seed, kGambleStream));
  for (std::size_t i = targets.size(); i > 1; --i) {
    std::swap(targets[i - 1], targets[uniform_index(rng, i)]);
  }

  const std::size_t n_grid = config.grid.size();
  std::vector<Gamble> out;
  out.reserve(config.count);
  for (const auto slot : targets) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < config.max_attempts_per_gamble && !placed; ++attempt) {
      const double v_lose = uniform(rng, config.lose_lo, config.lose_hi);
      const double v_fold = v_lose + uniform(rng, 0.0, config.fold_spread);
      const double v_win = v_fold + uniform(rng, config.win_spread_lo, config.win_spread_hi);
      // The utility gap is affine in p_win with positive slope, so at each omega
      // play is preferred iff p_win exceeds the indifference probability
      // p*(omega). CRRA utilities grow more concave with omega, so p* increases
      // along the grid and its extremes sit at the grid ends. The classes are
      // p_win above p*(hi) (risk dominant), below p*(lo) (safe dominant), or in
      // between; classify_gamble below confirms every draw.
      const double log_win = std::log(v_win);
      const double log_lose = std::log(v_lose);
      const double log_fold = std::log(v_fold);
      auto indifference = [&](double omega) {
        const double a = 1.0 - omega;
        const double u_lose = rum::detail::shifted_crra(a, log_lose);
        const double g_win = rum::detail::shifted_crra(a, log_win) - u_lose;
        const double g_fold = rum::detail::shifted_crra(a, log_fold) - u_lose;
        return g_win > 0.0 ? std::clamp(g_fold / g_win, 0.0, 1.0) : 1.0;
      };
      const double p_min = indifference(config.grid.at(0));
      const double p_max = indifference(config.grid.at(n_grid - 1));
      double lo = config.p_lo;
      double hi = config.p_hi;
      if (slot == 0) {
        lo = std::max(lo, p_min);
        hi = std::min(hi, p_max);
      } else if (slot == 1) {
        lo = std::max(lo, p_max);
      } else {
        hi = std::min(hi, p_min);
      }
      if (!(hi > lo)) continue;
      const double p_win = uniform(rng, lo, hi);
      const Gamble g = make_gamble(p_win, v_win, v_lose, v_fold);
      if (class_slot(rum::classify_gamble(g, config.grid)) == slot) {
        out.push_back(g);
        placed = true;
      }
    }
    if (!placed) {
      throw DataError("requested gamble class mix is infeasible for the payoff ranges");
    }
  }
  return out;
}

std::vector<SyntheticDecision> simulate_agent(std::span<const Gamble> gambles,
                                              const AgentProfile& profile,
                                              std::span<const Trigger> states,
                                              std::uint64_t seed) {
  if (states.size() != gambles.size()) {
    throw DataError("simulate_agent needs one trigger state per gamble");
  }
  Rng rng(derive_seed(seed, kChoiceStream));
  std::vector<SyntheticDecision> out;
  out.reserve(gambles.size());
  for (std::size_t i = 0; i < gambles.size(); ++i) {
    const double p_play = rum::choice_probability(gambles[i], profile.at(states[i]));
    const Choice y = uniform01(rng) < p_play ? Choice::play : Choice::fold;
    out.push_back({gambles[i], states[i], y});
  }
  return out;
}

std::vector<rum::Observation> to_observations(std::span<const SyntheticDecision> decisions) {
  std::vector<rum::Observation> out;
  out.reserve(decisions.size());
  for (const auto& d : decisions) out.push_back({d.gamble, d.choice});
  return out;
}

namespace {

std::vector<SyntheticDecision> simulate_state(const AgentProfile& profile, Trigger state,
                                              std::size_t n, std::uint64_t seed,
                                              const GambleGenConfig& gambles) {
  const auto state_index = static_cast<std::uint64_t>(state);
  GambleGenConfig gen = gambles;
  gen.count = n;
  gen.seed = derive_seed(seed, kGambleStream, state_index);
  const auto drawn = generate_gambles(gen);
  const std::vector<Trigger> states(drawn.size(), state);
  return simulate_agent(drawn, profile, states, derive_seed(seed, kChoiceStream, state_index));
}

}  // namespace

std::vector<SyntheticDecision> simulate_profile(const AgentProfile& profile,
                                                std::size_t n_per_state, std::uint64_t seed,
                                                const GambleGenConfig& gambles) {
  std::vector<SyntheticDecision> out;
  for (const auto& [state, params] : profile.params) {
    auto part = simulate_state(profile, state, n_per_state, seed, gambles);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

std::vector<RecoveryRow> recovery_experiment(const AgentProfile& truth,
                                             const RecoveryConfig& config) {
  if (config.n_per_state < 1000) {
    throw DataError("recovery experiment needs at least 1000 decisions per state");
  }
  std::vector<RecoveryRow> rows;
  for (const auto& [state, params] : truth.params) {
    const auto state_index = static_cast<std::uint64_t>(state);
    const auto decisions = simulate_state(truth, state, config.n_per_state, config.seed, config.gambles);
    const auto obs = to_observations(decisions);

    rum::FitConfig fit_config = config.fit;
    fit_config.seed = derive_seed(config.seed, 0x464954ULL, state_index);
    const auto fit = rum::fit_rum(obs, fit_config);

    RecoveryRow row;
    row.state = state;
    row.truth = params;
    row.estimate = fit.expected();
    row.omega_error = row.estimate.omega - params.omega;
    row.lambda_relative_error = row.estimate.lambda / params.lambda - 1.0;
    row.valid_convergences = fit.valid_count;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace tiltlab::synth
