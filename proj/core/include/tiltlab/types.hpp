#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tiltlab {

using Chips = std::int64_t;

inline constexpr std::string_view kPluribusId = "Pluribus";

// Input that cannot be parsed, mapped or validated. CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An estimation or model fit that failed to produce a usable result. CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Agent { pluribus, human };
enum class Choice { play, fold };
enum class Trigger { neutral, post_loss, post_win };

inline constexpr std::array<Agent, 2> kAgents = {Agent::pluribus, Agent::human};
inline constexpr std::array<Trigger, 3> kTriggers = {Trigger::neutral, Trigger::post_loss,
                                                     Trigger::post_win};

std::string_view to_string(Agent agent);
std::string_view to_string(Choice choice);
std::string_view to_string(Trigger trigger);

// Accept both the underscore and hyphen spellings ("post_loss", "post-loss").
Agent parse_agent(std::string_view text);
Choice parse_choice(std::string_view text);
Trigger parse_trigger(std::string_view text);

// One branch of a lottery: probability of the outcome and its (normalized) payoff.
struct Outcome {
  double probability = 0.0;
  double payoff = 1.0;

  friend bool operator==(const Outcome&, const Outcome&) = default;
};

// Binary play/fold choice situation. Play is a two-outcome lottery (win, lose);
// fold is a sure thing. Payoffs are on the normalized scale and must be > 0.
struct Gamble {
  std::array<Outcome, 2> play;
  std::array<Outcome, 1> fold;

  std::span<const Outcome> play_option() const { return play; }
  std::span<const Outcome> fold_option() const { return fold; }

  friend bool operator==(const Gamble&, const Gamble&) = default;
};

// Builds {(p_win, v_win), (1 - p_win, v_lose)} vs {(1, v_fold)}.
Gamble make_gamble(double p_win, double v_win, double v_lose, double v_fold);

// Throws DataError if probabilities are outside [0,1], do not sum to one, or a payoff is <= 0.
void validate_gamble(const Gamble& gamble);

}  // namespace tiltlab
