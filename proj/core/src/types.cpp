#include "tiltlab/types.hpp"

#include <cmath>

namespace tiltlab {

std::string_view to_string(Agent agent) {
  return agent == Agent::pluribus ? "pluribus" : "human";
}

std::string_view to_string(Choice choice) { return choice == Choice::play ? "play" : "fold"; }

std::string_view to_string(Trigger trigger) {
  switch (trigger) {
    case Trigger::neutral:
      return "neutral";
    case Trigger::post_loss:
      return "post_loss";
    case Trigger::post_win:
      return "post_win";
  }
  return "neutral";
}

namespace {

std::string canonical_token(std::string_view text) {
  std::string out(text);
  for (auto& c : out) {
    if (c == '-') c = '_';
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

}  // namespace

Agent parse_agent(std::string_view text) {
  const auto token = canonical_token(text);
  if (token == "pluribus") return Agent::pluribus;
  if (token == "human") return Agent::human;
  throw DataError("unknown agent '" + std::string(text) + "'");
}

Choice parse_choice(std::string_view text) {
  const auto token = canonical_token(text);
  if (token == "play") return Choice::play;
  if (token == "fold") return Choice::fold;
  throw DataError("unknown choice '" + std::string(text) + "'");
}

Trigger parse_trigger(std::string_view text) {
  const auto token = canonical_token(text);
  if (token == "neutral" || token == "post_neutral") return Trigger::neutral;
  if (token == "post_loss") return Trigger::post_loss;
  if (token == "post_win") return Trigger::post_win;
  throw DataError("unknown trigger state '" + std::string(text) + "'");
}

Gamble make_gamble(double p_win, double v_win, double v_lose, double v_fold) {
  return Gamble{{Outcome{p_win, v_win}, Outcome{1.0 - p_win, v_lose}}, {Outcome{1.0, v_fold}}};
}

void validate_gamble(const Gamble& gamble) {
  auto check_option = [](std::span<const Outcome> option, std::string_view name) {
    double total = 0.0;
    for (const auto& o : option) {
      if (!(o.probability >= 0.0 && o.probability <= 1.0)) {
        throw DataError("gamble " + std::string(name) + " option has probability outside [0,1]");
      }
      if (!(o.payoff > 0.0) || !std::isfinite(o.payoff)) {
        throw DataError("gamble " + std::string(name) + " option has non-positive payoff");
      }
      total += o.probability;
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw DataError("gamble " + std::string(name) + " option probabilities do not sum to 1");
    }
  };
  check_option(gamble.play_option(), "play");
  check_option(gamble.fold_option(), "fold");
}

}  // namespace tiltlab
