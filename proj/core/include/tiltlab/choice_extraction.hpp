#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tiltlab/hand_history.hpp"
#include "tiltlab/types.hpp"

namespace tiltlab::extract {

/// Sklansky group of a starting hand: 1 (strongest) to 9 (weakest).
/// Order of the two cards does not matter. Throws DataError for a duplicate card.
int sklansky_rank(const hands::HoleCards& cards);

// One player's pre-flop play/fold situation in one hand. Chip amounts are taken
// right after the player's last pre-flop action.
struct PreflopDecision {
  Agent agent = Agent::human;
  std::string player;
  std::string game_id;
  int hand_index = 0;
  int seat = 0;
  std::optional<int> sklansky;  // absent when hole cards were not recorded
  Choice choice = Choice::fold;
  Trigger trigger = Trigger::neutral;
  Chips preflop_pot = 0;
  Chips own_contribution = 0;
  // What folding at the final action would forfeit: the commitment before it.
  Chips committed_before = 0;
  // Commitment if the player stays in: own_contribution for play, and for a
  // fold the amount needed to match the bet the player faced.
  Chips stake_if_play = 0;
  int n_active = 0;  // players not folded when the decision was made
  // Realized result of the whole hand for this player.
  bool won = false;
  Chips net = 0;
  // Hand-level context used for trigger labelling.
  Chips hand_pot_total = 0;
  Chips small_blind = 0;
  Chips big_blind = 0;
  // Never acted pre-flop (the big blind when everyone folds to it).
  bool forced = false;

  // Usable for outcome models and RUM fits.
  bool fittable() const { return !forced && sklansky.has_value(); }

  friend bool operator==(const PreflopDecision&, const PreflopDecision&) = default;
};

struct ExtractionResult {
  std::vector<PreflopDecision> decisions;
  std::vector<std::string> diagnostics;
};

/// One decision per (player, hand), in hand order then seat order. The final
/// pre-flop action decides the choice: fold is fold, anything else (including a
/// big-blind check) is play. Agent is Pluribus for the Pluribus id and Human
/// otherwise; triggers are left neutral.
ExtractionResult extract_preflop_decisions(std::span<const hands::HandRecord> records);

/// Sets each decision's trigger from the same player's result in the previous
/// hand (hand_index - 1) of the same game: post_win if they won a pot larger than
/// the two blinds, post_loss if they lost more than the big blind, else neutral.
/// A player's first hand in a game, or a hand following one they sat out, is
/// neutral. Input order is preserved.
std::vector<PreflopDecision> label_trigger_states(std::vector<PreflopDecision> decisions);

/// Sets agent from the player id: Pluribus stays Pluribus, everyone else is Human.
std::vector<PreflopDecision> pool_humans(std::vector<PreflopDecision> decisions);

}  // namespace tiltlab::extract
