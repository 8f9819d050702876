#include "tiltlab/choice_extraction.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <set>
#include <string_view>
#include <tuple>

namespace tiltlab::extract {

namespace {

// Sklansky-Malmuth starting-hand groups 1-8; anything not listed is group 9.
// "s" is suited, "o" offsuit, a bare pair has neither.
constexpr std::array<std::string_view, 8> kGroups = {
    "AA KK QQ JJ AKs",
    "TT AQs AJs KQs AKo",
    "99 JTs QJs KJs ATs AQo",
    "T9s KQo 88 QTs 98s J9s AJo KTs",
    "77 87s Q9s T8s KJo QJo JTo 76s 97s A9s A8s A7s A6s A5s A4s A3s A2s 65s",
    "66 ATo 55 86s KTo QTo 54s K9s J8s 75s",
    "44 J9o 64s T9o 53s 33 98o 43s 22 K8s K7s K6s K5s K4s K3s K2s T7s Q8s",
    "87o A9o Q9o 76o 42s 32s 96s 85s J8o J7s 65o 54o 74s K9o T8o",
};

constexpr std::string_view kRankChars = "23456789TJQKA";

// Index [high][low][suited] over ranks 2..14.
using GroupTable = std::array<std::array<std::array<int, 2>, 15>, 15>;

GroupTable build_table() {
  GroupTable table{};
  for (auto& row : table) {
    for (auto& cell : row) cell = {9, 9};
  }
  for (std::size_t g = 0; g < kGroups.size(); ++g) {
    std::string_view list = kGroups[g];
    while (!list.empty()) {
      const auto end = std::min(list.find(' '), list.size());
      const auto hand = list.substr(0, end);
      list.remove_prefix(std::min(end + 1, list.size()));
      const int hi = static_cast<int>(kRankChars.find(hand[0])) + 2;
      const int lo = static_cast<int>(kRankChars.find(hand[1])) + 2;
      const int rank = static_cast<int>(g) + 1;
      if (hand.size() == 2) {
        table[hi][lo] = {rank, rank};
      } else {
        table[hi][lo][hand[2] == 's' ? 1 : 0] = rank;
      }
    }
  }
  return table;
}

const GroupTable& group_table() {
  static const GroupTable table = build_table();
  return table;
}

// Per-player state right after their last pre-flop action.
struct Snapshot {
  Chips pot = 0;
  Chips committed = 0;
  Chips before = 0;
  Chips level = 0;
  int n_active = 0;
  bool folded = false;
};

}  // namespace

int sklansky_rank(const hands::HoleCards& cards) {
  const auto& [a, b] = cards;
  if (a == b) throw DataError("hole cards contain the same card twice: " + hands::to_string(a));
  const int hi = std::max(a.rank, b.rank);
  const int lo = std::min(a.rank, b.rank);
  return group_table()[hi][lo][a.suit == b.suit ? 1 : 0];
}

ExtractionResult extract_preflop_decisions(std::span<const hands::HandRecord> records) {
  ExtractionResult result;
  for (const auto& hand : records) {
    std::map<std::string, Chips> committed;
    Chips pot = 0;
    for (const auto& p : hand.players) {
      committed[p] = hand.blind_of(p);
      pot += committed[p];
    }
    std::set<std::string> folded;
    std::map<std::string, Snapshot> last;
    Chips level = std::max(hand.small_blind, hand.big_blind);
    if (!hand.actions.empty()) {
      for (const auto& action : hand.actions.front()) {
        const int active = static_cast<int>(hand.players.size() - folded.size());
        const Chips before = committed[action.player];
        committed[action.player] += action.amount;
        pot += action.amount;
        const bool fold = action.type == hands::ActionType::fold;
        if (fold) folded.insert(action.player);
        level = std::max(level, committed[action.player]);
        last[action.player] = {pot, committed[action.player], before, level, active, fold};
      }
    }

    for (const auto& player : hand.players) {
      PreflopDecision d;
      d.agent = player == kPluribusId ? Agent::pluribus : Agent::human;
      d.player = player;
      d.game_id = hand.game_id;
      d.hand_index = hand.hand_index;
      d.seat = hand.seats.at(player);
      d.hand_pot_total = hand.pot_total;
      d.small_blind = hand.small_blind;
      d.big_blind = hand.big_blind;
      if (const auto it = hand.net_result.find(player); it != hand.net_result.end()) {
        d.net = it->second;
      }
      d.won = d.net > 0;

      if (const auto it = last.find(player); it != last.end()) {
        const auto& s = it->second;
        d.choice = s.folded ? Choice::fold : Choice::play;
        d.preflop_pot = s.pot;
        d.own_contribution = s.committed;
        d.committed_before = s.before;
        d.stake_if_play = s.folded ? s.level : s.committed;
        d.n_active = s.n_active;
      } else {
        // No voluntary pre-flop action; the hand continued for this player.
        d.forced = true;
        d.choice = Choice::play;
        d.preflop_pot = pot;
        d.own_contribution = committed[player];
        d.committed_before = committed[player];
        d.stake_if_play = committed[player];
        d.n_active = static_cast<int>(hand.players.size() - folded.size());
      }

      if (const auto it = hand.hole_cards.find(player); it != hand.hole_cards.end()) {
        d.sklansky = sklansky_rank(it->second);
      } else {
        result.diagnostics.push_back("hand " + hand.game_id + "#" +
                                     std::to_string(hand.hand_index) + ": no hole cards for " +
                                     player + "; decision excluded from fitting");
      }
      result.decisions.push_back(std::move(d));
    }
  }
  return result;
}

std::vector<PreflopDecision> label_trigger_states(std::vector<PreflopDecision> decisions) {
  using Key = std::tuple<std::string, std::string, int>;  // game, player, hand
  std::map<Key, const PreflopDecision*> by_hand;
  for (const auto& d : decisions) by_hand[{d.game_id, d.player, d.hand_index}] = &d;

  std::vector<Trigger> labels(decisions.size(), Trigger::neutral);
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const auto& d = decisions[i];
    const auto it = by_hand.find({d.game_id, d.player, d.hand_index - 1});
    if (it == by_hand.end()) continue;
    const auto& prev = *it->second;
    if (prev.net > 0 && prev.hand_pot_total > prev.small_blind + prev.big_blind) {
      labels[i] = Trigger::post_win;
    } else if (prev.net < -prev.big_blind) {
      labels[i] = Trigger::post_loss;
    }
  }
  for (std::size_t i = 0; i < decisions.size(); ++i) decisions[i].trigger = labels[i];
  return decisions;
}

std::vector<PreflopDecision> pool_humans(std::vector<PreflopDecision> decisions) {
  for (auto& d : decisions) d.agent = d.player == kPluribusId ? Agent::pluribus : Agent::human;
  return decisions;
}

}  // namespace tiltlab::extract
