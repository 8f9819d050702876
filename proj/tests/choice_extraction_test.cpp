#include "tiltlab/choice_extraction.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "test_support.hpp"

namespace tiltlab::extract {
namespace {

using hands::HandFormat;
using hands::HandRecord;
using testing::fixture;
using testing::slurp;

std::vector<HandRecord> fixture_hands() {
  return hands::parse_hand_log(slurp(fixture("hands_200.jsonl")), HandFormat::canonical).hands;
}

// Sklansky groups written as full hand lists, suited hands first.
int oracle_sklansky(const std::string& a, const std::string& b) {
  static const std::map<std::string, int> table = [] {
    const std::vector<std::vector<std::string>> groups = {
        {"AA", "KK", "QQ", "JJ", "AKs"},
        {"TT", "AQs", "AJs", "KQs", "AKo"},
        {"99", "JTs", "QJs", "KJs", "ATs", "AQo"},
        {"T9s", "KQo", "88", "QTs", "98s", "J9s", "AJo", "KTs"},
        {"77", "87s", "Q9s", "T8s", "KJo", "QJo", "JTo", "76s", "97s", "A9s", "A8s", "A7s",
         "A6s", "A5s", "A4s", "A3s", "A2s", "65s"},
        {"66", "ATo", "55", "86s", "KTo", "QTo", "54s", "K9s", "J8s", "75s"},
        {"44", "J9o", "64s", "T9o", "53s", "33", "98o", "43s", "22", "K8s", "K7s", "K6s", "K5s",
         "K4s", "K3s", "K2s", "T7s", "Q8s"},
        {"87o", "A9o", "Q9o", "76o", "42s", "32s", "96s", "85s", "J8o", "J7s", "65o", "54o",
         "74s", "K9o", "T8o"},
    };
    std::map<std::string, int> out;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      for (const auto& h : groups[g]) out[h] = static_cast<int>(g) + 1;
    }
    return out;
  }();
  const std::string order = "23456789TJQKA";
  char hi = a[0], lo = b[0];
  if (order.find(hi) < order.find(lo)) std::swap(hi, lo);
  std::string key{hi, lo};
  if (hi != lo) key += a[1] == b[1] ? 's' : 'o';
  const auto it = table.find(key);
  return it == table.end() ? 9 : it->second;
}

hands::HoleCards hole(const std::string& a, const std::string& b) {
  return {hands::parse_card(a), hands::parse_card(b)};
}

TEST(SklanskyRank, Examples) {
  EXPECT_EQ(sklansky_rank(hole("As", "Ah")), 1);
  EXPECT_EQ(sklansky_rank(hole("7c", "2d")), 9);
  EXPECT_EQ(sklansky_rank(hole("Ks", "Ad")), 2);
  EXPECT_EQ(sklansky_rank(hole("Ks", "As")), 1);
}

TEST(SklanskyRank, DuplicateCardThrows) {
  EXPECT_THROW(sklansky_rank(hole("As", "As")), DataError);
}

TEST(SklanskyRank, MatchesListOracleAndIsSymmetric) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> card(0, 51);
  const std::string ranks = "23456789TJQKA", suits = "cdhs";
  for (int i = 0; i < 1000; ++i) {
    int x = card(rng), y = card(rng);
    while (y == x) y = card(rng);
    const std::string a{ranks[x / 4], suits[x % 4]}, b{ranks[y / 4], suits[y % 4]};
    const int r = sklansky_rank(hole(a, b));
    EXPECT_EQ(r, sklansky_rank(hole(b, a)));
    EXPECT_EQ(r, oracle_sklansky(a, b)) << a << b;
  }
}

// Straight enumeration of one hand's pre-flop round, kept separate from the
// library's bookkeeping.
struct OracleDecision {
  std::string player;
  Choice choice;
  Chips own;
  bool forced;
};

std::vector<OracleDecision> oracle_decisions(const HandRecord& h) {
  std::vector<OracleDecision> out;
  for (const auto& p : h.players) {
    Chips own = h.seats.at(p) == 1 ? h.small_blind : h.seats.at(p) == 2 ? h.big_blind : 0;
    const hands::Action* last = nullptr;
    for (const auto& a : h.actions.at(0)) {
      if (a.player != p) continue;
      own += a.amount;
      last = &a;
    }
    if (last == nullptr) {
      out.push_back({p, Choice::play, own, true});
    } else {
      out.push_back({p, last->type == hands::ActionType::fold ? Choice::fold : Choice::play, own,
                     false});
    }
  }
  return out;
}

TEST(ExtractPreflopDecisions, TenHandGameMatchesEnumeration) {
  auto all = fixture_hands();
  std::vector<HandRecord> game(all.begin(), all.begin() + 10);
  const auto result = extract_preflop_decisions(game);
  EXPECT_TRUE(result.diagnostics.empty());
  std::vector<OracleDecision> expected;
  for (const auto& h : game) {
    for (auto& d : oracle_decisions(h)) expected.push_back(d);
  }
  ASSERT_EQ(result.decisions.size(), expected.size());
  ASSERT_EQ(result.decisions.size(), 60u);
  int forced = 0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& d = result.decisions[i];
    EXPECT_EQ(d.player, expected[i].player);
    EXPECT_EQ(d.choice, expected[i].choice);
    EXPECT_EQ(d.own_contribution, expected[i].own);
    EXPECT_EQ(d.forced, expected[i].forced);
    EXPECT_GE(d.own_contribution, 0);
    EXPECT_LE(d.own_contribution, d.preflop_pot);
    ASSERT_TRUE(d.sklansky.has_value());
    EXPECT_GE(*d.sklansky, 1);
    EXPECT_LE(*d.sklansky, 9);
    forced += d.forced ? 1 : 0;
  }
  // Sixty seats minus the hands that were folded round to the big blind.
  EXPECT_EQ(static_cast<int>(std::count_if(result.decisions.begin(), result.decisions.end(),
                                           [](const auto& d) { return d.fittable(); })),
            60 - forced);
}

HandRecord small_hand(const std::string& actions, const std::string& net) {
  const std::string line =
      R"({"game_id":"g","hand_index":0,"small_blind":50,"big_blind":100,)"
      R"("seats":{"A":1,"B":2,"C":3},)"
      R"("hole_cards":{"A":["As","Ah"],"B":["7c","2d"],"C":["Kd","Qd"]},)"
      R"("actions":)" + actions + R"(,"net_result":)" + net + "}\n";
  const auto r = hands::parse_hand_log(line, HandFormat::canonical);
  EXPECT_EQ(r.hands.size(), 1u);
  return r.hands.at(0);
}

TEST(ExtractPreflopDecisions, CallThenFoldOnTheFlopIsPlay) {
  const auto h = small_hand(
      R"([[["C","call",100],["A","call",50],["B","check",0]],)"
      R"([["A","bet",200],["B","fold",0],["C","fold",0]]])",
      R"({"A":200,"B":-100,"C":-100})");
  const std::vector<HandRecord> records = {h};
  const auto d = extract_preflop_decisions(records).decisions;
  ASSERT_EQ(d.size(), 3u);
  for (const auto& x : d) EXPECT_EQ(x.choice, Choice::play) << x.player;
  EXPECT_EQ(d[2].player, "C");
  EXPECT_EQ(d[2].preflop_pot, 250);
  EXPECT_EQ(d[2].n_active, 3);
  EXPECT_FALSE(d[2].forced);
}

TEST(ExtractPreflopDecisions, FoldLosesExactlyTheContribution) {
  const auto h = small_hand(
      R"([[["C","raise",300],["A","call",250],["B","fold",0]],)"
      R"([["A","check",0],["C","bet",200],["A","fold",0]]])",
      R"({"A":-300,"B":-100,"C":400})");
  const std::vector<HandRecord> records = {h};
  const auto d = extract_preflop_decisions(records).decisions;
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d[1].player, "B");
  EXPECT_EQ(d[1].choice, Choice::fold);
  EXPECT_EQ(d[1].own_contribution, 100);
  EXPECT_EQ(d[1].committed_before, 100);
  EXPECT_EQ(d[1].stake_if_play, 300);
  EXPECT_EQ(d[1].net, -d[1].own_contribution);
  EXPECT_EQ(d[1].n_active, 3);
  EXPECT_EQ(d[0].own_contribution, 300);
  EXPECT_EQ(d[0].committed_before, 50);
  EXPECT_EQ(d[0].stake_if_play, 300);
}

TEST(ExtractPreflopDecisions, FoldsInTheFixtureLoseTheirContribution) {
  const auto hands = fixture_hands();
  for (const auto& d : extract_preflop_decisions(hands).decisions) {
    if (d.choice == Choice::fold) { EXPECT_EQ(d.net, -d.own_contribution); }
  }
}

TEST(ExtractPreflopDecisions, FoldToTheBigBlindIsForced) {
  const auto h = small_hand(R"([[["C","fold",0],["A","fold",0]]])", R"({"A":-50,"B":50,"C":0})");
  const std::vector<HandRecord> records = {h};
  const auto d = extract_preflop_decisions(records).decisions;
  ASSERT_EQ(d.size(), 3u);
  EXPECT_TRUE(d[1].forced);
  EXPECT_FALSE(d[1].fittable());
  EXPECT_TRUE(d[0].fittable());
}

TEST(ExtractPreflopDecisions, MissingHoleCardsAreReportedAndNotFittable) {
  auto h = small_hand(R"([[["C","fold",0],["A","call",50],["B","check",0]]])",
                      R"({"A":100,"B":-100,"C":0})");
  h.hole_cards.erase("C");
  const std::vector<HandRecord> records = {h};
  const auto r = extract_preflop_decisions(records);
  ASSERT_EQ(r.decisions.size(), 3u);
  EXPECT_FALSE(r.decisions[2].sklansky.has_value());
  EXPECT_FALSE(r.decisions[2].fittable());
  EXPECT_EQ(r.diagnostics.size(), 1u);
}

PreflopDecision previous(Chips net, Chips pot, int hand_index) {
  PreflopDecision d;
  d.player = "A";
  d.game_id = "g";
  d.hand_index = hand_index;
  d.net = net;
  d.won = net > 0;
  d.hand_pot_total = pot;
  d.small_blind = 50;
  d.big_blind = 100;
  return d;
}

Trigger trigger_after(Chips net, Chips pot) {
  const auto labelled = label_trigger_states({previous(net, pot, 0), previous(0, 150, 1)});
  EXPECT_EQ(labelled[0].trigger, Trigger::neutral);
  return labelled[1].trigger;
}

TEST(LabelTriggerStates, Examples) {
  EXPECT_EQ(trigger_after(100, 150), Trigger::neutral);
  EXPECT_EQ(trigger_after(50, 150), Trigger::neutral);
  EXPECT_EQ(trigger_after(-100, 600), Trigger::neutral);
  EXPECT_EQ(trigger_after(-300, 600), Trigger::post_loss);
  EXPECT_EQ(trigger_after(-101, 600), Trigger::post_loss);
  EXPECT_EQ(trigger_after(20, 151), Trigger::post_win);
  EXPECT_EQ(trigger_after(0, 600), Trigger::neutral);
}

TEST(LabelTriggerStates, OnlyTheImmediatelyPrecedingHandCounts) {
  const auto labelled = label_trigger_states({previous(-500, 600, 0), previous(0, 150, 2)});
  EXPECT_EQ(labelled[1].trigger, Trigger::neutral);
}

std::vector<PreflopDecision> fixture_decisions() {
  const auto hands = fixture_hands();
  return extract_preflop_decisions(hands).decisions;
}

TEST(LabelTriggerStates, FirstHandOfEachGameIsNeutral) {
  for (const auto& d : label_trigger_states(fixture_decisions())) {
    if (d.hand_index == 0) { EXPECT_EQ(d.trigger, Trigger::neutral); }
  }
}

TEST(LabelTriggerStates, IndependentOfGameOrder) {
  const auto base = label_trigger_states(fixture_decisions());
  auto shuffled = fixture_decisions();
  // Reverse the order of whole games while keeping hands ordered within each.
  std::stable_sort(shuffled.begin(), shuffled.end(),
                   [](const auto& a, const auto& b) { return a.game_id > b.game_id; });
  const auto relabelled = label_trigger_states(shuffled);
  std::map<std::tuple<std::string, int, std::string>, Trigger> expected;
  for (const auto& d : base) expected[{d.game_id, d.hand_index, d.player}] = d.trigger;
  for (const auto& d : relabelled) {
    EXPECT_EQ(d.trigger, (expected[{d.game_id, d.hand_index, d.player}]));
  }
  // Every state occurs in the fixture.
  std::map<Trigger, int> seen;
  for (const auto& d : base) ++seen[d.trigger];
  EXPECT_EQ(seen.size(), 3u);
}

TEST(LabelTriggerStates, NoLeakAcrossGames) {
  auto a = previous(-500, 600, 4);
  auto b = previous(0, 150, 5);
  b.game_id = "other";
  const auto labelled = label_trigger_states({a, b});
  EXPECT_EQ(labelled[1].trigger, Trigger::neutral);
}

TEST(PoolHumans, RelabelsOnlyTheAgent) {
  auto decisions = fixture_decisions();
  for (auto& d : decisions) d.agent = Agent::pluribus;
  const auto pooled = pool_humans(decisions);
  ASSERT_EQ(pooled.size(), decisions.size());
  std::map<std::string, int> before, after;
  for (const auto& d : decisions) ++before[d.player];
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    ++after[pooled[i].player];
    EXPECT_EQ(pooled[i].agent, pooled[i].player == "Pluribus" ? Agent::pluribus : Agent::human);
    auto copy = pooled[i];
    copy.agent = decisions[i].agent;
    EXPECT_EQ(copy, decisions[i]);
  }
  EXPECT_EQ(before, after);
}

TEST(PoolHumans, NoHumans) {
  auto d = previous(0, 150, 0);
  d.player = "Pluribus";
  d.agent = Agent::human;
  const auto pooled = pool_humans({d, d});
  for (const auto& x : pooled) EXPECT_EQ(x.agent, Agent::pluribus);
}

TEST(Partition, EachAgentsDecisionsSplitIntoThreeStates) {
  const auto labelled = pool_humans(label_trigger_states(fixture_decisions()));
  for (const auto agent : kAgents) {
    std::size_t total = 0, split = 0;
    for (const auto& d : labelled) total += d.agent == agent;
    for (const auto trigger : kTriggers) {
      split += std::count_if(labelled.begin(), labelled.end(), [&](const auto& d) {
        return d.agent == agent && d.trigger == trigger;
      });
    }
    EXPECT_EQ(total, split);
    EXPECT_GT(total, 0u);
  }
}

}  // namespace
}  // namespace tiltlab::extract
