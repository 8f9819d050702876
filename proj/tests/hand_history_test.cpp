#include "tiltlab/hand_history.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <string>
#include <vector>

#include "test_support.hpp"

namespace tiltlab::hands {
namespace {

using testing::fixture;
using testing::slurp;

// Six players, blinds 50/100, everyone folds to the big blind; no net_result,
// so the parser has to settle the hand itself.
constexpr const char* kFoldToBigBlind =
    R"({"game_id":"7","hand_index":3,"small_blind":50,"big_blind":100,)"
    R"("seats":{"A":1,"B":2,"C":3,"D":4,"E":5,"Pluribus":6},)"
    R"("actions":[[["C","fold",0],["D","fold",0],["E","fold",0],["Pluribus","fold",0],["A","fold",0]]]})";

std::vector<HandRecord> parse(const std::string& text) {
  return parse_hand_log(text, HandFormat::canonical).hands;
}

TEST(Cards, ParseAndPrint) {
  EXPECT_EQ(parse_card("As").rank, 14);
  EXPECT_EQ(parse_card("As").suit, 3);
  EXPECT_EQ(parse_card("Tc").rank, 10);
  EXPECT_EQ(to_string(parse_card("7d")), "7d");
  EXPECT_THROW(parse_card("1s"), DataError);
  EXPECT_THROW(parse_card("Ax"), DataError);
  EXPECT_THROW(parse_card("A"), DataError);
}

TEST(ParseHandLog, FoldToBigBlindSettlesFromBlinds) {
  const auto hands = parse(std::string(kFoldToBigBlind) + "\n");
  ASSERT_EQ(hands.size(), 1u);
  const auto& h = hands[0];
  EXPECT_EQ(h.net_result.at("B"), 50);
  EXPECT_EQ(h.net_result.at("A"), -50);
  for (const auto* p : {"C", "D", "E", "Pluribus"}) EXPECT_EQ(h.net_result.at(p), 0) << p;
  EXPECT_EQ(h.pot_total, 150);
  EXPECT_EQ(h.players, (std::vector<std::string>{"A", "B", "C", "D", "E", "Pluribus"}));
  EXPECT_TRUE(validate_hands(hands).empty());
}

TEST(ParseHandLog, EmptyInput) {
  const auto r = parse_hand_log("", HandFormat::canonical);
  EXPECT_TRUE(r.hands.empty());
  EXPECT_TRUE(r.diagnostics.empty());
}

TEST(ParseHandLog, MalformedLineReportsLineAndToken) {
  const std::string text = std::string(kFoldToBigBlind) + "\n" +
                           R"({"game_id":"7","hand_index":4,"small_blind":50,"big_blind":100,)"
                           R"("seats":{"A":1,"B":2},"actions":[[["A","shove",0]]]})" "\n";
  try {
    parse(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.token(), "shove");
  }
  try {
    parse("{\"game_id\": \n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
  }
}

TEST(ParseHandLog, MissingFieldNamesTheField) {
  try {
    parse(R"({"game_id":"7","small_blind":50,"big_blind":100,"seats":{},"actions":[]})" "\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.token(), "hand_index");
  }
}

TEST(ParseHandLog, TruncatedTrailingHandIsReported) {
  const std::string full = kFoldToBigBlind;
  const std::string text = full + "\n" + full.substr(0, full.size() / 2);
  const auto r = parse_hand_log(text, HandFormat::canonical);
  EXPECT_EQ(r.hands.size(), 1u);
  ASSERT_EQ(r.diagnostics.size(), 1u);
  EXPECT_EQ(r.diagnostics[0].line, 2u);
}

TEST(ParseHandLog, UnresolvedHandWithoutNetResultIsReported) {
  const std::string text =
      R"({"game_id":"7","hand_index":0,"small_blind":50,"big_blind":100,)"
      R"("seats":{"A":1,"B":2,"C":3},"actions":[[["C","call",100],["A","call",50],["B","check",0]]]})"
      "\n";
  const auto r = parse_hand_log(text, HandFormat::canonical);
  EXPECT_TRUE(r.hands.empty());
  EXPECT_EQ(r.diagnostics.size(), 1u);
}

TEST(ParseHandLog, UnknownFormat) {
  EXPECT_THROW(parse_hand_format("xml"), DataError);
  EXPECT_EQ(parse_hand_format("pluribus-raw"), HandFormat::pluribus_raw);
}

TEST(ParseHandLog, ThreeHandRoundTrip) {
  const auto text = slurp(fixture("hands_200.jsonl"));
  auto all = parse(text);
  ASSERT_GE(all.size(), 3u);
  const std::vector<HandRecord> three(all.begin(), all.begin() + 3);
  EXPECT_EQ(parse(emit_canonical(three)), three);
}

TEST(ParseHandLog, FixtureFileRoundTripsByteForByte) {
  const auto text = slurp(fixture("hands_200.jsonl"));
  const auto hands = parse(text);
  EXPECT_EQ(hands.size(), 200u);
  EXPECT_EQ(emit_canonical(hands), text);
  EXPECT_TRUE(validate_hands(hands).empty());
}

TEST(ParseHandLog, WinnerCollectsEveryOtherLoss) {
  for (const auto& h : parse(slurp(fixture("hands_200.jsonl")))) {
    const auto top = std::max_element(h.net_result.begin(), h.net_result.end(),
                                      [](const auto& a, const auto& b) { return a.second < b.second; });
    Chips others = 0;
    int winners = 0;
    for (const auto& [name, chips] : h.net_result) {
      if (chips > 0) ++winners;
      if (name != top->first) others += chips;
    }
    if (winners == 1) { EXPECT_EQ(top->second, -others) << h.game_id << "#" << h.hand_index; }
  }
}

TEST(RawAdapter, MatchesTheCanonicalRecordingOfTheSameHands) {
  for (const std::string game : {"103", "103b"}) {
    const auto raw = parse_hand_log(slurp(fixture("raw/pluribus_" + game + ".log")),
                                    HandFormat::pluribus_raw, game);
    auto expected = parse(slurp(fixture("raw/pluribus_" + game + ".expected.jsonl")));
    ASSERT_EQ(raw.hands.size(), expected.size());
    // The header comment line is skipped with a diagnostic.
    EXPECT_EQ(raw.diagnostics.size(), 1u);
    for (std::size_t i = 0; i < raw.hands.size(); ++i) {
      auto got = raw.hands[i];
      EXPECT_EQ(got.stacks.size(), got.players.size());
      got.stacks.clear();
      EXPECT_EQ(got, expected[i]) << game << "#" << i;
    }
  }
}

TEST(RawAdapter, SkipsUnreadableHands) {
  const std::string text =
      "STATE:0:ffffc:AsKs|2c3c|4d5d|6h7h|8s9s|TcJc:0|0|0|0|0|0:a|b|c|d|e|f\n"
      "STATE:1:zz:AsKs|2c3c:0|0:a|b\n"
      "STATE:2:ff:AsKs|2c3c|4d5d:-50|50|0:a|b|c\n";
  const auto r = parse_hand_log(text, HandFormat::pluribus_raw, "9");
  EXPECT_EQ(r.hands.size(), 2u);
  EXPECT_EQ(r.diagnostics.size(), 1u);
  EXPECT_EQ(r.hands[1].net_result.at("b"), 50);
}

TEST(LoadHandFiles, MergesInPathOrder) {
  const std::vector<std::filesystem::path> paths = {fixture("raw/pluribus_103b.log"),
                                                    fixture("raw/pluribus_103.log")};
  const auto r = load_hand_files(paths, HandFormat::pluribus_raw);
  ASSERT_EQ(r.hands.size(), 24u);
  EXPECT_EQ(r.hands.front().game_id, "103");
  EXPECT_EQ(r.hands.back().game_id, "103b");
}

std::vector<HandRecord> appendix_c_hands() {
  const std::vector<std::filesystem::path> paths = {fixture("raw/pluribus_103.log"),
                                                    fixture("raw/pluribus_103b.log")};
  return load_hand_files(paths, HandFormat::pluribus_raw).hands;
}

TEST(NormalizeAliases, UnifiesTheTwoNamesOfOneSeat) {
  const auto hands = appendix_c_hands();
  AliasMap map;
  for (const auto* name : {"Pluribus", "Budd", "Eddie", "Gogo", "Bill"}) map.entries[name] = name;
  map.entries["MrOrange"] = "P_A";
  map.entries["MrBrown"] = "P_A";
  const auto out = normalize_aliases(hands, map);
  ASSERT_EQ(out.size(), hands.size());
  for (const auto& h : out) {
    EXPECT_TRUE(h.seats.contains("P_A"));
    EXPECT_FALSE(h.seats.contains("MrOrange"));
    EXPECT_FALSE(h.seats.contains("MrBrown"));
    EXPECT_TRUE(h.seats.contains("Pluribus"));
  }
  EXPECT_TRUE(validate_hands(out).empty());
}

TEST(NormalizeAliases, IdentityMapLeavesRecordsUnchanged) {
  const auto hands = parse(slurp(fixture("hands_200.jsonl")));
  AliasMap map;
  for (const auto& h : hands) {
    for (const auto& p : h.players) map.entries[p] = p;
  }
  EXPECT_EQ(normalize_aliases(hands, map), hands);
}

TEST(NormalizeAliases, IsIdempotent) {
  const auto hands = appendix_c_hands();
  const auto map = parse_alias_map(slurp(fixture("alias_map.json")));
  const auto once = normalize_aliases(hands, map);
  EXPECT_EQ(normalize_aliases(once, map), once);
}

TEST(NormalizeAliases, ListsEveryUnmappedName) {
  const auto hands = appendix_c_hands();
  AliasMap map;
  map.entries["Pluribus"] = "Pluribus";
  map.entries["Budd"] = "Budd";
  map.entries["Eddie"] = "Eddie";
  map.entries["Gogo"] = "Gogo";
  try {
    normalize_aliases(hands, map);
    FAIL() << "expected UnmappedAliasError";
  } catch (const UnmappedAliasError& e) {
    EXPECT_EQ(e.names(), (std::vector<std::string>{"Bill", "MrBrown", "MrOrange"}));
    EXPECT_NE(std::string(e.what()).find("MrBrown"), std::string::npos);
  }
}

TEST(NormalizeAliases, NeverMergesPluribus) {
  const auto hands = appendix_c_hands();
  auto map = parse_alias_map(slurp(fixture("alias_map.json")));
  map.entries["Bill"] = "Pluribus";
  EXPECT_THROW(normalize_aliases(hands, map), DataError);
}

TEST(NormalizeAliases, RejectsTwoSeatsCollapsingToOneId) {
  const auto hands = appendix_c_hands();
  auto map = parse_alias_map(slurp(fixture("alias_map.json")));
  map.entries["Budd"] = "Eddie";
  EXPECT_THROW(normalize_aliases(hands, map), DataError);
}

TEST(AliasMapParsing, RejectsMalformedMaps) {
  EXPECT_THROW(parse_alias_map("[1,2]"), DataError);
  EXPECT_THROW(parse_alias_map(R"({"a": ""})"), DataError);
  EXPECT_THROW(parse_alias_map("{"), DataError);
}

TEST(ExcludeGames, DropsListedGames) {
  const auto hands = appendix_c_hands();
  const auto kept = exclude_games(hands, {"103b"});
  EXPECT_EQ(kept.size(), 12u);
  for (const auto& h : kept) EXPECT_EQ(h.game_id, "103");
}

TEST(ValidateHands, ReportsEachViolation) {
  auto base = parse(std::string(kFoldToBigBlind) + "\n");
  ASSERT_EQ(base.size(), 1u);

  auto zero_sum = base;
  zero_sum[0].net_result["B"] += 10;
  auto d = validate_hands(zero_sum);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].issue, HandIssue::zero_sum);

  auto seats = base;
  seats[0].seats["D"] = 3;
  d = validate_hands(seats);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].issue, HandIssue::seat_bijection);

  auto negative = base;
  negative[0].actions[0].push_back({"B", ActionType::bet, -5});
  negative[0].pot_total = compute_pot_total(negative[0]);
  d = validate_hands(negative);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].issue, HandIssue::negative_amount);

  const auto before = seats;
  validate_hands(seats);
  EXPECT_EQ(seats, before);
}

}  // namespace
}  // namespace tiltlab::hands
