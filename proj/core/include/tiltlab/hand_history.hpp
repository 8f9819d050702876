#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tiltlab/types.hpp"

namespace tiltlab::hands {

// rank 2..14 (ace high), suit 0..3 for c, d, h, s.
struct Card {
  int rank = 2;
  int suit = 0;

  friend auto operator<=>(const Card&, const Card&) = default;
};

Card parse_card(std::string_view text);
std::string to_string(const Card& card);

using HoleCards = std::array<Card, 2>;

enum class ActionType { fold, check, call, bet, raise, all_in };

std::string_view to_string(ActionType type);
ActionType parse_action_type(std::string_view text);

// amount is the chips the action adds to the pot (0 for fold and check).
struct Action {
  std::string player;
  ActionType type = ActionType::check;
  Chips amount = 0;

  friend bool operator==(const Action&, const Action&) = default;
};

using Round = std::vector<Action>;

// One hand. Seat 1 posts the small blind and seat 2 the big blind; blinds are
// not repeated in `actions`. actions[0] is the pre-flop round.
struct HandRecord {
  std::string game_id;
  int hand_index = 0;
  std::vector<std::string> players;  // seat order
  std::map<std::string, int> seats;
  Chips small_blind = 0;
  Chips big_blind = 0;
  std::map<std::string, HoleCards> hole_cards;
  std::vector<Round> actions;
  std::map<std::string, Chips> net_result;
  // Parsed when present; stacks reset every hand so nothing downstream reads them.
  std::map<std::string, Chips> stacks;
  Chips pot_total = 0;

  // Forced blind posted by this player (0 outside seats 1 and 2).
  Chips blind_of(const std::string& player) const;
  // Blind plus every action amount, over all rounds.
  Chips contribution(const std::string& player) const;

  friend bool operator==(const HandRecord&, const HandRecord&) = default;
};

// Sum of forced blinds and action amounts.
Chips compute_pot_total(const HandRecord& hand);

enum class HandFormat { canonical, pluribus_raw };

HandFormat parse_hand_format(std::string_view text);

class ParseError : public DataError {
 public:
  ParseError(std::size_t line, std::string token, const std::string& message);

  std::size_t line() const { return line_; }
  const std::string& token() const { return token_; }

 private:
  std::size_t line_;
  std::string token_;
};

struct ParseDiagnostic {
  std::size_t line = 0;
  std::string message;
};

struct ParseResult {
  std::vector<HandRecord> hands;
  std::vector<ParseDiagnostic> diagnostics;
};

struct RawFormatOptions {
  Chips small_blind = 50;
  Chips big_blind = 100;
  Chips stack = 10000;
};

/// Parses a whole log. `game_id` is used by the raw adapter, whose lines do not
/// name their game. Canonical input: a malformed line throws ParseError; a
/// truncated final line (no trailing newline) or a hand that never resolved is
/// reported in diagnostics instead. The raw adapter skips any hand it cannot
/// read and reports it.
ParseResult parse_hand_log(std::string_view text, HandFormat format,
                           std::string_view game_id = "", const RawFormatOptions& raw = {});

/// One canonical JSON line (no trailing newline).
std::string emit_canonical(const HandRecord& hand);
std::string emit_canonical(std::span<const HandRecord> hands);

/// Loads several files, one worker per file, merged in path order.
/// The raw adapter takes the game id from the file stem (text after the last '_').
ParseResult load_hand_files(std::span<const std::filesystem::path> paths, HandFormat format,
                            const RawFormatOptions& raw = {});

// observed name -> canonical player id.
struct AliasMap {
  std::map<std::string, std::string> entries;
};

AliasMap parse_alias_map(std::string_view json_text);

class UnmappedAliasError : public DataError {
 public:
  explicit UnmappedAliasError(std::vector<std::string> names);
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
};

/// Replaces every player name by its canonical id. Canonical ids map to
/// themselves, which makes the operation idempotent. Throws UnmappedAliasError
/// listing every unmapped name, and DataError if a human name maps to the
/// Pluribus id (or the reverse) or two seats of one hand collapse to one id.
std::vector<HandRecord> normalize_aliases(std::span<const HandRecord> records,
                                          const AliasMap& map);

std::vector<HandRecord> exclude_games(std::span<const HandRecord> records,
                                      const std::set<std::string>& game_ids);

enum class HandIssue { zero_sum, seat_bijection, negative_amount, passive_amount, pot_total,
                       unknown_player };

std::string_view to_string(HandIssue issue);

struct HandDiagnostic {
  HandIssue issue = HandIssue::zero_sum;
  std::string game_id;
  int hand_index = 0;
  std::string message;
};

/// Zero-sum, seat bijection and amount checks. Never mutates input.
std::vector<HandDiagnostic> validate_hands(std::span<const HandRecord> records);

}  // namespace tiltlab::hands
