#include "tiltlab/hand_history.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <future>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

namespace tiltlab::hands {

using nlohmann::json;

namespace {

constexpr std::string_view kRanks = "23456789TJQKA";
constexpr std::string_view kSuits = "cdhs";

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(text.substr(start));
      return out;
    }
    out.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

Card parse_card(std::string_view text) {
  if (text.size() != 2) throw DataError("card must be two characters: '" + std::string(text) + "'");
  const auto r = kRanks.find(text[0]);
  const auto s = kSuits.find(text[1]);
  if (r == std::string_view::npos || s == std::string_view::npos) {
    throw DataError("invalid card '" + std::string(text) + "'");
  }
  return Card{static_cast<int>(r) + 2, static_cast<int>(s)};
}

std::string to_string(const Card& card) {
  return {kRanks[static_cast<std::size_t>(card.rank - 2)], kSuits[static_cast<std::size_t>(card.suit)]};
}

std::string_view to_string(ActionType type) {
  switch (type) {
    case ActionType::fold:
      return "fold";
    case ActionType::check:
      return "check";
    case ActionType::call:
      return "call";
    case ActionType::bet:
      return "bet";
    case ActionType::raise:
      return "raise";
    case ActionType::all_in:
      return "all-in";
  }
  return "check";
}

ActionType parse_action_type(std::string_view text) {
  if (text == "fold") return ActionType::fold;
  if (text == "check") return ActionType::check;
  if (text == "call") return ActionType::call;
  if (text == "bet") return ActionType::bet;
  if (text == "raise") return ActionType::raise;
  if (text == "all-in" || text == "all_in" || text == "allin") return ActionType::all_in;
  throw DataError("unknown action '" + std::string(text) + "'");
}

Chips HandRecord::blind_of(const std::string& player) const {
  const auto it = seats.find(player);
  if (it == seats.end()) return 0;
  if (it->second == 1) return small_blind;
  if (it->second == 2) return big_blind;
  return 0;
}

Chips HandRecord::contribution(const std::string& player) const {
  Chips total = blind_of(player);
  for (const auto& round : actions) {
    for (const auto& a : round) {
      if (a.player == player) total += a.amount;
    }
  }
  return total;
}

Chips compute_pot_total(const HandRecord& hand) {
  Chips total = 0;
  for (const auto& p : hand.players) total += hand.blind_of(p);
  for (const auto& round : hand.actions) {
    for (const auto& a : round) total += a.amount;
  }
  return total;
}

HandFormat parse_hand_format(std::string_view text) {
  if (text == "canonical") return HandFormat::canonical;
  if (text == "pluribus-raw" || text == "pluribus_raw") return HandFormat::pluribus_raw;
  throw DataError("unknown hand log format '" + std::string(text) + "'");
}

ParseError::ParseError(std::size_t line, std::string token, const std::string& message)
    : DataError("line " + std::to_string(line) + ": " + message + " (at '" + token + "')"),
      line_(line),
      token_(std::move(token)) {}

namespace {

// Thrown while decoding a JSON object; carries the offending token.
struct FieldError {
  std::string token;
  std::string message;
};

const json& require(const json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw FieldError{key, "missing field"};
  return *it;
}

template <typename T>
T get_as(const json& value, const std::string& token) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw FieldError{token.empty() ? value.dump() : token, "wrong type"};
  }
}

std::vector<std::string> seat_order(const std::map<std::string, int>& seats) {
  std::vector<std::pair<int, std::string>> order;
  for (const auto& [name, seat] : seats) order.emplace_back(seat, name);
  std::sort(order.begin(), order.end());
  std::vector<std::string> out;
  for (auto& [seat, name] : order) out.push_back(std::move(name));
  return out;
}

// Players still holding cards after all actions.
std::vector<std::string> unfolded(const HandRecord& hand) {
  std::set<std::string> folded;
  for (const auto& round : hand.actions) {
    for (const auto& a : round) {
      if (a.type == ActionType::fold) folded.insert(a.player);
    }
  }
  std::vector<std::string> out;
  for (const auto& p : hand.players) {
    if (!folded.contains(p)) out.push_back(p);
  }
  return out;
}

enum class Decoded { ok, unresolved };

Decoded decode_canonical(const json& obj, HandRecord& hand) {
  if (!obj.is_object()) throw FieldError{obj.dump().substr(0, 32), "hand record must be an object"};
  hand.game_id = get_as<std::string>(require(obj, "game_id"), "game_id");
  hand.hand_index = get_as<int>(require(obj, "hand_index"), "hand_index");
  hand.small_blind = get_as<Chips>(require(obj, "small_blind"), "small_blind");
  hand.big_blind = get_as<Chips>(require(obj, "big_blind"), "big_blind");

  const auto& seats = require(obj, "seats");
  if (!seats.is_object()) throw FieldError{"seats", "seats must map player to seat"};
  for (const auto& [name, seat] : seats.items()) {
    hand.seats[name] = get_as<int>(seat, name);
  }
  hand.players = seat_order(hand.seats);

  if (const auto it = obj.find("hole_cards"); it != obj.end() && !it->is_null()) {
    for (const auto& [name, cards] : it->items()) {
      if (!cards.is_array() || cards.size() != 2) throw FieldError{name, "hole cards must be a pair"};
      HoleCards hc{};
      for (std::size_t i = 0; i < 2; ++i) {
        const auto text = get_as<std::string>(cards[i], name);
        try {
          hc[i] = parse_card(text);
        } catch (const DataError&) {
          throw FieldError{text, "invalid card"};
        }
      }
      hand.hole_cards[name] = hc;
    }
  }

  const auto& rounds = require(obj, "actions");
  if (!rounds.is_array()) throw FieldError{"actions", "actions must be an array of rounds"};
  for (const auto& round : rounds) {
    if (!round.is_array()) throw FieldError{round.dump().substr(0, 32), "round must be an array"};
    Round r;
    for (const auto& entry : round) {
      if (!entry.is_array() || entry.size() != 3) {
        throw FieldError{entry.dump().substr(0, 32), "action must be [player, action, amount]"};
      }
      Action a;
      a.player = get_as<std::string>(entry[0], "");
      const auto kind = get_as<std::string>(entry[1], "");
      try {
        a.type = parse_action_type(kind);
      } catch (const DataError&) {
        throw FieldError{kind, "unknown action"};
      }
      a.amount = get_as<Chips>(entry[2], "");
      r.push_back(std::move(a));
    }
    hand.actions.push_back(std::move(r));
  }

  if (const auto it = obj.find("stacks"); it != obj.end() && !it->is_null()) {
    for (const auto& [name, chips] : it->items()) hand.stacks[name] = get_as<Chips>(chips, name);
  }

  hand.pot_total = compute_pot_total(hand);
  if (const auto it = obj.find("pot_total"); it != obj.end() && !it->is_null()) {
    hand.pot_total = get_as<Chips>(*it, "pot_total");
  }

  if (const auto it = obj.find("net_result"); it != obj.end() && !it->is_null()) {
    for (const auto& [name, chips] : it->items()) hand.net_result[name] = get_as<Chips>(chips, name);
    return Decoded::ok;
  }
  // Without a net result only an uncontested hand can be settled.
  const auto remaining = unfolded(hand);
  if (remaining.size() != 1) return Decoded::unresolved;
  for (const auto& p : hand.players) {
    const Chips put_in = hand.contribution(p);
    hand.net_result[p] = p == remaining.front() ? hand.pot_total - put_in : -put_in;
  }
  return Decoded::ok;
}

std::string error_snippet(std::string_view line, std::size_t byte) {
  const std::size_t at = byte > 0 ? std::min(byte - 1, line.size()) : 0;
  return std::string(line.substr(at, 16));
}

ParseResult parse_canonical(std::string_view text) {
  ParseResult result;
  const auto lines = split(text, '\n');
  const bool newline_terminated = !text.empty() && text.back() == '\n';
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const auto line = trim(lines[i]);
    if (line.empty()) continue;
    const bool trailing = (i + 1 == lines.size()) && !newline_terminated;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      if (trailing) {
        result.diagnostics.push_back({line_no, "incomplete trailing hand record"});
        continue;
      }
      throw ParseError(line_no, error_snippet(line, e.byte), "malformed hand record");
    }
    HandRecord hand;
    try {
      if (decode_canonical(obj, hand) == Decoded::unresolved) {
        result.diagnostics.push_back(
            {line_no, "hand " + hand.game_id + "#" + std::to_string(hand.hand_index) +
                          " has no net_result and did not end uncontested; skipped"});
        continue;
      }
    } catch (const FieldError& e) {
      throw ParseError(line_no, e.token, e.message);
    }
    result.hands.push_back(std::move(hand));
  }
  return result;
}

std::optional<Chips> to_chips(std::string_view text) {
  Chips value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return value;
}

// ACPC-style state line:
//   STATE:<hand>:<betting rounds separated by '/'>:<hole|hole|.../board>:<net|net|...>:<name|name|...>
// Raises ("r<total>") give the player's total commitment for the hand.
HandRecord parse_raw_line(std::string_view line, std::string_view game_id,
                          const RawFormatOptions& opt) {
  const auto fields = split(line, ':');
  if (fields.size() != 6 || fields[0] != "STATE") throw DataError("not a STATE line");
  HandRecord hand;
  hand.game_id = std::string(game_id);
  const auto index = to_chips(fields[1]);
  if (!index) throw DataError("bad hand number '" + std::string(fields[1]) + "'");
  hand.hand_index = static_cast<int>(*index);
  hand.small_blind = opt.small_blind;
  hand.big_blind = opt.big_blind;

  const auto names = split(fields[5], '|');
  const std::size_t n = names.size();
  if (n < 3 || n > 6) throw DataError("unsupported player count");
  for (std::size_t i = 0; i < n; ++i) {
    const std::string name(names[i]);
    if (name.empty() || hand.seats.contains(name)) throw DataError("bad player list");
    hand.seats[name] = static_cast<int>(i) + 1;
    hand.players.push_back(name);
    hand.stacks[name] = opt.stack;
  }

  const auto nets = split(fields[4], '|');
  if (nets.size() != n) throw DataError("net result count does not match players");
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = to_chips(nets[i]);
    if (!v) throw DataError("bad net result '" + std::string(nets[i]) + "'");
    hand.net_result[hand.players[i]] = *v;
  }

  const auto card_parts = split(fields[3], '/');
  const auto holes = split(card_parts.front(), '|');
  if (holes.size() == n) {
    for (std::size_t i = 0; i < n; ++i) {
      if (holes[i].size() != 4) continue;
      hand.hole_cards[hand.players[i]] = {parse_card(holes[i].substr(0, 2)),
                                          parse_card(holes[i].substr(2, 2))};
    }
  }

  std::vector<Chips> committed(n, 0);
  committed[0] = opt.small_blind;
  committed[1] = opt.big_blind;
  std::vector<bool> folded(n, false);
  auto all_in = [&](std::size_t p) { return committed[p] >= opt.stack; };
  auto next_to_act = [&](std::size_t from) -> std::optional<std::size_t> {
    for (std::size_t k = 1; k <= n; ++k) {
      const auto p = (from + k) % n;
      if (!folded[p] && !all_in(p)) return p;
    }
    return std::nullopt;
  };

  const auto rounds = split(fields[2], '/');
  for (std::size_t r = 0; r < rounds.size(); ++r) {
    Round actions;
    Chips level = *std::max_element(committed.begin(), committed.end());
    bool opened = r == 0;  // the big blind opens pre-flop betting
    // Pre-flop starts left of the big blind; later rounds at the first live seat.
    auto actor = next_to_act(r == 0 ? 1 : n - 1);
    std::string_view s = rounds[r];
    while (!s.empty()) {
      if (!actor) throw DataError("action after betting closed");
      const auto p = *actor;
      Action a;
      a.player = hand.players[p];
      const char c = s.front();
      s.remove_prefix(1);
      if (c == 'f') {
        a.type = ActionType::fold;
        folded[p] = true;
      } else if (c == 'c' || c == 'k') {
        const Chips owed = std::min(level, opt.stack) - committed[p];
        a.amount = std::max<Chips>(owed, 0);
        committed[p] += a.amount;
        a.type = a.amount == 0 ? ActionType::check : ActionType::call;
        if (a.amount > 0 && all_in(p)) a.type = ActionType::all_in;
      } else if (c == 'r' || c == 'b') {
        std::size_t digits = 0;
        while (digits < s.size() && s[digits] >= '0' && s[digits] <= '9') ++digits;
        const auto to = to_chips(s.substr(0, digits));
        if (!to || *to <= committed[p]) throw DataError("bad raise amount");
        s.remove_prefix(digits);
        a.amount = *to - committed[p];
        committed[p] = *to;
        a.type = opened ? ActionType::raise : ActionType::bet;
        if (all_in(p)) a.type = ActionType::all_in;
        level = std::max(level, *to);
        opened = true;
      } else {
        throw DataError(std::string("unknown action character '") + c + "'");
      }
      actions.push_back(std::move(a));
      actor = next_to_act(p);
    }
    hand.actions.push_back(std::move(actions));
  }
  hand.pot_total = compute_pot_total(hand);
  return hand;
}

ParseResult parse_raw(std::string_view text, std::string_view game_id,
                      const RawFormatOptions& opt) {
  ParseResult result;
  const auto lines = split(text, '\n');
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = trim(lines[i]);
    if (line.empty()) continue;
    if (!line.starts_with("STATE:")) {
      result.diagnostics.push_back({i + 1, "not a hand line; skipped"});
      continue;
    }
    try {
      result.hands.push_back(parse_raw_line(line, game_id, opt));
    } catch (const DataError& e) {
      result.diagnostics.push_back({i + 1, std::string("unreadable hand skipped: ") + e.what()});
    }
  }
  return result;
}

json encode_canonical(const HandRecord& hand) {
  json obj = json::object();
  obj["game_id"] = hand.game_id;
  obj["hand_index"] = hand.hand_index;
  obj["small_blind"] = hand.small_blind;
  obj["big_blind"] = hand.big_blind;
  obj["seats"] = hand.seats;
  json cards = json::object();
  for (const auto& [name, hc] : hand.hole_cards) cards[name] = {to_string(hc[0]), to_string(hc[1])};
  obj["hole_cards"] = cards;
  json rounds = json::array();
  for (const auto& round : hand.actions) {
    json r = json::array();
    for (const auto& a : round) r.push_back({a.player, std::string(to_string(a.type)), a.amount});
    rounds.push_back(r);
  }
  obj["actions"] = rounds;
  obj["net_result"] = hand.net_result;
  if (!hand.stacks.empty()) obj["stacks"] = hand.stacks;
  obj["pot_total"] = hand.pot_total;
  return obj;
}

}  // namespace

ParseResult parse_hand_log(std::string_view text, HandFormat format, std::string_view game_id,
                           const RawFormatOptions& raw) {
  switch (format) {
    case HandFormat::canonical:
      return parse_canonical(text);
    case HandFormat::pluribus_raw:
      return parse_raw(text, game_id, raw);
  }
  throw DataError("unknown hand log format");
}

std::string emit_canonical(const HandRecord& hand) { return encode_canonical(hand).dump(); }

std::string emit_canonical(std::span<const HandRecord> hands) {
  std::string out;
  for (const auto& h : hands) {
    out += emit_canonical(h);
    out += '\n';
  }
  return out;
}

ParseResult load_hand_files(std::span<const std::filesystem::path> paths, HandFormat format,
                            const RawFormatOptions& raw) {
  std::vector<std::filesystem::path> sorted(paths.begin(), paths.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::future<ParseResult>> jobs;
  for (const auto& path : sorted) {
    jobs.push_back(std::async(std::launch::async, [path, format, raw] {
      std::ifstream in(path, std::ios::binary);
      if (!in) throw DataError("cannot open hand log " + path.string());
      std::ostringstream buffer;
      buffer << in.rdbuf();
      auto stem = path.stem().string();
      if (const auto cut = stem.rfind('_'); cut != std::string::npos) stem = stem.substr(cut + 1);
      try {
        return parse_hand_log(buffer.str(), format, stem, raw);
      } catch (const ParseError& e) {
        throw DataError(path.string() + ": " + e.what());
      }
    }));
  }
  ParseResult merged;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    auto part = jobs[i].get();
    for (auto& d : part.diagnostics) {
      d.message = sorted[i].string() + ": " + d.message;
      merged.diagnostics.push_back(std::move(d));
    }
    for (auto& h : part.hands) merged.hands.push_back(std::move(h));
  }
  return merged;
}

AliasMap parse_alias_map(std::string_view json_text) {
  json obj;
  try {
    obj = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("alias map is not valid JSON: ") + e.what());
  }
  if (!obj.is_object()) throw DataError("alias map must be a JSON object of name -> id");
  AliasMap map;
  for (const auto& [name, id] : obj.items()) {
    if (!id.is_string() || id.get<std::string>().empty()) {
      throw DataError("alias map entry '" + name + "' must be a non-empty string");
    }
    map.entries[name] = id.get<std::string>();
  }
  return map;
}

UnmappedAliasError::UnmappedAliasError(std::vector<std::string> names)
    : DataError([&] {
        std::string msg = "unmapped player names:";
        for (const auto& n : names) msg += " " + n;
        return msg;
      }()),
      names_(std::move(names)) {}

std::vector<HandRecord> normalize_aliases(std::span<const HandRecord> records,
                                          const AliasMap& map) {
  std::set<std::string> canonical;
  for (const auto& [name, id] : map.entries) {
    if (id.empty()) throw DataError("alias map entry '" + name + "' has an empty id");
    if ((name == kPluribusId) != (id == kPluribusId)) {
      throw DataError("alias map must not merge '" + name + "' with '" + id +
                      "': Pluribus keeps its own identity");
    }
    canonical.insert(id);
  }
  auto lookup = [&](const std::string& name) -> const std::string* {
    if (const auto it = map.entries.find(name); it != map.entries.end()) return &it->second;
    if (canonical.contains(name)) return &name;
    return nullptr;
  };

  std::set<std::string> missing;
  for (const auto& hand : records) {
    for (const auto& p : hand.players) {
      if (!lookup(p)) missing.insert(p);
    }
  }
  if (!missing.empty()) throw UnmappedAliasError({missing.begin(), missing.end()});

  std::vector<HandRecord> out;
  out.reserve(records.size());
  for (const auto& hand : records) {
    HandRecord h = hand;
    auto rename = [&](const std::string& name) {
      const auto* id = lookup(name);
      return id ? *id : name;
    };
    auto remap = [&](const auto& m) {
      std::decay_t<decltype(m)> next;
      for (const auto& [name, value] : m) {
        if (!next.emplace(rename(name), value).second) {
          throw DataError("hand " + hand.game_id + "#" + std::to_string(hand.hand_index) +
                          ": two players map to id '" + rename(name) + "'");
        }
      }
      return next;
    };
    h.seats = remap(hand.seats);
    h.hole_cards = remap(hand.hole_cards);
    h.net_result = remap(hand.net_result);
    h.stacks = remap(hand.stacks);
    for (auto& p : h.players) p = rename(p);
    for (auto& round : h.actions) {
      for (auto& a : round) a.player = rename(a.player);
    }
    out.push_back(std::move(h));
  }
  return out;
}

std::vector<HandRecord> exclude_games(std::span<const HandRecord> records,
                                      const std::set<std::string>& game_ids) {
  std::vector<HandRecord> out;
  for (const auto& h : records) {
    if (!game_ids.contains(h.game_id)) out.push_back(h);
  }
  return out;
}

std::string_view to_string(HandIssue issue) {
  switch (issue) {
    case HandIssue::zero_sum:
      return "zero_sum";
    case HandIssue::seat_bijection:
      return "seat_bijection";
    case HandIssue::negative_amount:
      return "negative_amount";
    case HandIssue::passive_amount:
      return "passive_amount";
    case HandIssue::pot_total:
      return "pot_total";
    case HandIssue::unknown_player:
      return "unknown_player";
  }
  return "zero_sum";
}

std::vector<HandDiagnostic> validate_hands(std::span<const HandRecord> records) {
  std::vector<HandDiagnostic> out;
  for (const auto& hand : records) {
    auto report = [&](HandIssue issue, std::string message) {
      out.push_back({issue, hand.game_id, hand.hand_index, std::move(message)});
    };

    Chips net = 0;
    for (const auto& [name, chips] : hand.net_result) net += chips;
    if (net != 0) report(HandIssue::zero_sum, "net results sum to " + std::to_string(net));

    std::set<int> seen;
    bool seats_ok = hand.seats.size() == hand.players.size();
    for (const auto& [name, seat] : hand.seats) {
      if (seat < 1 || seat > static_cast<int>(hand.seats.size()) || !seen.insert(seat).second) {
        seats_ok = false;
      }
    }
    if (!seats_ok) report(HandIssue::seat_bijection, "seats are not a bijection onto 1..n");

    for (const auto& round : hand.actions) {
      for (const auto& a : round) {
        if (a.amount < 0) {
          report(HandIssue::negative_amount, a.player + " " + std::string(to_string(a.type)) +
                                                 " with negative amount");
        } else if ((a.type == ActionType::fold || a.type == ActionType::check) && a.amount != 0) {
          report(HandIssue::passive_amount,
                 a.player + " " + std::string(to_string(a.type)) + " with non-zero amount");
        }
        if (!hand.seats.contains(a.player)) {
          report(HandIssue::unknown_player, "action by unseated player " + a.player);
        }
      }
    }

    const Chips pot = compute_pot_total(hand);
    if (pot != hand.pot_total) {
      report(HandIssue::pot_total, "pot_total " + std::to_string(hand.pot_total) +
                                       " differs from contributions " + std::to_string(pot));
    }
  }
  return out;
}

}  // namespace tiltlab::hands
