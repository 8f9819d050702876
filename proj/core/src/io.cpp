#include "tiltlab/io.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

namespace tiltlab::io {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

double number_from(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

json params_json(const rum::RumParams& p) { return {{"omega", p.omega}, {"lambda", p.lambda}}; }

rum::RumParams params_from(const json& j) {
  return {j.at("omega").get<double>(), j.at("lambda").get<double>()};
}

rum::StartStatus parse_status(std::string_view text) {
  for (const auto s : {rum::StartStatus::converged, rum::StartStatus::boundary,
                       rum::StartStatus::max_iterations, rum::StartStatus::line_search_failed,
                       rum::StartStatus::non_finite, rum::StartStatus::flat}) {
    if (rum::to_string(s) == text) return s;
  }
  throw DataError("unknown start status '" + std::string(text) + "'");
}

json gamble_json(const Gamble& g) {
  return {{"play", {{g.play[0].probability, g.play[0].payoff}, {g.play[1].probability, g.play[1].payoff}}},
          {"fold", {{g.fold[0].probability, g.fold[0].payoff}}}};
}

Gamble gamble_from(const json& j) {
  Gamble g;
  const auto& play = j.at("play");
  const auto& fold = j.at("fold");
  if (play.size() != 2 || fold.size() != 1) throw DataError("gamble must have 2 play and 1 fold outcome");
  for (std::size_t i = 0; i < 2; ++i) g.play[i] = {play[i].at(0).get<double>(), play[i].at(1).get<double>()};
  g.fold[0] = {fold[0].at(0).get<double>(), fold[0].at(1).get<double>()};
  validate_gamble(g);
  return g;
}

json start_json(const rum::StartResult& s) {
  return {{"index", s.index},
          {"start", params_json(s.start)},
          {"estimate", params_json(s.estimate)},
          {"log_likelihood", number_or_null(s.log_likelihood)},
          {"start_log_likelihood", number_or_null(s.start_log_likelihood)},
          {"gradient_norm", number_or_null(s.gradient_norm)},
          {"iterations", s.iterations},
          {"status", std::string(rum::to_string(s.status))}};
}

rum::StartResult start_from(const json& j) {
  rum::StartResult s;
  s.index = j.at("index").get<std::size_t>();
  s.start = params_from(j.at("start"));
  s.estimate = params_from(j.at("estimate"));
  s.log_likelihood = number_from(j.at("log_likelihood"));
  s.start_log_likelihood = number_from(j.at("start_log_likelihood"));
  s.gradient_norm = number_from(j.at("gradient_norm"));
  s.iterations = j.at("iterations").get<int>();
  s.status = parse_status(j.at("status").get<std::string>());
  return s;
}

json fit_config_json(const rum::FitConfig& c) {
  json seeded = json::array();
  for (const auto& p : c.seeded_starts) seeded.push_back(params_json(p));
  return {{"starts", c.starts},
          {"valid_sample", c.valid_sample},
          {"seed", c.seed},
          {"omega_bounds", {c.omega_lo, c.omega_hi}},
          {"log_lambda_bounds", {c.log_lambda_lo, c.log_lambda_hi}},
          {"gradient_tolerance", c.gradient_tolerance},
          {"step_tolerance", c.step_tolerance},
          {"max_iterations", c.max_iterations},
          {"seeded_starts", seeded}};
}

rum::FitConfig fit_config_from(const json& j) {
  rum::FitConfig c;
  c.starts = j.at("starts").get<std::size_t>();
  c.valid_sample = j.at("valid_sample").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.omega_lo = j.at("omega_bounds").at(0).get<double>();
  c.omega_hi = j.at("omega_bounds").at(1).get<double>();
  c.log_lambda_lo = j.at("log_lambda_bounds").at(0).get<double>();
  c.log_lambda_hi = j.at("log_lambda_bounds").at(1).get<double>();
  c.gradient_tolerance = j.at("gradient_tolerance").get<double>();
  c.step_tolerance = j.value("step_tolerance", c.step_tolerance);
  c.max_iterations = j.at("max_iterations").get<int>();
  for (const auto& p : j.value("seeded_starts", json::array())) c.seeded_starts.push_back(params_from(p));
  return c;
}

json linear_json(const outcome::LinearFit& f) {
  return {{"coefficients", f.coefficients}, {"r_squared", f.r_squared}, {"n", f.n}};
}

outcome::LinearFit linear_from(const json& j) {
  outcome::LinearFit f;
  f.coefficients = j.at("coefficients").get<std::vector<double>>();
  f.r_squared = j.at("r_squared").get<double>();
  f.n = j.at("n").get<std::size_t>();
  return f;
}

template <typename F>
auto parse_lines(std::string_view text, std::string_view what, F&& decode) {
  using T = decltype(decode(json{}));
  std::vector<T> out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      out.push_back(decode(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError(std::string(what) + " line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(std::string(what) + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

template <typename F>
auto parse_document(std::string_view text, std::string_view what, F&& decode) {
  try {
    return decode(json::parse(text));
  } catch (const json::exception& e) {
    throw DataError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("failed writing " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string decisions_to_jsonl(std::span<const extract::PreflopDecision> decisions) {
  std::string out;
  for (const auto& d : decisions) {
    json j = {{"agent", std::string(to_string(d.agent))},
              {"player", d.player},
              {"game_id", d.game_id},
              {"hand_index", d.hand_index},
              {"seat", d.seat},
              {"sklansky", d.sklansky ? json(*d.sklansky) : json(nullptr)},
              {"choice", std::string(to_string(d.choice))},
              {"trigger", std::string(to_string(d.trigger))},
              {"preflop_pot", d.preflop_pot},
              {"own_contribution", d.own_contribution},
              {"committed_before", d.committed_before},
              {"stake_if_play", d.stake_if_play},
              {"n_active", d.n_active},
              {"won", d.won},
              {"net", d.net},
              {"hand_pot_total", d.hand_pot_total},
              {"small_blind", d.small_blind},
              {"big_blind", d.big_blind},
              {"forced", d.forced}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<extract::PreflopDecision> decisions_from_jsonl(std::string_view text) {
  return parse_lines(text, "decision", [](const json& j) {
    extract::PreflopDecision d;
    d.agent = parse_agent(j.at("agent").get<std::string>());
    d.player = j.at("player").get<std::string>();
    d.game_id = j.at("game_id").get<std::string>();
    d.hand_index = j.at("hand_index").get<int>();
    d.seat = j.at("seat").get<int>();
    if (const auto& s = j.at("sklansky"); !s.is_null()) d.sklansky = s.get<int>();
    d.choice = parse_choice(j.at("choice").get<std::string>());
    d.trigger = parse_trigger(j.at("trigger").get<std::string>());
    d.preflop_pot = j.at("preflop_pot").get<Chips>();
    d.own_contribution = j.at("own_contribution").get<Chips>();
    d.committed_before = j.at("committed_before").get<Chips>();
    d.stake_if_play = j.at("stake_if_play").get<Chips>();
    d.n_active = j.at("n_active").get<int>();
    d.won = j.at("won").get<bool>();
    d.net = j.at("net").get<Chips>();
    d.hand_pot_total = j.at("hand_pot_total").get<Chips>();
    d.small_blind = j.at("small_blind").get<Chips>();
    d.big_blind = j.at("big_blind").get<Chips>();
    d.forced = j.at("forced").get<bool>();
    return d;
  });
}

std::string gambles_to_jsonl(std::span<const outcome::GambleDecision> decisions) {
  std::string out;
  for (const auto& d : decisions) {
    json j = {{"agent", std::string(to_string(d.agent))},
              {"player", d.player},
              {"game_id", d.game_id},
              {"hand_index", d.hand_index},
              {"trigger", std::string(to_string(d.trigger))},
              {"choice", std::string(to_string(d.choice))},
              {"gamble", gamble_json(d.gamble)},
              {"class", std::string(rum::to_string(d.cls))}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<outcome::GambleDecision> gambles_from_jsonl(std::string_view text) {
  return parse_lines(text, "gamble decision", [](const json& j) {
    outcome::GambleDecision d;
    d.agent = parse_agent(j.at("agent").get<std::string>());
    d.player = j.value("player", std::string{});
    d.game_id = j.value("game_id", std::string{});
    d.hand_index = j.value("hand_index", 0);
    d.trigger = parse_trigger(j.at("trigger").get<std::string>());
    d.choice = parse_choice(j.at("choice").get<std::string>());
    d.gamble = gamble_from(j.at("gamble"));
    d.cls = j.contains("class") ? rum::parse_gamble_class(j.at("class").get<std::string>())
                                : rum::classify_gamble(d.gamble);
    return d;
  });
}

std::string models_to_json(const outcome::OutcomeModels& m) {
  json j = {{"version", kModelsVersion},
            {"encoder", {{"players", m.encoder.players()}, {"dimension", m.encoder.dimension()}}},
            {"win_model",
             {{"kind", std::string(outcome::to_string(m.win.kind))},
              {"input_dim", m.win.input_dim},
              {"hidden", m.win.hidden},
              {"weights", m.win.weights},
              {"epochs", m.win.epochs},
              {"seed", m.win.seed},
              {"n_train", m.win.n_train},
              {"n_test", m.win.n_test},
              {"train_accuracy", number_or_null(m.win.train_accuracy)},
              {"test_accuracy", number_or_null(m.win.test_accuracy)}}},
            {"payoff_models", {{"win", linear_json(m.payoffs.win)}, {"loss", linear_json(m.payoffs.loss)}}},
            {"normalization",
             {{"mean", m.norm.mean}, {"stddev", m.norm.stddev}, {"shift", m.norm.shift}, {"minimum", m.norm.minimum}}}};
  return j.dump(2) + "\n";
}

outcome::OutcomeModels models_from_json(std::string_view text) {
  return parse_document(text, "models", [](const json& j) {
    if (j.at("version").get<int>() != kModelsVersion) throw DataError("unsupported models file version");
    outcome::OutcomeModels m;
    m.encoder = outcome::FeatureEncoder(j.at("encoder").at("players").get<std::vector<std::string>>());
    const auto& w = j.at("win_model");
    m.win.kind = outcome::parse_win_model_kind(w.at("kind").get<std::string>());
    m.win.input_dim = w.at("input_dim").get<std::size_t>();
    m.win.hidden = w.at("hidden").get<std::size_t>();
    m.win.weights = w.at("weights").get<std::vector<double>>();
    m.win.epochs = w.at("epochs").get<int>();
    m.win.seed = w.at("seed").get<std::uint64_t>();
    m.win.n_train = w.at("n_train").get<std::size_t>();
    m.win.n_test = w.at("n_test").get<std::size_t>();
    m.win.train_accuracy = number_from(w.at("train_accuracy"));
    m.win.test_accuracy = number_from(w.at("test_accuracy"));
    if (m.win.weights.size() != m.win.parameter_count() || m.win.input_dim != m.encoder.dimension()) {
      throw DataError("win model weights do not match its declared shape");
    }
    m.payoffs.win = linear_from(j.at("payoff_models").at("win"));
    m.payoffs.loss = linear_from(j.at("payoff_models").at("loss"));
    const auto& n = j.at("normalization");
    m.norm = {n.at("mean").get<double>(), n.at("stddev").get<double>(), n.at("shift").get<double>(),
              n.at("minimum").get<double>()};
    if (!(m.norm.stddev > 0.0)) throw DataError("normalization stddev must be positive");
    return m;
  });
}

std::string fit_to_json(const FitRecord& r) {
  json starts = json::array();
  for (const auto& s : r.fit.starts) starts.push_back(start_json(s));
  json j = {{"version", kFitVersion},
            {"status", "ok"},
            {"agent", std::string(to_string(r.agent))},
            {"state", std::string(to_string(r.trigger))},
            {"n", r.n},
            {"config", fit_config_json(r.config)},
            {"omega_mean", r.fit.omega_mean},
            {"omega_sd", r.fit.omega_sd},
            {"lambda_mean", r.fit.lambda_mean},
            {"lambda_sd", r.fit.lambda_sd},
            {"log_likelihood_at_mean", number_or_null(r.fit.log_likelihood_at_mean)},
            {"valid_count", r.fit.valid_count},
            {"sampled", r.fit.sampled},
            {"starts", starts}};
  return j.dump(2) + "\n";
}

FitRecord fit_from_json(std::string_view text) {
  return parse_document(text, "fit", [](const json& j) {
    if (j.at("version").get<int>() != kFitVersion) throw DataError("unsupported fit file version");
    if (j.at("status").get<std::string>() != "ok") throw DataError("fit file records a failed fit");
    FitRecord r;
    r.agent = parse_agent(j.at("agent").get<std::string>());
    r.trigger = parse_trigger(j.at("state").get<std::string>());
    r.n = j.at("n").get<std::size_t>();
    r.config = fit_config_from(j.at("config"));
    r.fit.omega_mean = j.at("omega_mean").get<double>();
    r.fit.omega_sd = j.at("omega_sd").get<double>();
    r.fit.lambda_mean = j.at("lambda_mean").get<double>();
    r.fit.lambda_sd = j.at("lambda_sd").get<double>();
    r.fit.log_likelihood_at_mean = number_from(j.at("log_likelihood_at_mean"));
    r.fit.valid_count = j.at("valid_count").get<std::size_t>();
    r.fit.sampled = j.at("sampled").get<std::vector<std::size_t>>();
    for (const auto& s : j.at("starts")) r.fit.starts.push_back(start_from(s));
    return r;
  });
}

std::string failed_fit_to_json(Agent agent, Trigger trigger, std::size_t n, std::string_view error,
                               std::span<const rum::StartResult> starts) {
  json list = json::array();
  for (const auto& s : starts) list.push_back(start_json(s));
  json j = {{"version", kFitVersion},
            {"status", "failed"},
            {"agent", std::string(to_string(agent))},
            {"state", std::string(to_string(trigger))},
            {"n", n},
            {"error", std::string(error)},
            {"starts", list}};
  return j.dump(2) + "\n";
}

synth::AgentProfile profile_from_json(std::string_view text) {
  return parse_document(text, "profile", [](const json& j) {
    synth::AgentProfile p;
    p.agent = parse_agent(j.value("agent", std::string("pluribus")));
    for (const auto& [state, params] : j.at("params").items()) {
      const auto rp = params_from(params);
      if (!(rp.lambda >= 0.0)) throw DataError("profile lambda must be non-negative");
      p.params[parse_trigger(state)] = rp;
    }
    if (p.params.empty()) throw DataError("profile has no states");
    return p;
  });
}

std::string profile_to_json(const synth::AgentProfile& p) {
  json params = json::object();
  for (const auto& [state, rp] : p.params) params[std::string(to_string(state))] = params_json(rp);
  return json{{"agent", std::string(to_string(p.agent))}, {"params", params}}.dump(2) + "\n";
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  std::string hex;
  hex.reserve(2 * len);
  constexpr std::string_view kHex = "0123456789abcdef";
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 0xF];
  }
  return hex;
}

}  // namespace tiltlab::io
