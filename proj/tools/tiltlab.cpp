// tiltlab: poker hand histories to CRRA / random-utility fits.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "tiltlab/analysis.hpp"
#include "tiltlab/choice_extraction.hpp"
#include "tiltlab/hand_history.hpp"
#include "tiltlab/io.hpp"
#include "tiltlab/outcome_models.hpp"
#include "tiltlab/pipeline.hpp"
#include "tiltlab/synthetic.hpp"

namespace fs = std::filesystem;
using namespace tiltlab;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct Globals {
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string config;
  std::string out_dir;
};

void report(const std::vector<std::string>& diagnostics, std::string_view what) {
  for (const auto& d : diagnostics) std::cerr << what << ": " << d << '\n';
}

int cmd_ingest(const std::vector<std::string>& inputs, const std::string& format,
               const std::string& alias_map, const std::vector<std::string>& exclude,
               const hands::RawFormatOptions& raw, const std::string& out) {
  const auto fmt = hands::parse_hand_format(format);
  if (fmt == hands::HandFormat::pluribus_raw && alias_map.empty()) {
    throw DataError(
        "pluribus-raw input needs --alias-map FILE: a JSON object mapping every observed "
        "player name to a stable id");
  }
  std::vector<fs::path> paths(inputs.begin(), inputs.end());
  auto parsed = hands::load_hand_files(paths, fmt, raw);
  std::vector<hands::HandRecord> records = std::move(parsed.hands);
  if (!alias_map.empty()) {
    records = hands::normalize_aliases(records, hands::parse_alias_map(io::read_file(alias_map)));
  }
  records = hands::exclude_games(records, {exclude.begin(), exclude.end()});
  for (const auto& d : parsed.diagnostics) {
    std::cerr << "ingest: line " << d.line << ": " << d.message << '\n';
  }
  for (const auto& d : hands::validate_hands(records)) {
    std::cerr << "ingest: " << d.game_id << '#' << d.hand_index << ' ' << hands::to_string(d.issue)
              << ": " << d.message << '\n';
  }
  io::write_file(out, hands::emit_canonical(records));
  std::cerr << "ingest: wrote " << records.size() << " hands to " << out << '\n';
  return kOk;
}

int cmd_extract(const std::string& in, const std::string& out) {
  const auto parsed = hands::parse_hand_log(io::read_file(in), hands::HandFormat::canonical);
  auto result = extract::extract_preflop_decisions(parsed.hands);
  auto decisions = extract::pool_humans(extract::label_trigger_states(std::move(result.decisions)));
  report(result.diagnostics, "extract");
  io::write_file(out, io::decisions_to_jsonl(decisions));
  std::cerr << "extract: wrote " << decisions.size() << " decisions to " << out << '\n';
  return kOk;
}

int cmd_fit_outcomes(const std::string& in, const Globals& g, const std::string& model,
                     std::size_t hidden, int epochs, const std::string& out,
                     const std::string& gambles_out) {
  const auto decisions = io::decisions_from_jsonl(io::read_file(in));
  outcome::OutcomeFitConfig config;
  config.win.kind = outcome::parse_win_model_kind(model);
  config.win.hidden = hidden;
  config.win.epochs = epochs;
  config.win.seed = g.seed;
  const auto models = outcome::fit_outcome_models(decisions, config);
  io::write_file(out, io::models_to_json(models));
  std::cerr << "fit-outcomes: held-out accuracy " << models.win.test_accuracy << ", win R^2 "
            << models.payoffs.win.r_squared << ", loss R^2 " << models.payoffs.loss.r_squared << '\n';
  if (!gambles_out.empty()) {
    const auto built = outcome::build_gambles(decisions, models);
    io::write_file(gambles_out, io::gambles_to_jsonl(built.decisions));
    std::cerr << "fit-outcomes: wrote " << built.decisions.size() << " gambles (" << built.skipped
              << " decisions skipped, " << built.clamped_payoffs << " payoffs clamped)\n";
  }
  return kOk;
}

int cmd_fit_rum(const std::string& in, const std::string& agent_name, const std::string& state_name,
                std::size_t starts, std::size_t valid_sample, const Globals& g, const std::string& out) {
  const auto agent = parse_agent(agent_name);
  const auto state = parse_trigger(state_name);
  const auto gambles = io::gambles_from_jsonl(io::read_file(in));
  const auto obs = analysis::observations_for(gambles, agent, state);
  if (obs.empty()) throw DataError("no decisions for " + agent_name + "/" + state_name);
  rum::FitConfig base;
  base.starts = starts;
  base.valid_sample = valid_sample;
  base.seed = g.seed;
  const auto config = pipeline::cell_fit_config(base, agent, state);
  try {
    const auto fit = rum::fit_rum(obs, config);
    io::write_file(out, io::fit_to_json({agent, state, obs.size(), config, fit}));
    std::cerr << "fit-rum: omega " << fit.omega_mean << " lambda " << fit.lambda_mean << " ("
              << fit.valid_count << " valid of " << fit.starts.size() << " starts)\n";
  } catch (const rum::RumFitError& e) {
    io::write_file(out, io::failed_fit_to_json(agent, state, obs.size(), e.what(), e.starts()));
    throw;
  }
  return kOk;
}

int cmd_simulate(const std::string& profile_path, std::size_t n, const Globals& g,
                 const std::string& out) {
  const auto profile = io::profile_from_json(io::read_file(profile_path));
  const auto simulated = synth::simulate_profile(profile, n, g.seed);
  std::vector<outcome::GambleDecision> rows;
  rows.reserve(simulated.size());
  int index = 0;
  for (const auto& s : simulated) {
    outcome::GambleDecision d;
    d.agent = profile.agent;
    d.player = "synthetic-" + std::string(to_string(profile.agent));
    d.game_id = "synthetic";
    d.hand_index = index++;
    d.trigger = s.trigger;
    d.choice = s.choice;
    d.gamble = s.gamble;
    d.cls = rum::classify_gamble(s.gamble);
    rows.push_back(std::move(d));
  }
  io::write_file(out, io::gambles_to_jsonl(rows));
  std::cerr << "simulate: wrote " << rows.size() << " decisions to " << out << '\n';
  return kOk;
}

int cmd_analyze(const std::string& decisions_path, const std::string& fits_dir,
                std::size_t bootstrap, const Globals& g) {
  if (g.out_dir.empty()) throw CLI::RequiredError("--out-dir");
  const auto gambles = io::gambles_from_jsonl(io::read_file(decisions_path));
  analysis::FitTable fits;
  rum::FitConfig refit;
  for (const auto& entry : fs::directory_iterator(fits_dir)) {
    const auto name = entry.path().filename().string();
    if (!entry.is_regular_file() || !name.starts_with("fit_") || entry.path().extension() != ".json") continue;
    auto record = io::fit_from_json(io::read_file(entry.path()));
    refit = record.config;
    fits.emplace(analysis::FitKey{record.agent, record.trigger}, std::move(record.fit));
  }
  if (fits.empty()) std::cerr << "analyze: no fits found in " << fits_dir << '\n';
  pipeline::AnalysisConfig config;
  config.bootstrap = bootstrap;
  config.seed = g.seed;
  config.refit = refit;
  const auto written = pipeline::write_reports(gambles, fits, config, g.out_dir);
  for (const auto& p : written) std::cerr << "analyze: wrote " << p.string() << '\n';
  return kOk;
}

int cmd_run(const Globals& g) {
  if (g.config.empty()) throw CLI::RequiredError("--config");
  const fs::path config_path(g.config);
  auto config = pipeline::run_config_from_json(io::read_file(config_path), config_path.parent_path());
  if (g.seed_set) config.seed = g.seed;
  if (!g.out_dir.empty()) config.out_dir = g.out_dir;
  const auto result = pipeline::run_pipeline(config);
  std::cerr << "run: " << result.artifacts.size() << " artifacts in " << result.out_dir.string()
            << " (manifest.json)\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tiltlab: pre-flop risk preference estimation from poker hand histories"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->each([&](const std::string&) { g.seed_set = true; });
  app.add_option("--config", g.config, "Run configuration (JSON)");
  app.add_option("--out-dir", g.out_dir, "Output directory");

  std::vector<std::string> inputs, exclude;
  std::string format = "canonical", alias_map, out, in, gambles_out, model = "mlp";
  std::string agent, state, profile, fits_dir, decisions;
  hands::RawFormatOptions raw;
  std::size_t hidden = 16, starts = 200, valid_sample = 35, n = 10000, bootstrap = 500;
  int epochs = 30;

  auto* ingest = app.add_subcommand("ingest", "Parse hand logs into canonical JSONL");
  ingest->add_option("inputs", inputs, "Hand log files")->required()->check(CLI::ExistingFile);
  ingest->add_option("--format", format, "canonical or pluribus-raw")
      ->check(CLI::IsMember({"canonical", "pluribus-raw"}));
  ingest->add_option("--alias-map", alias_map, "JSON object of observed name -> player id")
      ->check(CLI::ExistingFile);
  ingest->add_option("--exclude-games", exclude, "Game ids to drop")->delimiter(',');
  ingest->add_option("--small-blind", raw.small_blind, "Raw adapter small blind");
  ingest->add_option("--big-blind", raw.big_blind, "Raw adapter big blind");
  ingest->add_option("--stack", raw.stack, "Raw adapter starting stack");
  ingest->add_option("--out", out, "Output hands.jsonl")->required();

  auto* ext = app.add_subcommand("extract", "Extract pre-flop decisions");
  ext->add_option("--in", in, "hands.jsonl")->required()->check(CLI::ExistingFile);
  ext->add_option("--out", out, "Output decisions.jsonl")->required();

  auto* fo = app.add_subcommand("fit-outcomes", "Fit the win model and payoff regressions");
  fo->add_option("--in", in, "decisions.jsonl")->required()->check(CLI::ExistingFile);
  fo->add_option("--model", model, "logistic or mlp")->check(CLI::IsMember({"logistic", "mlp"}));
  fo->add_option("--hidden", hidden, "MLP hidden units");
  fo->add_option("--epochs", epochs, "Training epochs");
  fo->add_option("--out", out, "Output models.json")->required();
  fo->add_option("--gambles-out", gambles_out, "Also write the constructed gambles (JSONL)");

  auto* fr = app.add_subcommand("fit-rum", "Multi-start maximum likelihood for one agent and state");
  fr->add_option("--in", in, "gambles.jsonl")->required()->check(CLI::ExistingFile);
  fr->add_option("--agent", agent, "pluribus or human")->required();
  fr->add_option("--state", state, "neutral, post-loss or post-win")->required();
  fr->add_option("--starts", starts, "Optimizer starts");
  fr->add_option("--valid-sample", valid_sample, "Valid convergences averaged");
  fr->add_option("--out", out, "Output fit.json")->required();

  auto* sim = app.add_subcommand("simulate", "Simulate decisions from a known profile");
  sim->add_option("--profile", profile, "profile.json")->required()->check(CLI::ExistingFile);
  sim->add_option("--n", n, "Decisions per state");
  sim->add_option("--out", out, "Output decisions (gamble JSONL)")->required();

  auto* an = app.add_subcommand("analyze", "Write the report CSVs");
  an->add_option("--decisions", decisions, "gambles.jsonl")->required()->check(CLI::ExistingFile);
  an->add_option("--fits", fits_dir, "Directory of fit_*.json")->required()->check(CLI::ExistingDirectory);
  an->add_option("--bootstrap", bootstrap, "Bootstrap replicates (>= 200)");

  auto* run = app.add_subcommand("run", "Whole pipeline from a run configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (ingest->parsed()) return cmd_ingest(inputs, format, alias_map, exclude, raw, out);
    if (ext->parsed()) return cmd_extract(in, out);
    if (fo->parsed()) return cmd_fit_outcomes(in, g, model, hidden, epochs, out, gambles_out);
    if (fr->parsed()) return cmd_fit_rum(in, agent, state, starts, valid_sample, g, out);
    if (sim->parsed()) return cmd_simulate(profile, n, g, out);
    if (an->parsed()) return cmd_analyze(decisions, fits_dir, bootstrap, g);
    if (run->parsed()) return cmd_run(g);
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const pipeline::StageError& e) {
    std::cerr << "error in stage " << e.stage() << ": " << e.what() << '\n';
    return e.kind() == pipeline::ErrorKind::numerical ? kNumerical : kData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
