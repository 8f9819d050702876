#include "tiltlab/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tiltlab/choice_extraction.hpp"
#include "tiltlab/io.hpp"
#include "tiltlab/rng.hpp"

namespace tiltlab::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kFitStream = 0x43454C4CULL;
constexpr std::uint64_t kBootstrapStream = 0x434D50ULL;

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!obj.is_object()) throw DataError(std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw DataError("unknown key '" + key + "' in " + std::string(where));
    }
  }
}

std::string format_name(hands::HandFormat f) {
  return f == hands::HandFormat::canonical ? "canonical" : "pluribus-raw";
}

// Runs one stage, converting its failures into StageError.
template <typename F>
auto stage(std::string_view name, F&& body) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const NumericalError& e) {
    throw StageError(std::string(name), ErrorKind::numerical, e.what());
  } catch (const DataError& e) {
    throw StageError(std::string(name), ErrorKind::data, e.what());
  } catch (const json::exception& e) {
    throw StageError(std::string(name), ErrorKind::data, e.what());
  } catch (const fs::filesystem_error& e) {
    throw StageError(std::string(name), ErrorKind::data, e.what());
  }
}

void move_to_failed(const fs::path& dir, const StageError& error) {
  const fs::path failed = dir / "failed";
  fs::create_directories(failed);
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().filename() == "failed") continue;
    fs::rename(entry.path(), failed / entry.path().filename());
  }
  io::write_file(failed / "error.txt",
                 "stage: " + error.stage() + "\nerror: " + std::string(error.what()) + "\n");
}

std::string lines(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += s + "\n";
  return out;
}

std::string cell_name(Agent agent, Trigger trigger) {
  return std::string(to_string(agent)) + "/" + std::string(to_string(trigger));
}

}  // namespace

StageError::StageError(std::string stage, ErrorKind kind, const std::string& message)
    : std::runtime_error(stage + ": " + message), stage_(std::move(stage)), kind_(kind) {}

std::string fit_file_name(Agent agent, Trigger trigger) {
  return "fit_" + std::string(to_string(agent)) + "_" + std::string(to_string(trigger)) + ".json";
}

RunConfig run_config_from_json(std::string_view text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("run config is not valid JSON: ") + e.what());
  }
  check_keys(j, {"seed", "inputs", "format", "alias_map", "exclude_games", "raw", "win_model", "fit",
                 "bootstrap", "refit_random_starts", "histogram", "workers", "out_dir"},
             "run config");
  auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  RunConfig c;
  try {
    c.seed = j.value("seed", std::uint64_t{0});
    for (const auto& p : j.value("inputs", std::vector<std::string>{})) c.inputs.push_back(resolve(p));
    c.format = hands::parse_hand_format(j.value("format", std::string("canonical")));
    if (j.contains("alias_map") && !j.at("alias_map").is_null()) {
      c.alias_map = resolve(j.at("alias_map").get<std::string>());
    }
    for (const auto& g : j.value("exclude_games", std::vector<std::string>{})) c.exclude_games.insert(g);
    if (j.contains("raw")) {
      const auto& r = j.at("raw");
      check_keys(r, {"small_blind", "big_blind", "stack"}, "raw");
      c.raw.small_blind = r.value("small_blind", c.raw.small_blind);
      c.raw.big_blind = r.value("big_blind", c.raw.big_blind);
      c.raw.stack = r.value("stack", c.raw.stack);
    }
    if (j.contains("win_model")) {
      const auto& w = j.at("win_model");
      check_keys(w, {"kind", "hidden", "epochs", "batch_size", "learning_rate", "l2", "test_fraction"},
                 "win_model");
      c.win.kind = outcome::parse_win_model_kind(w.value("kind", std::string("mlp")));
      c.win.hidden = w.value("hidden", c.win.hidden);
      c.win.epochs = w.value("epochs", c.win.epochs);
      c.win.batch_size = w.value("batch_size", c.win.batch_size);
      c.win.learning_rate = w.value("learning_rate", c.win.learning_rate);
      c.win.l2 = w.value("l2", c.win.l2);
      c.win.test_fraction = w.value("test_fraction", c.win.test_fraction);
    }
    if (j.contains("fit")) {
      const auto& f = j.at("fit");
      check_keys(f, {"starts", "valid_sample", "omega_bounds", "lambda_bounds", "gradient_tolerance",
                     "step_tolerance", "max_iterations"},
                 "fit");
      c.fit.starts = f.value("starts", c.fit.starts);
      c.fit.valid_sample = f.value("valid_sample", c.fit.valid_sample);
      if (f.contains("omega_bounds")) {
        c.fit.omega_lo = f.at("omega_bounds").at(0).get<double>();
        c.fit.omega_hi = f.at("omega_bounds").at(1).get<double>();
      }
      if (f.contains("lambda_bounds")) {
        const double lo = f.at("lambda_bounds").at(0).get<double>();
        const double hi = f.at("lambda_bounds").at(1).get<double>();
        if (!(lo > 0.0) || !(hi > lo)) throw DataError("lambda_bounds must satisfy 0 < lo < hi");
        c.fit.log_lambda_lo = std::log(lo);
        c.fit.log_lambda_hi = std::log(hi);
      }
      c.fit.gradient_tolerance = f.value("gradient_tolerance", c.fit.gradient_tolerance);
      c.fit.step_tolerance = f.value("step_tolerance", c.fit.step_tolerance);
      c.fit.max_iterations = f.value("max_iterations", c.fit.max_iterations);
    }
    c.bootstrap = j.value("bootstrap", c.bootstrap);
    c.refit_random_starts = j.value("refit_random_starts", c.refit_random_starts);
    if (j.contains("histogram")) {
      const auto& h = j.at("histogram");
      check_keys(h, {"half_width", "bins"}, "histogram");
      c.histogram.half_width = h.value("half_width", c.histogram.half_width);
      c.histogram.bins = h.value("bins", c.histogram.bins);
    }
    c.workers = j.value("workers", c.workers);
    if (j.contains("out_dir")) c.out_dir = resolve(j.at("out_dir").get<std::string>());
  } catch (const json::exception& e) {
    throw DataError(std::string("run config: ") + e.what());
  }
  if (c.bootstrap < analysis::kMinReplicates) {
    throw DataError("bootstrap must be at least " + std::to_string(analysis::kMinReplicates));
  }
  return c;
}

std::string run_config_to_json(const RunConfig& c) {
  std::vector<std::string> inputs;
  for (const auto& p : c.inputs) inputs.push_back(p.generic_string());
  json j = {{"seed", c.seed},
            {"inputs", inputs},
            {"format", format_name(c.format)},
            {"alias_map", c.alias_map ? json(c.alias_map->generic_string()) : json(nullptr)},
            {"exclude_games", c.exclude_games},
            {"raw", {{"small_blind", c.raw.small_blind}, {"big_blind", c.raw.big_blind}, {"stack", c.raw.stack}}},
            {"win_model",
             {{"kind", std::string(outcome::to_string(c.win.kind))},
              {"hidden", c.win.hidden},
              {"epochs", c.win.epochs},
              {"batch_size", c.win.batch_size},
              {"learning_rate", c.win.learning_rate},
              {"l2", c.win.l2},
              {"test_fraction", c.win.test_fraction}}},
            {"fit",
             {{"starts", c.fit.starts},
              {"valid_sample", c.fit.valid_sample},
              {"omega_bounds", {c.fit.omega_lo, c.fit.omega_hi}},
              {"lambda_bounds", {std::exp(c.fit.log_lambda_lo), std::exp(c.fit.log_lambda_hi)}},
              {"gradient_tolerance", c.fit.gradient_tolerance},
              {"step_tolerance", c.fit.step_tolerance},
              {"max_iterations", c.fit.max_iterations}}},
            {"bootstrap", c.bootstrap},
            {"refit_random_starts", c.refit_random_starts},
            {"histogram", {{"half_width", c.histogram.half_width}, {"bins", c.histogram.bins}}}};
  return j.dump(2) + "\n";
}

rum::FitConfig cell_fit_config(const rum::FitConfig& base, Agent agent, Trigger trigger) {
  rum::FitConfig fc = base;
  const auto cell = static_cast<std::uint64_t>(agent) * kTriggers.size() + static_cast<std::uint64_t>(trigger);
  fc.seed = derive_seed(base.seed, kFitStream, cell);
  return fc;
}

FitStageResult fit_all_cells(std::span<const outcome::GambleDecision> decisions,
                             const rum::FitConfig& fit) {
  FitStageResult out;
  for (const auto agent : kAgents) {
    for (const auto trigger : kTriggers) {
      const auto obs = analysis::observations_for(decisions, agent, trigger);
      const rum::FitConfig fc = cell_fit_config(fit, agent, trigger);
      if (obs.empty()) {
        out.failures.emplace_back(analysis::FitKey{agent, trigger},
                                  io::failed_fit_to_json(agent, trigger, 0, "no decisions in this cell", {}));
        continue;
      }
      try {
        out.fits.emplace(analysis::FitKey{agent, trigger}, rum::fit_rum(obs, fc));
      } catch (const rum::RumFitError& e) {
        out.failures.emplace_back(analysis::FitKey{agent, trigger},
                                  io::failed_fit_to_json(agent, trigger, obs.size(), e.what(), e.starts()));
      }
    }
  }
  return out;
}

std::vector<fs::path> write_reports(std::span<const outcome::GambleDecision> decisions,
                                    const analysis::FitTable& fits, const AnalysisConfig& config,
                                    const fs::path& out_dir) {
  std::vector<fs::path> written;
  auto emit = [&](const std::string& name, auto&& writer) {
    std::ostringstream s;
    writer(s);
    io::write_file(out_dir / name, s.str());
    written.push_back(out_dir / name);
  };

  const auto table1 = analysis::rationality_table(decisions, fits);
  emit("table1.csv", [&](std::ostream& s) { analysis::write_table1_csv(s, table1); });
  const auto table4 = analysis::eu_diff_table(decisions, fits);
  emit("table4.csv", [&](std::ostream& s) { analysis::write_table4_csv(s, table4); });
  const auto table5 = analysis::fit_summary(decisions, fits);
  emit("table5.csv", [&](std::ostream& s) { analysis::write_table5_csv(s, table5); });

  struct Pair {
    analysis::FitKey a;
    analysis::FitKey b;
  };
  std::vector<Pair> pairs;
  for (const auto t : kTriggers) pairs.push_back({{Agent::pluribus, t}, {Agent::human, t}});
  for (const auto agent : kAgents) {
    pairs.push_back({{agent, Trigger::post_loss}, {agent, Trigger::neutral}});
    pairs.push_back({{agent, Trigger::post_win}, {agent, Trigger::neutral}});
  }
  std::vector<analysis::ComparisonResult> comparisons;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [ka, kb] = pairs[i];
    const std::string name_a = cell_name(ka.first, ka.second);
    const std::string name_b = cell_name(kb.first, kb.second);
    const auto fa = fits.find(ka);
    const auto fb = fits.find(kb);
    auto placeholder = [&](std::string method) {
      for (const char* param : {"omega", "lambda"}) {
        analysis::ComparisonResult r;
        r.parameter = param;
        r.group_a = name_a;
        r.group_b = name_b;
        r.estimate_a = r.estimate_b = r.delta = r.ratio = r.p_value = std::nan("");
        if (fa != fits.end()) r.estimate_a = param[0] == 'o' ? fa->second.omega_mean : fa->second.lambda_mean;
        if (fb != fits.end()) r.estimate_b = param[0] == 'o' ? fb->second.omega_mean : fb->second.lambda_mean;
        r.method = method;
        comparisons.push_back(r);
      }
    };
    if (fa == fits.end() || fb == fits.end()) {
      placeholder("not-run");
      continue;
    }
    const auto da = analysis::observations_for(decisions, ka.first, ka.second);
    const auto db = analysis::observations_for(decisions, kb.first, kb.second);
    analysis::BootstrapConfig bc;
    bc.replicates = config.bootstrap;
    bc.seed = derive_seed(config.seed, kBootstrapStream, i);
    bc.refit = config.refit;
    bc.refit_random_starts = config.refit_random_starts;
    bc.workers = config.workers;
    try {
      const auto res = analysis::compare_parameters(fa->second, fb->second, da, db, bc, name_a, name_b);
      comparisons.insert(comparisons.end(), res.begin(), res.end());
    } catch (const NumericalError&) {
      placeholder("bootstrap-failed");
    }
  }
  emit("comparisons.csv", [&](std::ostream& s) { analysis::write_comparisons_csv(s, comparisons); });

  const auto folds = analysis::fold_rate_report(decisions);
  emit("fold_rates.csv", [&](std::ostream& s) { analysis::write_fold_rates_csv(s, folds); });
  const auto hist = analysis::utility_gap_histogram(decisions, fits, config.histogram);
  emit("fig4_hist.csv", [&](std::ostream& s) { analysis::write_histogram_csv(s, hist); });
  return written;
}

std::vector<Artifact> write_manifest(const fs::path& dir) {
  std::vector<Artifact> artifacts;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir).generic_string();
    if (rel == "manifest.json") continue;
    const auto bytes = io::read_file(entry.path());
    artifacts.push_back({rel, io::sha256_hex(bytes), bytes.size()});
  }
  std::sort(artifacts.begin(), artifacts.end(),
            [](const Artifact& a, const Artifact& b) { return a.path < b.path; });
  json list = json::array();
  for (const auto& a : artifacts) list.push_back({{"path", a.path}, {"sha256", a.sha256}, {"bytes", a.bytes}});
  io::write_file(dir / "manifest.json", json{{"artifacts", list}}.dump(2) + "\n");
  return artifacts;
}

RunResult run_pipeline(const RunConfig& config) {
  const fs::path dir = config.out_dir;
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    throw StageError("setup", ErrorKind::data,
                     "output directory " + dir.string() + " is not empty; choose a new --out-dir");
  }
  fs::create_directories(dir);

  try {
    io::write_file(dir / "config.json", run_config_to_json(config));

    const auto records = stage("ingest", [&] {
      if (config.inputs.empty()) throw DataError("no input hand logs given");
      if (config.format == hands::HandFormat::pluribus_raw && !config.alias_map) {
        throw DataError("pluribus-raw input needs an alias map (--alias-map FILE or \"alias_map\" in the config) "
                        "so every observed player name maps to a stable id");
      }
      auto parsed = hands::load_hand_files(config.inputs, config.format, config.raw);
      std::vector<hands::HandRecord> hands = std::move(parsed.hands);
      if (config.alias_map) {
        hands = hands::normalize_aliases(hands, hands::parse_alias_map(io::read_file(*config.alias_map)));
      }
      hands = hands::exclude_games(hands, config.exclude_games);
      if (hands.empty()) throw DataError("no complete hands after parsing and exclusions");
      std::vector<std::string> diag;
      for (const auto& d : parsed.diagnostics) diag.push_back("line " + std::to_string(d.line) + ": " + d.message);
      for (const auto& d : hands::validate_hands(hands)) {
        diag.push_back(d.game_id + "#" + std::to_string(d.hand_index) + " " +
                       std::string(hands::to_string(d.issue)) + ": " + d.message);
      }
      io::write_file(dir / "hands.jsonl", hands::emit_canonical(hands));
      io::write_file(dir / "ingest_diagnostics.txt", lines(diag));
      return hands;
    });

    const auto decisions = stage("extract", [&] {
      auto result = extract::extract_preflop_decisions(records);
      auto labelled = extract::pool_humans(extract::label_trigger_states(std::move(result.decisions)));
      io::write_file(dir / "decisions.jsonl", io::decisions_to_jsonl(labelled));
      io::write_file(dir / "extract_diagnostics.txt", lines(result.diagnostics));
      return labelled;
    });

    const auto models = stage("fit-outcomes", [&] {
      outcome::OutcomeFitConfig oc;
      oc.win = config.win;
      oc.win.seed = config.seed;
      auto m = outcome::fit_outcome_models(decisions, oc);
      io::write_file(dir / "models.json", io::models_to_json(m));
      return m;
    });

    const auto gambles = stage("build-gambles", [&] {
      auto built = outcome::build_gambles(decisions, models);
      io::write_file(dir / "gambles.jsonl", io::gambles_to_jsonl(built.decisions));
      io::write_file(dir / "gamble_diagnostics.txt",
                     "skipped_decisions: " + std::to_string(built.skipped) +
                         "\nclamped_payoffs: " + std::to_string(built.clamped_payoffs) + "\n");
      return built.decisions;
    });

    rum::FitConfig fit = config.fit;
    fit.seed = config.seed;
    fit.workers = config.workers;
    const auto fits = stage("fit-rum", [&] {
      auto result = fit_all_cells(gambles, fit);
      for (const auto& [key, f] : result.fits) {
        io::FitRecord rec{key.first, key.second,
                          analysis::observations_for(gambles, key.first, key.second).size(),
                          cell_fit_config(fit, key.first, key.second), f};
        io::write_file(dir / "fits" / fit_file_name(key.first, key.second), io::fit_to_json(rec));
      }
      for (const auto& [key, text] : result.failures) {
        io::write_file(dir / "fits" / "failed" / fit_file_name(key.first, key.second), text);
      }
      return result.fits;
    });

    stage("analyze", [&] {
      AnalysisConfig ac;
      ac.bootstrap = config.bootstrap;
      ac.refit_random_starts = config.refit_random_starts;
      ac.seed = config.seed;
      ac.refit = fit;
      ac.histogram = config.histogram;
      ac.workers = config.workers;
      return write_reports(gambles, fits, ac, dir / "reports");
    });
  } catch (const StageError& e) {
    move_to_failed(dir, e);
    throw;
  }

  RunResult result;
  result.out_dir = dir;
  result.artifacts = write_manifest(dir);
  return result;
}

}  // namespace tiltlab::pipeline
