// Acceptance run: one PASS, FAIL or SKIP line per criterion.
//
// Criteria 8-12 need the public Pluribus hand logs:
//   TILTLAB_PLURIBUS_LOGS   directory of logs, or log files separated by ':'
//   TILTLAB_ALIAS_MAP       alias map JSON (required for the raw format)
//   TILTLAB_LOG_FORMAT      pluribus-raw (default) or canonical
//   TILTLAB_EXCLUDE_GAMES   optional comma separated game ids
//
// Exit status is 0 when every criterion that ran passed, apart from those
// named with --allow-fail.

#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tiltlab/analysis.hpp"
#include "tiltlab/choice_extraction.hpp"
#include "tiltlab/crra_rum.hpp"
#include "tiltlab/hand_history.hpp"
#include "tiltlab/io.hpp"
#include "tiltlab/outcome_models.hpp"
#include "tiltlab/pipeline.hpp"
#include "tiltlab/synthetic.hpp"

namespace fs = std::filesystem;
using namespace tiltlab;

namespace {

enum class Status { pass, fail, skip };

struct Verdict {
  Status status = Status::fail;
  std::string detail;
};

Verdict verdict(bool ok, std::string detail) { return {ok ? Status::pass : Status::fail, std::move(detail)}; }
Verdict skipped(std::string why) { return {Status::skip, std::move(why)}; }

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(precision);
  s << v;
  return s.str();
}

std::string sci(double v) {
  std::ostringstream s;
  s.setf(std::ios::scientific);
  s.precision(2);
  s << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<rum::Observation> simulate(rum::RumParams params, std::size_t n, std::uint64_t seed) {
  synth::GambleGenConfig gen;
  gen.count = n;
  gen.seed = seed;
  const auto gambles = synth::generate_gambles(gen);
  synth::AgentProfile profile;
  profile.params[Trigger::neutral] = params;
  const std::vector<Trigger> states(gambles.size(), Trigger::neutral);
  return synth::to_observations(synth::simulate_agent(gambles, profile, states, seed ^ 0x5eedULL));
}

Gamble random_gamble(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> v(1.0, 10.0);
  std::uniform_real_distribution<double> p(0.01, 0.99);
  return make_gamble(p(rng), v(rng), v(rng), v(rng));
}

// Utility gap written with pow; the log form covers omega within 1e-9 of 1.
double oracle_gap(const Gamble& g, double omega) {
  const double a = 1.0 - omega;
  auto u = [&](double v) { return std::abs(a) < 1e-9 ? std::log(v) : (std::pow(v, a) - 1.0) / a; };
  return g.play[0].probability * u(g.play[0].payoff) + g.play[1].probability * u(g.play[1].payoff) -
         u(g.fold[0].payoff);
}

// ---------------------------------------------------------------------------

Verdict estimator_recovery() {
  const std::array<rum::RumParams, 4> truths = {
      rum::RumParams{0.073, 7.3}, {0.243, 12.1}, {0.435, 20.1}, {1.213, 119.2}};
  bool ok = true;
  std::string detail;
  for (const auto& truth : truths) {
    const auto t0 = std::chrono::steady_clock::now();
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto data = simulate(truth, 10000, 7000 + seed);
      rum::FitConfig cfg;
      cfg.starts = 40;
      cfg.seed = seed;
      try {
        const auto fit = rum::fit_rum(data, cfg);
        const bool hit = std::abs(fit.omega_mean - truth.omega) <= 0.05 &&
                         std::abs(fit.lambda_mean / truth.lambda - 1.0) <= 0.15;
        hits += hit ? 1 : 0;
      } catch (const NumericalError&) {
      }
    }
    const double elapsed = seconds_since(t0);
    ok = ok && hits >= 9 && elapsed < 300.0;
    detail += "(" + fmt(truth.omega, 3) + "," + fmt(truth.lambda, 1) + "): " + std::to_string(hits) +
              "/10 in " + fmt(elapsed, 0) + "s; ";
  }
  return verdict(ok, detail);
}

Verdict classifier_agreement() {
  std::mt19937_64 rng(20);
  constexpr long kSteps = 200000;  // [-10, 10] at 1e-4
  int agree = 0;
  std::map<rum::GambleClass, int> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto g = random_gamble(rng);
    bool play = false, fold = false;
    for (long k = 0; k <= kSteps && !(play && fold); ++k) {
      const double gap = oracle_gap(g, -10.0 + 1e-4 * static_cast<double>(k));
      play = play || gap > rum::kIndifferenceTolerance;
      fold = fold || gap < -rum::kIndifferenceTolerance;
    }
    const auto expected = play && fold ? rum::GambleClass::mixed
                          : play       ? rum::GambleClass::risk_dominant
                          : fold       ? rum::GambleClass::safe_dominant
                                       : rum::GambleClass::mixed;
    const auto got = rum::classify_gamble(g);
    agree += got == expected ? 1 : 0;
    ++seen[got];
  }
  return verdict(agree == 1000, std::to_string(agree) + "/1000 agree (mixed " +
                                    std::to_string(seen[rum::GambleClass::mixed]) + ", risk " +
                                    std::to_string(seen[rum::GambleClass::risk_dominant]) +
                                    ", safe " + std::to_string(seen[rum::GambleClass::safe_dominant]) +
                                    ")");
}

Verdict monotonicity() {
  synth::GambleGenConfig gen;
  gen.count = 500;
  gen.mix = {0.0, 0.0, 1.0};
  gen.seed = 30;
  const auto gambles = synth::generate_gambles(gen);
  const rum::OmegaGrid grid;
  std::string detail;
  bool safe_ok = true;
  for (const double lambda : {1.0, 10.0, 100.0}) {
    int monotone = 0;
    for (const auto& g : gambles) {
      bool ok = true;
      double prev = rum::choice_probability(g, {grid.at(0), lambda});
      for (std::size_t i = 1; i < grid.size() && ok; ++i) {
        const double p = rum::choice_probability(g, {grid.at(i), lambda});
        ok = p <= prev;
        prev = p;
      }
      monotone += ok ? 1 : 0;
    }
    safe_ok = safe_ok && monotone == 500;
    detail += "lambda " + fmt(lambda, 0) + ": " + std::to_string(monotone) + "/500 safe-dominant monotone; ";
  }
  // Mixed fixture: P(play) falls, then rises back toward 1/2.
  const auto mixed = make_gamble(0.5, 4.0, 1.0, 2.0);
  const auto pieces = rum::monotonic_domain(mixed, 1.0, grid);
  const bool rises = rum::choice_probability(mixed, {9.0, 1.0}) > rum::choice_probability(mixed, {4.0, 1.0});
  const bool mixed_ok = rum::classify_gamble(mixed) == rum::GambleClass::mixed && rises &&
                        !pieces.empty() && pieces.back().hi < grid.hi;
  detail += std::string("mixed fixture non-monotone: ") + (mixed_ok ? "yes" : "no");
  return verdict(safe_ok && mixed_ok, detail);
}

Verdict identities() {
  std::mt19937_64 rng(40);
  std::uniform_real_distribution<double> omega(-5.0, 5.0), log_lambda(std::log(0.01), std::log(1000.0));
  double worst_sum = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const auto g = random_gamble(rng);
    const rum::RumParams params{omega(rng), std::exp(log_lambda(rng))};
    const double play = rum::choice_probability(g, params);
    // Fold probability from the same softmax, written out directly.
    const double fold = 1.0 / (1.0 + std::exp(params.lambda * rum::utility_gap(g, params.omega)));
    worst_sum = std::max(worst_sum, std::abs(play + fold - 1.0));
  }
  double worst_rel = 0.0;
  for (int fixture = 0; fixture < 20; ++fixture) {
    std::vector<rum::Observation> data;
    std::uniform_int_distribution<int> coin(0, 1);
    for (int i = 0; i < 40; ++i) data.push_back({random_gamble(rng), coin(rng) ? Choice::play : Choice::fold});
    const rum::LikelihoodModel model(data);
    std::uniform_real_distribution<double> w(-3.0, 3.0), l(std::log(0.1), std::log(50.0));
    for (int point = 0; point < 10; ++point) {
      const double o = w(rng), ll = l(rng), h = 1e-6;
      const auto value = model.evaluate(o, ll);
      const std::array<double, 2> fd = {
          (model.value(o + h, ll) - model.value(o - h, ll)) / (2 * h),
          (model.value(o, ll + h) - model.value(o, ll - h)) / (2 * h)};
      for (int k = 0; k < 2; ++k) {
        worst_rel = std::max(worst_rel, std::abs(value.gradient[k] - fd[k]) / std::max(1.0, std::abs(fd[k])));
      }
    }
  }
  return verdict(worst_sum <= 1e-12 && worst_rel <= 1e-5,
                 "max |P(play)+P(fold)-1| = " + sci(worst_sum) + ", max gradient error " + sci(worst_rel));
}

Verdict normalization() {
  std::mt19937_64 rng(50);
  std::normal_distribution<double> z(-30.0, 700.0);
  std::vector<double> pooled(20000);
  for (auto& v : pooled) v = z(rng);
  const auto spec = outcome::fit_normalization(pooled);
  const double lowest = *std::min_element(pooled.begin(), pooled.end());
  const bool exact = spec.apply(lowest) == 1.0;
  int ordered = 0;
  std::uniform_real_distribution<double> u(-5000.0, 5000.0);
  for (int i = 0; i < 10000; ++i) {
    double a = u(rng), b = u(rng);
    while (a == b) b = u(rng);
    if (a > b) std::swap(a, b);
    ordered += spec.apply(a) < spec.apply(b) ? 1 : 0;
  }
  return verdict(exact && ordered == 10000, std::string("minimum maps to ") + fmt(spec.apply(lowest), 17) +
                                                ", order kept on " + std::to_string(ordered) + "/10000 pairs");
}

struct BootstrapRun {
  bool ok = false;
  double p_omega = 1.0;
  double p_lambda = 1.0;
};

BootstrapRun bootstrap_run(rum::RumParams a, rum::RumParams b, std::size_t n, std::uint64_t seed) {
  const auto data_a = simulate(a, n, seed * 2);
  const auto data_b = simulate(b, n, seed * 2 + 1);
  rum::FitConfig fc;
  fc.starts = 5;
  fc.workers = 1;
  try {
    fc.seed = seed;
    const auto fit_a = rum::fit_rum(data_a, fc);
    fc.seed = seed + 1;
    const auto fit_b = rum::fit_rum(data_b, fc);
    analysis::BootstrapConfig bc;
    bc.replicates = analysis::kMinReplicates;
    bc.seed = seed;
    bc.refit = fc;
    bc.workers = 1;
    const auto r = analysis::compare_parameters(fit_a, fit_b, data_a, data_b, bc);
    return {true, r[0].p_value, r[1].p_value};
  } catch (const NumericalError&) {
    return {};
  }
}

Verdict bootstrap_calibration() {
  const rum::RumParams null_params{0.435, 20.1};
  int null_runs = 0, rejected_omega = 0, rejected_lambda = 0;
  for (std::uint64_t r = 0; r < 300; ++r) {
    const auto run = bootstrap_run(null_params, null_params, 1000, 100000 + 10 * r);
    if (!run.ok) continue;
    ++null_runs;
    rejected_omega += run.p_omega < 0.05;
    rejected_lambda += run.p_lambda < 0.05;
  }
  int power_runs = 0, detected = 0;
  for (std::uint64_t r = 0; r < 20; ++r) {
    const auto run = bootstrap_run({0.073, 7.3}, {1.213, 119.2}, 5000, 200000 + 10 * r);
    ++power_runs;
    detected += run.ok && run.p_omega < 0.05 && run.p_lambda < 0.05;
  }
  const double rate_omega = null_runs ? static_cast<double>(rejected_omega) / null_runs : 1.0;
  const double rate_lambda = null_runs ? static_cast<double>(rejected_lambda) / null_runs : 1.0;
  const double power = static_cast<double>(detected) / power_runs;
  return verdict(null_runs == 300 && rate_omega <= 0.08 && rate_lambda <= 0.08 && power >= 0.95,
                 "null rejection omega " + fmt(rate_omega, 3) + ", lambda " + fmt(rate_lambda, 3) + " over " +
                     std::to_string(null_runs) + " runs; power " + fmt(power, 2) + " over " +
                     std::to_string(power_runs) + " runs");
}

std::string slurp(const fs::path& p) { return io::read_file(p); }

Verdict determinism(const fs::path& fixtures) {
  const fs::path base = fs::temp_directory_path() / "tiltlab-acceptance-determinism";
  fs::remove_all(base);
  auto cfg = pipeline::run_config_from_json(slurp(fixtures / "run_fixture.json"), fixtures);
  cfg.out_dir = base / "a";
  pipeline::run_pipeline(cfg);
  cfg.out_dir = base / "b";
  pipeline::run_pipeline(cfg);
  int identical = 0, total = 0;
  for (const auto& e : fs::directory_iterator(base / "a/reports")) {
    ++total;
    const auto other = base / "b/reports" / e.path().filename();
    identical += fs::exists(other) && slurp(e.path()) == slurp(other);
  }
  const bool manifest = slurp(base / "a/manifest.json") == slurp(base / "b/manifest.json");
  fs::remove_all(base);
  return verdict(total == 6 && identical == total && manifest,
                 std::to_string(identical) + "/" + std::to_string(total) + " report CSVs identical, manifest " +
                     (manifest ? "identical" : "differs"));
}

// ---------------------------------------------------------------------------
// Dataset-conditional criteria.

struct Dataset {
  std::vector<extract::PreflopDecision> decisions;
  outcome::OutcomeModels models;
  std::vector<outcome::GambleDecision> gambles;
  analysis::FitTable fits;
};

std::vector<fs::path> log_paths(const std::string& spec) {
  std::vector<fs::path> out;
  std::stringstream parts(spec);
  std::string item;
  while (std::getline(parts, item, ':')) {
    if (item.empty()) continue;
    if (fs::is_directory(item)) {
      for (const auto& e : fs::directory_iterator(item)) {
        if (e.is_regular_file()) out.push_back(e.path());
      }
    } else {
      out.emplace_back(item);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

const Dataset& dataset() {
  static const Dataset data = [] {
    Dataset d;
    const char* format_env = std::getenv("TILTLAB_LOG_FORMAT");
    const auto format = hands::parse_hand_format(format_env ? format_env : "pluribus-raw");
    auto parsed = hands::load_hand_files(log_paths(std::getenv("TILTLAB_PLURIBUS_LOGS")), format);
    auto records = std::move(parsed.hands);
    if (const char* alias = std::getenv("TILTLAB_ALIAS_MAP")) {
      records = hands::normalize_aliases(records, hands::parse_alias_map(io::read_file(alias)));
    } else if (format == hands::HandFormat::pluribus_raw) {
      throw DataError("TILTLAB_ALIAS_MAP must name the alias map for raw logs");
    }
    if (const char* excl = std::getenv("TILTLAB_EXCLUDE_GAMES")) {
      std::set<std::string> ids;
      std::stringstream parts(excl);
      std::string id;
      while (std::getline(parts, id, ',')) {
        if (!id.empty()) ids.insert(id);
      }
      records = hands::exclude_games(records, ids);
    }
    d.decisions = extract::pool_humans(
        extract::label_trigger_states(extract::extract_preflop_decisions(records).decisions));
    outcome::OutcomeFitConfig oc;
    oc.win.seed = 1;
    d.models = outcome::fit_outcome_models(d.decisions, oc);
    d.gambles = outcome::build_gambles(d.decisions, d.models).decisions;
    rum::FitConfig fc;
    fc.seed = 1;
    d.fits = pipeline::fit_all_cells(d.gambles, fc).fits;
    std::cerr << "dataset: " << records.size() << " hands, " << d.decisions.size() << " decisions, "
              << d.gambles.size() << " gambles, " << d.fits.size() << "/6 cell fits\n";
    return d;
  }();
  return data;
}

bool have_logs() { return std::getenv("TILTLAB_PLURIBUS_LOGS") != nullptr; }

constexpr const char* kNoLogs = "TILTLAB_PLURIBUS_LOGS not set";

Verdict table1_reproduction() {
  if (!have_logs()) return skipped(kNoLogs);
  const auto& d = dataset();
  // mixed-fold, mixed-play, risk-fold, risk-play, safe-fold, safe-play (percent)
  const std::map<Agent, std::array<double, 6>> paper = {
      {Agent::pluribus, {16, 5, 12, 11, 46, 10}}, {Agent::human, {17, 6, 8, 9, 48, 12}}};
  const std::map<rum::GambleClass, int> slot = {
      {rum::GambleClass::mixed, 0}, {rum::GambleClass::risk_dominant, 2}, {rum::GambleClass::safe_dominant, 4}};
  bool ok = true;
  double worst = 0.0;
  for (const auto& c : analysis::rationality_table(d.gambles, d.fits)) {
    if (c.trigger) continue;
    const auto& row = paper.at(c.agent);
    const int s = slot.at(c.cls);
    for (const auto& [share, target] : {std::pair{c.fold_share(), row[s]}, {c.play_share(), row[s + 1]}}) {
      const double diff = std::abs(100.0 * share - target);
      worst = std::max(worst, diff);
      ok = ok && diff <= 3.0;
    }
  }
  return verdict(ok, "largest deviation " + fmt(worst, 2) + " percentage points");
}

Verdict parameter_orderings() {
  if (!have_logs()) return skipped(kNoLogs);
  const auto& f = dataset().fits;
  if (f.size() != 6) return verdict(false, std::to_string(f.size()) + "/6 cells fitted");
  bool ok = true;
  for (const auto t : kTriggers) {
    ok = ok && f.at({Agent::pluribus, t}).omega_mean > f.at({Agent::human, t}).omega_mean &&
         f.at({Agent::pluribus, t}).lambda_mean > f.at({Agent::human, t}).lambda_mean;
  }
  const auto& n = f.at({Agent::pluribus, Trigger::neutral});
  const auto& l = f.at({Agent::pluribus, Trigger::post_loss});
  const double omega_ratio = l.omega_mean / n.omega_mean;
  const double lambda_ratio = l.lambda_mean / n.lambda_mean;
  ok = ok && omega_ratio >= 2.0 && omega_ratio <= 4.0 && lambda_ratio >= 3.0 && lambda_ratio <= 10.0;
  return verdict(ok, "Pluribus post-loss/neutral omega ratio " + fmt(omega_ratio, 2) + ", lambda ratio " +
                         fmt(lambda_ratio, 2));
}

Verdict fold_rate_direction() {
  if (!have_logs()) return skipped(kNoLogs);
  bool ok = true;
  double pluribus_loss = 0.0;
  for (const auto& c : analysis::fold_rate_report(dataset().gambles)) {
    if (c.cls || c.trigger == Trigger::neutral) continue;
    ok = ok && c.diff_vs_neutral && *c.diff_vs_neutral > 0.0;
    if (c.agent == Agent::pluribus && c.trigger == Trigger::post_loss && c.diff_vs_neutral) {
      pluribus_loss = 100.0 * *c.diff_vs_neutral;
    }
  }
  ok = ok && std::abs(pluribus_loss - 8.0) <= 4.0;
  return verdict(ok, "Pluribus post-loss fold rate +" + fmt(pluribus_loss, 2) + " percentage points");
}

Verdict omega_validity() {
  if (!have_logs()) return skipped(kNoLogs);
  const auto& d = dataset();
  double outside = 0.0;
  std::size_t total = 0;
  for (const auto& row : analysis::fit_summary(d.gambles, d.fits)) {
    if (!row.omega_outside_domain) continue;
    outside += *row.omega_outside_domain * static_cast<double>(row.n);
    total += row.n;
  }
  const double share = total ? outside / static_cast<double>(total) : 1.0;
  return verdict(total > 0 && share < 0.15, "share outside the monotone domain " + fmt(share, 3));
}

Verdict outcome_model_quality() {
  if (!have_logs()) return skipped(kNoLogs);
  const auto& m = dataset().models;
  const double acc = m.win.test_accuracy;
  const double r_win = m.payoffs.win.r_squared;
  const double r_loss = m.payoffs.loss.r_squared;
  return verdict(acc >= 0.55 && std::abs(r_win - 0.468) <= 0.10 && std::abs(r_loss - 0.314) <= 0.10,
                 "held-out accuracy " + fmt(acc, 3) + ", R2 win " + fmt(r_win, 3) + ", R2 loss " +
                     fmt(r_loss, 3));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tiltlab acceptance criteria"};
  std::vector<int> only;
  std::vector<int> allow_fail;
  std::string fixtures = TILTLAB_FIXTURES;
  app.add_option("--only", only, "Run these criteria only")->delimiter(',');
  app.add_option("--allow-fail", allow_fail, "Criteria whose failure does not fail the run")->delimiter(',');
  app.add_option("--fixtures", fixtures, "Fixture directory");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"estimator recovery", estimator_recovery},
      {"gamble classifier vs brute-force grid", classifier_agreement},
      {"monotonicity in omega", monotonicity},
      {"softmax and likelihood identities", identities},
      {"payoff normalization", normalization},
      {"bootstrap calibration and power", bootstrap_calibration},
      {"pipeline determinism", [&] { return determinism(fixtures); }},
      {"observed-choice proportions", table1_reproduction},
      {"parameter orderings", parameter_orderings},
      {"fold-rate direction", fold_rate_direction},
      {"omega validity share", omega_validity},
      {"outcome model quality", outcome_model_quality},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {Status::fail, std::string("error: ") + e.what()};
    }
    const bool allowed = std::find(allow_fail.begin(), allow_fail.end(), id) != allow_fail.end();
    const char* label = v.status == Status::pass ? "PASS" : v.status == Status::skip ? "SKIP" : "FAIL";
    std::cout << "criterion " << id << " " << label << (v.status == Status::fail && allowed ? " (allowed)" : "")
              << ": " << criteria[i].first << ": " << v.detail << " [" << fmt(seconds_since(t0), 1) << "s]"
              << std::endl;
    if (v.status == Status::fail && !allowed) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
