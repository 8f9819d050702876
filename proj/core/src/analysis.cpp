#include "tiltlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <thread>

#include "tiltlab/rng.hpp"

namespace tiltlab::analysis {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kResampleStream = 0x524553414D50ULL;
constexpr std::uint64_t kRefitStream = 0x5245464954ULL;

std::size_t class_index(GambleClass cls) {
  switch (cls) {
    case GambleClass::mixed:
      return 0;
    case GambleClass::risk_dominant:
      return 1;
    case GambleClass::safe_dominant:
      return 2;
  }
  return 0;
}

std::size_t agent_index(Agent a) { return a == Agent::pluribus ? 0 : 1; }

std::size_t trigger_index(Trigger t) { return static_cast<std::size_t>(t); }

const rum::RumFit* find_fit(const FitTable& fits, Agent agent, Trigger trigger) {
  const auto it = fits.find({agent, trigger});
  return it == fits.end() ? nullptr : &it->second;
}

std::string num(double x) {
  if (!std::isfinite(x)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

std::string num(std::optional<double> x) { return x ? num(*x) : ""; }

std::string trigger_name(std::optional<Trigger> t) {
  return t ? std::string(to_string(*t)) : std::string("all");
}

std::string class_name(std::optional<GambleClass> c) {
  return c ? std::string(rum::to_string(*c)) : std::string("all");
}

}  // namespace

std::string_view to_string(Rationality r) {
  return r == Rationality::rational ? "rational" : "irrational";
}

Rationality rational_label(double u_play, double u_fold, Choice choice) {
  const bool ok = choice == Choice::play ? u_play >= u_fold : u_fold >= u_play;
  return ok ? Rationality::rational : Rationality::irrational;
}

Rationality rational_label(const Gamble& gamble, Choice choice, double omega) {
  return rational_label(rum::utility_gap(gamble, omega), 0.0, choice);
}

double RationalityCell::play_share() const {
  return scope_total ? static_cast<double>(play) / static_cast<double>(scope_total) : kNaN;
}

double RationalityCell::fold_share() const {
  return scope_total ? static_cast<double>(fold) / static_cast<double>(scope_total) : kNaN;
}

std::vector<RationalityCell> rationality_table(std::span<const GambleDecision> decisions,
                                               const FitTable& fits) {
  // [agent][scope: 3 states then pooled][class]
  RationalityCell grid[2][4][3];
  std::size_t totals[2][4] = {};
  for (const auto agent : kAgents) {
    for (std::size_t s = 0; s < 4; ++s) {
      for (const auto cls : rum::kGambleClasses) {
        auto& c = grid[agent_index(agent)][s][class_index(cls)];
        c.agent = agent;
        c.trigger = s < 3 ? std::optional<Trigger>(kTriggers[s]) : std::nullopt;
        c.cls = cls;
      }
    }
  }
  for (const auto& d : decisions) {
    const auto a = agent_index(d.agent);
    const auto* fit = find_fit(fits, d.agent, d.trigger);
    std::optional<Rationality> label;
    if (fit) label = rational_label(d.gamble, d.choice, fit->omega_mean);
    for (const std::size_t s : {trigger_index(d.trigger), std::size_t{3}}) {
      auto& c = grid[a][s][class_index(d.cls)];
      ++totals[a][s];
      const bool play = d.choice == Choice::play;
      ++(play ? c.play : c.fold);
      if (!label) {
        ++c.unlabeled;
      } else if (*label == Rationality::rational) {
        ++(play ? c.rational_play : c.rational_fold);
      } else {
        ++(play ? c.irrational_play : c.irrational_fold);
      }
    }
  }
  std::vector<RationalityCell> out;
  for (const auto agent : kAgents) {
    for (std::size_t s = 0; s < 4; ++s) {
      for (const auto cls : rum::kGambleClasses) {
        auto c = grid[agent_index(agent)][s][class_index(cls)];
        c.scope_total = totals[agent_index(agent)][s];
        out.push_back(c);
      }
    }
  }
  return out;
}

std::vector<HistogramBin> utility_gap_histogram(std::span<const GambleDecision> decisions,
                                                const FitTable& fits,
                                                const HistogramConfig& config) {
  if (config.bins == 0 || !(config.half_width > 0.0)) {
    throw DataError("histogram needs at least one bin and a positive half width");
  }
  const double w = config.half_width;
  const double width = 2.0 * w / static_cast<double>(config.bins);
  const std::size_t per_agent = config.bins + 2;
  std::vector<HistogramBin> out;
  for (const auto agent : kAgents) {
    out.push_back({agent, -w, -w, true, 0, 0});
    for (std::size_t b = 0; b < config.bins; ++b) {
      const double lo = -w + width * static_cast<double>(b);
      const double hi = b + 1 == config.bins ? w : lo + width;
      out.push_back({agent, lo, hi, false, 0, 0});
    }
    out.push_back({agent, w, w, true, 0, 0});
  }
  for (const auto& d : decisions) {
    const auto* fit = find_fit(fits, d.agent, d.trigger);
    if (!fit) continue;
    const double gap = rum::utility_gap(d.gamble, fit->omega_mean);
    std::size_t slot = 0;
    if (gap < -w) {
      slot = 0;
    } else if (gap > w) {
      slot = config.bins + 1;
    } else {
      const auto b = static_cast<std::size_t>(std::floor((gap + w) / width));
      slot = 1 + std::min(b, config.bins - 1);
    }
    auto& bin = out[agent_index(d.agent) * per_agent + slot];
    const bool rational = rational_label(gap, 0.0, d.choice) == Rationality::rational;
    ++(rational ? bin.rational : bin.irrational);
  }
  return out;
}

std::vector<EuDiffCell> eu_diff_table(std::span<const GambleDecision> decisions,
                                      const FitTable& fits) {
  // Compensated sums keep the cell means insensitive to input order.
  struct Acc {
    std::size_t n = 0;
    double sum = 0.0;
    double carry = 0.0;
  };
  Acc acc[2][3][3];
  for (const auto& d : decisions) {
    const auto* fit = find_fit(fits, d.agent, d.trigger);
    auto& a = acc[agent_index(d.agent)][trigger_index(d.trigger)][class_index(d.cls)];
    ++a.n;
    if (!fit) continue;
    const double y = rum::utility_gap(d.gamble, fit->omega_mean) - a.carry;
    const double t = a.sum + y;
    a.carry = (t - a.sum) - y;
    a.sum = t;
  }
  std::vector<EuDiffCell> out;
  for (const auto agent : kAgents) {
    for (const auto trigger : kTriggers) {
      for (const auto cls : rum::kGambleClasses) {
        const auto& a = acc[agent_index(agent)][trigger_index(trigger)][class_index(cls)];
        EuDiffCell c{agent, trigger, cls, a.n, kNaN};
        if (a.n > 0 && find_fit(fits, agent, trigger)) c.mean_gap = a.sum / static_cast<double>(a.n);
        out.push_back(c);
      }
    }
  }
  return out;
}

std::array<ComparisonResult, 2> compare_parameters(const rum::RumFit& fit_a,
                                                   const rum::RumFit& fit_b,
                                                   std::span<const rum::Observation> data_a,
                                                   std::span<const rum::Observation> data_b,
                                                   const BootstrapConfig& config,
                                                   std::string_view name_a,
                                                   std::string_view name_b) {
  if (config.replicates < kMinReplicates) {
    throw DataError("bootstrap needs at least " + std::to_string(kMinReplicates) + " replicates");
  }
  if (data_a.empty() || data_b.empty()) throw DataError("bootstrap groups must be non-empty");
  if (fit_a.valid_count == 0 || fit_b.valid_count == 0) {
    throw NumericalError("parameter comparison needs two fits with valid convergences");
  }

  struct Replicate {
    bool ok = false;
    double d_omega = 0.0;
    double d_lambda = 0.0;
  };
  std::vector<Replicate> reps(config.replicates);

  auto refit = [&](std::span<const rum::Observation> data, const rum::RumFit& point,
                   std::uint64_t seed, Rng& rng) {
    std::vector<rum::Observation> sample;
    sample.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) sample.push_back(data[uniform_index(rng, data.size())]);
    rum::FitConfig fc = config.refit;
    fc.seed = seed;
    fc.seeded_starts = {point.expected()};
    fc.starts = 1 + config.refit_random_starts;
    fc.workers = 1;
    return rum::fit_rum(sample, fc).expected();
  };

  auto run = [&](std::size_t first, std::size_t stride) {
    for (std::size_t r = first; r < reps.size(); r += stride) {
      Rng rng(derive_seed(config.seed, kResampleStream, r));
      try {
        const auto a = refit(data_a, fit_a, derive_seed(config.seed, kRefitStream, 2 * r), rng);
        const auto b = refit(data_b, fit_b, derive_seed(config.seed, kRefitStream, 2 * r + 1), rng);
        reps[r] = {true, a.omega - b.omega, a.lambda - b.lambda};
      } catch (const NumericalError&) {
        reps[r] = {};
      }
    }
  };
  unsigned workers = config.workers == 0 ? std::thread::hardware_concurrency() : config.workers;
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(reps.size())));
  if (workers == 1) {
    run(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w, workers);
  }

  const double d_omega = fit_a.omega_mean - fit_b.omega_mean;
  const double d_lambda = fit_a.lambda_mean - fit_b.lambda_mean;
  std::size_t ok = 0;
  std::size_t extreme_omega = 0;
  std::size_t extreme_lambda = 0;
  for (const auto& r : reps) {
    if (!r.ok) continue;
    ++ok;
    if (std::abs(r.d_omega - d_omega) >= std::abs(d_omega)) ++extreme_omega;
    if (std::abs(r.d_lambda - d_lambda) >= std::abs(d_lambda)) ++extreme_lambda;
  }
  const std::size_t failed = reps.size() - ok;
  if (static_cast<double>(failed) > config.max_failure_rate * static_cast<double>(reps.size())) {
    throw NumericalError("bootstrap refits failed in " + std::to_string(failed) + " of " +
                         std::to_string(reps.size()) + " replicates");
  }

  auto make = [&](std::string name, double a, double b, std::size_t extreme) {
    ComparisonResult c;
    c.parameter = std::move(name);
    c.group_a = std::string(name_a);
    c.group_b = std::string(name_b);
    c.estimate_a = a;
    c.estimate_b = b;
    c.delta = a - b;
    c.ratio = b != 0.0 ? a / b : kNaN;
    c.p_value = static_cast<double>(1 + extreme) / static_cast<double>(ok + 1);
    c.replicates = ok;
    c.failed_replicates = failed;
    return c;
  };
  return {make("omega", fit_a.omega_mean, fit_b.omega_mean, extreme_omega),
          make("lambda", fit_a.lambda_mean, fit_b.lambda_mean, extreme_lambda)};
}

std::vector<FoldRateCell> fold_rate_report(std::span<const GambleDecision> decisions) {
  // [agent][state][class 0..2, 3 = all]
  std::size_t n[2][3][4] = {};
  std::size_t folds[2][3][4] = {};
  for (const auto& d : decisions) {
    const auto a = agent_index(d.agent);
    const auto s = trigger_index(d.trigger);
    const bool fold = d.choice == Choice::fold;
    for (const std::size_t c : {class_index(d.cls), std::size_t{3}}) {
      ++n[a][s][c];
      if (fold) ++folds[a][s][c];
    }
  }
  std::vector<FoldRateCell> out;
  for (const auto agent : kAgents) {
    const auto a = agent_index(agent);
    for (const auto trigger : kTriggers) {
      const auto s = trigger_index(trigger);
      for (std::size_t c = 0; c < 4; ++c) {
        FoldRateCell cell;
        cell.agent = agent;
        cell.trigger = trigger;
        if (c < 3) {
          cell.cls = *std::find_if(rum::kGambleClasses.begin(), rum::kGambleClasses.end(),
                                   [&](GambleClass g) { return class_index(g) == c; });
        }
        cell.n = n[a][s][c];
        cell.folds = folds[a][s][c];
        cell.rate = cell.n ? static_cast<double>(cell.folds) / static_cast<double>(cell.n) : kNaN;
        const std::size_t n0 = n[a][0][c];
        if (trigger != Trigger::neutral && cell.n > 0 && n0 > 0) {
          const double p1 = cell.rate;
          const double p0 = static_cast<double>(folds[a][0][c]) / static_cast<double>(n0);
          const double pooled = static_cast<double>(cell.folds + folds[a][0][c]) /
                                static_cast<double>(cell.n + n0);
          const double se = std::sqrt(pooled * (1.0 - pooled) *
                                      (1.0 / static_cast<double>(cell.n) + 1.0 / static_cast<double>(n0)));
          cell.diff_vs_neutral = p1 - p0;
          // Equal proportions on both sides leave nothing to test.
          cell.p_value_vs_neutral = se > 0.0 ? std::erfc(std::abs(p1 - p0) / se / std::sqrt(2.0)) : 1.0;
          cell.significant = *cell.p_value_vs_neutral < 0.05;
        }
        out.push_back(cell);
      }
    }
  }
  return out;
}

std::vector<rum::Observation> observations_for(std::span<const GambleDecision> decisions,
                                               Agent agent, Trigger trigger) {
  std::vector<rum::Observation> out;
  for (const auto& d : decisions) {
    if (d.agent == agent && d.trigger == trigger) out.push_back({d.gamble, d.choice});
  }
  return out;
}

std::vector<FitSummaryRow> fit_summary(std::span<const GambleDecision> decisions,
                                       const FitTable& fits, const rum::OmegaGrid& grid) {
  std::vector<FitSummaryRow> out;
  for (const auto agent : kAgents) {
    for (const auto trigger : kTriggers) {
      FitSummaryRow row;
      row.agent = agent;
      row.trigger = trigger;
      std::vector<Gamble> gambles;
      for (const auto& d : decisions) {
        if (d.agent == agent && d.trigger == trigger) gambles.push_back(d.gamble);
      }
      row.n = gambles.size();
      if (const auto* fit = find_fit(fits, agent, trigger)) {
        row.fit = *fit;
        if (!gambles.empty()) row.omega_outside_domain = rum::diagnose_omega_validity(*fit, gambles, grid);
      }
      out.push_back(std::move(row));
    }
  }
  return out;
}

void write_table1_csv(std::ostream& out, std::span<const RationalityCell> cells) {
  out << "agent,state,gamble_class,play,fold,play_share,fold_share,rational_play,"
         "irrational_play,rational_fold,irrational_fold,unlabeled,scope_total\n";
  for (const auto& c : cells) {
    out << to_string(c.agent) << ',' << trigger_name(c.trigger) << ',' << rum::to_string(c.cls)
        << ',' << c.play << ',' << c.fold << ',' << num(c.play_share()) << ','
        << num(c.fold_share()) << ',' << c.rational_play << ',' << c.irrational_play << ','
        << c.rational_fold << ',' << c.irrational_fold << ',' << c.unlabeled << ','
        << c.scope_total << '\n';
  }
}

void write_table4_csv(std::ostream& out, std::span<const EuDiffCell> cells) {
  out << "agent,state,gamble_class,n,mean_utility_gap\n";
  for (const auto& c : cells) {
    out << to_string(c.agent) << ',' << to_string(c.trigger) << ',' << rum::to_string(c.cls) << ','
        << c.n << ',' << num(c.mean_gap) << '\n';
  }
}

void write_table5_csv(std::ostream& out, std::span<const FitSummaryRow> rows) {
  out << "agent,state,n,status,omega_mean,omega_sd,lambda_mean,lambda_sd,starts,"
         "valid_convergences,sampled,log_likelihood,omega_outside_domain\n";
  for (const auto& r : rows) {
    out << to_string(r.agent) << ',' << to_string(r.trigger) << ',' << r.n << ',';
    if (!r.fit) {
      out << "failed,,,,,,,,," << '\n';
      continue;
    }
    const auto& f = *r.fit;
    out << "ok," << num(f.omega_mean) << ',' << num(f.omega_sd) << ',' << num(f.lambda_mean) << ','
        << num(f.lambda_sd) << ',' << f.starts.size() << ',' << f.valid_count << ','
        << f.sampled.size() << ',' << num(f.log_likelihood_at_mean) << ','
        << num(r.omega_outside_domain) << '\n';
  }
}

void write_comparisons_csv(std::ostream& out, std::span<const ComparisonResult> rows) {
  out << "parameter,group_a,group_b,estimate_a,estimate_b,delta,ratio,p_value,method,"
         "replicates,failed_replicates\n";
  for (const auto& r : rows) {
    out << r.parameter << ',' << r.group_a << ',' << r.group_b << ',' << num(r.estimate_a) << ','
        << num(r.estimate_b) << ',' << num(r.delta) << ',' << num(r.ratio) << ','
        << num(r.p_value) << ',' << r.method << ',' << r.replicates << ',' << r.failed_replicates
        << '\n';
  }
}

void write_fold_rates_csv(std::ostream& out, std::span<const FoldRateCell> cells) {
  out << "agent,state,gamble_class,n,folds,fold_rate,diff_vs_neutral,p_value_vs_neutral,"
         "significant\n";
  for (const auto& c : cells) {
    out << to_string(c.agent) << ',' << to_string(c.trigger) << ',' << class_name(c.cls) << ','
        << c.n << ',' << c.folds << ',' << num(c.rate) << ',' << num(c.diff_vs_neutral) << ','
        << num(c.p_value_vs_neutral) << ',' << (c.significant ? "true" : "false") << '\n';
  }
}

void write_histogram_csv(std::ostream& out, std::span<const HistogramBin> bins) {
  out << "agent,bin_lo,bin_hi,point_mass,rational,irrational\n";
  for (const auto& b : bins) {
    out << to_string(b.agent) << ',' << num(b.lo) << ',' << num(b.hi) << ','
        << (b.point_mass ? "true" : "false") << ',' << b.rational << ',' << b.irrational << '\n';
  }
}

}  // namespace tiltlab::analysis
