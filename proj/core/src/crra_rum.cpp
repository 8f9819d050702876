#include "tiltlab/crra_rum.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "tiltlab/rng.hpp"

namespace tiltlab::rum {

namespace detail {

double shifted_crra(double a, double log_v) {
  if (a == 0.0) return log_v;
  return std::expm1(a * log_v) / a;
}

}  // namespace detail

namespace {

using detail::shifted_crra;

// d/da of shifted_crra.
double shifted_crra_da(double a, double log_v) {
  const double x = a * log_v;
  const double l2 = log_v * log_v;
  if (std::abs(x) < 1e-3) {
    // Series: sum_{k>=2} (k-1) L^k a^(k-2) / k!
    return l2 * (0.5 + x * (1.0 / 3.0 + x * (1.0 / 8.0 + x * (1.0 / 30.0 + x / 144.0))));
  }
  return (x * std::exp(x) - std::expm1(x)) / (a * a);
}

double log_sigmoid(double s) {
  return s < 0.0 ? s - std::log1p(std::exp(s)) : -std::log1p(std::exp(-s));
}

double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

double checked_log(double payoff) {
  if (!(payoff > 0.0)) throw DataError("CRRA utility requires a positive payoff");
  return std::log(payoff);
}

// Gamble in (probability, log payoff) form for repeated gap evaluation.
struct LogGamble {
  std::array<std::pair<double, double>, 3> terms;  // fold enters with negated probability

  explicit LogGamble(const Gamble& g)
      : terms{{{g.play[0].probability, checked_log(g.play[0].payoff)},
               {g.play[1].probability, checked_log(g.play[1].payoff)},
               {-g.fold[0].probability, checked_log(g.fold[0].payoff)}}} {}

  double gap(double omega) const {
    const double a = 1.0 - omega;
    double total = 0.0;
    for (const auto& [p, log_v] : terms) total += p * shifted_crra(a, log_v);
    return total;
  }
};

}  // namespace

double crra_utility(double payoff, double omega) {
  if (!(payoff > 0.0)) throw DataError("CRRA utility requires a positive payoff");
  if (omega == 1.0) return std::log(payoff);
  const double a = 1.0 - omega;
  return std::pow(payoff, a) / a;
}

double option_utility(std::span<const Outcome> option, double omega) {
  double total = 0.0;
  for (const auto& o : option) total += o.probability * crra_utility(o.payoff, omega);
  return total;
}

double utility_gap(const Gamble& gamble, double omega) {
  const double a = 1.0 - omega;
  double gap = 0.0;
  for (const auto& o : gamble.play) gap += o.probability * shifted_crra(a, checked_log(o.payoff));
  for (const auto& o : gamble.fold) gap -= o.probability * shifted_crra(a, checked_log(o.payoff));
  return gap;
}

double utility_gap_derivative(const Gamble& gamble, double omega) {
  const double a = 1.0 - omega;
  double da = 0.0;
  for (const auto& o : gamble.play) da += o.probability * shifted_crra_da(a, checked_log(o.payoff));
  for (const auto& o : gamble.fold) da -= o.probability * shifted_crra_da(a, checked_log(o.payoff));
  return -da;
}

double choice_probability(const Gamble& gamble, const RumParams& params) {
  if (!(params.lambda >= 0.0)) throw NumericalError("lambda must be non-negative");
  const double gap = utility_gap(gamble, params.omega);
  if (!std::isfinite(gap)) throw NumericalError("non-finite option utilities");
  if (params.lambda == 0.0) return 0.5;
  // Dividing through by exp(lambda * max(u_play, u_fold)) leaves the logistic of the gap.
  const double s = params.lambda * gap;
  if (!std::isfinite(s)) throw NumericalError("non-finite scaled utility difference");
  return sigmoid(s);
}

std::string_view to_string(GambleClass cls) {
  switch (cls) {
    case GambleClass::risk_dominant:
      return "risk_dominant";
    case GambleClass::safe_dominant:
      return "safe_dominant";
    case GambleClass::mixed:
      return "mixed";
  }
  return "mixed";
}

GambleClass parse_gamble_class(std::string_view text) {
  if (text == "risk_dominant" || text == "risk-dominant") return GambleClass::risk_dominant;
  if (text == "safe_dominant" || text == "safe-dominant") return GambleClass::safe_dominant;
  if (text == "mixed") return GambleClass::mixed;
  throw DataError("unknown gamble class '" + std::string(text) + "'");
}

std::size_t OmegaGrid::size() const {
  if (!(step > 0.0) || !(hi >= lo) || !std::isfinite(lo) || !std::isfinite(hi)) return 0;
  return static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
}

double OmegaGrid::at(std::size_t i) const {
  return lo + static_cast<double>(i) * step;
}

GambleClass classify_gamble(const Gamble& gamble, const OmegaGrid& grid) {
  const std::size_t n = grid.size();
  if (n == 0) throw DataError("omega grid is empty");
  const LogGamble lg(gamble);
  bool play_preferred = false;
  bool fold_preferred = false;
  for (std::size_t i = 0; i < n; ++i) {
    const double gap = lg.gap(grid.at(i));
    if (gap > kIndifferenceTolerance) play_preferred = true;
    if (gap < -kIndifferenceTolerance) fold_preferred = true;
    if (play_preferred && fold_preferred) return GambleClass::mixed;
  }
  if (play_preferred) return GambleClass::risk_dominant;
  if (fold_preferred) return GambleClass::safe_dominant;
  return GambleClass::mixed;
}

std::vector<OmegaInterval> monotonic_domain(const Gamble& gamble, double lambda,
                                            const OmegaGrid& grid) {
  std::vector<OmegaInterval> out;
  const std::size_t n = grid.size();
  if (n == 0) return out;
  if (lambda <= 0.0 || n == 1) {
    // P(play) is constant at lambda == 0.
    out.push_back({grid.lo, grid.at(n - 1)});
    return out;
  }
  // For lambda > 0 the logit of P(play) is lambda * gap, a strictly increasing
  // transform of P, so its forward differences carry the same sign as those of
  // P itself without saturating at 0 or 1.
  const LogGamble lg(gamble);
  double prev = lambda * lg.gap(grid.at(0));
  bool open = false;
  OmegaInterval current;
  for (std::size_t i = 1; i < n; ++i) {
    const double next = lambda * lg.gap(grid.at(i));
    const double scale = std::abs(prev) + std::abs(next);
    const bool non_increasing = next - prev <= 1e-12 * scale;
    if (non_increasing) {
      if (!open) {
        current = {grid.at(i - 1), grid.at(i)};
        open = true;
      } else {
        current.hi = grid.at(i);
      }
    } else if (open) {
      out.push_back(current);
      open = false;
    }
    prev = next;
  }
  if (open) out.push_back(current);
  return out;
}

LikelihoodModel::LikelihoodModel(std::span<const Observation> data) {
  rows_.reserve(data.size());
  for (const auto& obs : data) {
    const auto& g = obs.gamble;
    rows_.push_back(Row{g.play[0].probability, g.play[1].probability,
                        checked_log(g.play[0].payoff), checked_log(g.play[1].payoff),
                        checked_log(g.fold[0].payoff), obs.choice == Choice::play ? 1.0 : 0.0});
  }
}

LikelihoodValue LikelihoodModel::evaluate(double omega, double log_lambda) const {
  const double a = 1.0 - omega;
  const double lambda = std::exp(log_lambda);
  LikelihoodValue out;
  double d_omega = 0.0;
  double d_log_lambda = 0.0;
  for (const auto& r : rows_) {
    const double gap = r.p_win * shifted_crra(a, r.log_win) +
                       r.p_lose * shifted_crra(a, r.log_lose) - shifted_crra(a, r.log_fold);
    const double gap_da = r.p_win * shifted_crra_da(a, r.log_win) +
                          r.p_lose * shifted_crra_da(a, r.log_lose) -
                          shifted_crra_da(a, r.log_fold);
    const double s = lambda * gap;
    // Exact ties contribute log 0.5 whatever was chosen.
    out.value += r.y > 0.5 ? log_sigmoid(s) : log_sigmoid(-s);
    const double residual = r.y - sigmoid(s);
    d_omega += residual * lambda * (-gap_da);
    d_log_lambda += residual * s;
  }
  out.gradient = {d_omega, d_log_lambda};
  return out;
}

double LikelihoodModel::value(double omega, double log_lambda) const {
  const double a = 1.0 - omega;
  const double lambda = std::exp(log_lambda);
  double total = 0.0;
  for (const auto& r : rows_) {
    const double gap = r.p_win * shifted_crra(a, r.log_win) +
                       r.p_lose * shifted_crra(a, r.log_lose) - shifted_crra(a, r.log_fold);
    const double s = lambda * gap;
    total += r.y > 0.5 ? log_sigmoid(s) : log_sigmoid(-s);
  }
  return total;
}

double log_likelihood(const RumParams& params, std::span<const Observation> data) {
  if (data.empty()) throw DataError("log-likelihood of an empty decision set");
  if (!(params.lambda >= 0.0)) throw NumericalError("lambda must be non-negative");
  if (params.lambda == 0.0) return static_cast<double>(data.size()) * std::log(0.5);
  return LikelihoodModel(data).value(params.omega, std::log(params.lambda));
}

std::string_view to_string(StartStatus status) {
  switch (status) {
    case StartStatus::converged:
      return "converged";
    case StartStatus::boundary:
      return "boundary";
    case StartStatus::max_iterations:
      return "max_iterations";
    case StartStatus::line_search_failed:
      return "line_search_failed";
    case StartStatus::non_finite:
      return "non_finite";
    case StartStatus::flat:
      return "flat";
  }
  return "non_finite";
}

namespace {

using Vec2 = std::array<double, 2>;
using Mat2 = std::array<std::array<double, 2>, 2>;

double dot(const Vec2& a, const Vec2& b) { return a[0] * b[0] + a[1] * b[1]; }
double norm(const Vec2& a) { return std::sqrt(dot(a, a)); }

Mat2 identity(double scale) { return {{{scale, 0.0}, {0.0, scale}}}; }

Vec2 mul(const Mat2& m, const Vec2& v) {
  return {m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]};
}

struct Box {
  Vec2 lo;
  Vec2 hi;

  Vec2 clamp(const Vec2& x) const {
    return {std::clamp(x[0], lo[0], hi[0]), std::clamp(x[1], lo[1], hi[1])};
  }
  bool at_lower(const Vec2& x, int i) const { return x[i] <= lo[i] + 1e-10 * (hi[i] - lo[i]); }
  bool at_upper(const Vec2& x, int i) const { return x[i] >= hi[i] - 1e-10 * (hi[i] - lo[i]); }
  bool interior(const Vec2& x) const {
    for (int i = 0; i < 2; ++i) {
      if (at_lower(x, i) || at_upper(x, i)) return false;
    }
    return true;
  }
};

}  // namespace

StartResult optimize_from(const LikelihoodModel& model, const RumParams& start,
                          const FitConfig& config) {
  // Minimize f = -log-likelihood over x = (omega, log lambda).
  const Box box{{config.omega_lo, config.log_lambda_lo}, {config.omega_hi, config.log_lambda_hi}};
  StartResult result;
  result.start = start;

  Vec2 x = box.clamp({start.omega, std::log(std::max(start.lambda, 1e-300))});
  auto eval = [&](const Vec2& p, double& f, Vec2& g) {
    const auto v = model.evaluate(p[0], p[1]);
    f = -v.value;
    g = {-v.gradient[0], -v.gradient[1]};
    return std::isfinite(f) && std::isfinite(g[0]) && std::isfinite(g[1]);
  };

  double f = 0.0;
  Vec2 g{};
  auto finish = [&](StartStatus status, int iterations) {
    result.estimate = {x[0], std::exp(x[1])};
    result.log_likelihood = -f;
    result.gradient_norm = norm(g);
    result.iterations = iterations;
    result.status = status;
    return result;
  };

  if (!eval(x, f, g)) {
    result.start_log_likelihood = -f;
    return finish(StartStatus::non_finite, 0);
  }
  result.start_log_likelihood = -f;

  // Components pinned at a bound with the descent direction pointing outward.
  auto active = [&](const Vec2& p, const Vec2& grad) {
    std::array<bool, 2> a{};
    for (int i = 0; i < 2; ++i) {
      a[i] = (box.at_lower(p, i) && grad[i] > 0.0) || (box.at_upper(p, i) && grad[i] < 0.0);
    }
    return a;
  };

  Mat2 h = identity(1.0 / std::max(norm(g), 1.0));
  bool scaled = false;
  for (int iter = 0; iter < config.max_iterations; ++iter) {
    const auto act = active(x, g);
    Vec2 projected = g;
    for (int i = 0; i < 2; ++i) {
      if (act[i]) projected[i] = 0.0;
    }
    if (norm(projected) <= config.gradient_tolerance) {
      if (!box.interior(x) || norm(g) > config.gradient_tolerance) {
        return finish(StartStatus::boundary, iter);
      }
      // Where the likelihood saturates the gradient fades with no maximum
      // nearby, so also ask for positive curvature and a short Newton step.
      Mat2 hess{};
      bool finite = true;
      for (int j = 0; j < 2 && finite; ++j) {
        const double step = 1e-5 * std::max(1.0, std::abs(x[j]));
        Vec2 up = x, down = x;
        up[j] += step;
        down[j] -= step;
        double f_up = 0.0, f_down = 0.0;
        Vec2 g_up{}, g_down{};
        finite = eval(up, f_up, g_up) && eval(down, f_down, g_down);
        for (int i = 0; i < 2; ++i) hess[i][j] = (g_up[i] - g_down[i]) / (2.0 * step);
      }
      hess[0][1] = hess[1][0] = 0.5 * (hess[0][1] + hess[1][0]);
      const double det = hess[0][0] * hess[1][1] - hess[0][1] * hess[1][0];
      if (finite && hess[0][0] > 0.0 && det > 0.0) {
        h = {{{hess[1][1] / det, -hess[0][1] / det}, {-hess[1][0] / det, hess[0][0] / det}}};
        if (norm(mul(h, g)) <= config.step_tolerance) return finish(StartStatus::converged, iter);
      } else if (norm(g) == 0.0) {
        return finish(StartStatus::flat, iter);
      } else {
        h = identity(1.0 / norm(g));
      }
      scaled = true;
      projected = g;
    }

    Vec2 dir = mul(h, g);
    dir = {-dir[0], -dir[1]};
    for (int i = 0; i < 2; ++i) {
      if (act[i]) dir[i] = 0.0;
    }
    if (dot(dir, projected) >= 0.0) {
      h = identity(1.0 / std::max(norm(projected), 1.0));
      scaled = false;
      dir = {-projected[0] * h[0][0], -projected[1] * h[1][1]};
    }

    // Backtracking on the projected path; below the resolution of f, accept a
    // step that still reduces the gradient so the final Newton-like steps are
    // not rejected by rounding.
    double t = 1.0;
    Vec2 x_new{};
    double f_new = 0.0;
    Vec2 g_new{};
    bool accepted = false;
    const double noise = 1e-13 * std::max(1.0, std::abs(f));
    for (int k = 0; k < 60; ++k) {
      x_new = box.clamp({x[0] + t * dir[0], x[1] + t * dir[1]});
      const Vec2 step{x_new[0] - x[0], x_new[1] - x[1]};
      const double decrease = dot(g, step);
      if (eval(x_new, f_new, g_new)) {
        if (f_new <= f + 1e-4 * decrease) {
          accepted = true;
          break;
        }
        if (f_new <= f + noise && norm(g_new) < norm(g)) {
          accepted = true;
          break;
        }
      }
      t *= 0.5;
    }
    if (!accepted) {
      return finish(box.interior(x) ? StartStatus::line_search_failed : StartStatus::boundary,
                    iter);
    }

    const Vec2 s{x_new[0] - x[0], x_new[1] - x[1]};
    const Vec2 y{g_new[0] - g[0], g_new[1] - g[1]};
    x = x_new;
    f = f_new;
    g = g_new;

    const double sy = dot(s, y);
    if (sy > 1e-12 * norm(s) * norm(y)) {
      if (!scaled) {
        h = identity(sy / dot(y, y));
        scaled = true;
      }
      // Inverse-Hessian BFGS update.
      const double rho = 1.0 / sy;
      const Vec2 hy = mul(h, y);
      const double yhy = dot(y, hy);
      Mat2 next{};
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
          next[i][j] = h[i][j] - rho * (hy[i] * s[j] + s[i] * hy[j]) +
                       (rho * rho * yhy + rho) * s[i] * s[j];
        }
      }
      h = next;
    }
  }
  return finish(box.interior(x) ? StartStatus::max_iterations : StartStatus::boundary,
                config.max_iterations);
}

namespace {

std::vector<RumParams> start_points(const FitConfig& config) {
  std::vector<RumParams> points = config.seeded_starts;
  // Random starts stay off the box faces so a start is never born "at the boundary".
  const double omega_margin = 0.02 * (config.omega_hi - config.omega_lo);
  const double lambda_margin = 0.02 * (config.log_lambda_hi - config.log_lambda_lo);
  for (std::size_t i = points.size(); i < config.starts; ++i) {
    Rng rng(derive_seed(config.seed, 0x5354415254ULL, i));
    const double omega =
        uniform(rng, config.omega_lo + omega_margin, config.omega_hi - omega_margin);
    const double log_lambda = uniform(rng, config.log_lambda_lo + lambda_margin,
                                      config.log_lambda_hi - lambda_margin);
    points.push_back({omega, std::exp(log_lambda)});
  }
  return points;
}

double sample_sd(const std::vector<double>& values, double mean) {
  if (values.size() < 2) return 0.0;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

}  // namespace

RumFit fit_rum(std::span<const Observation> data, const FitConfig& config) {
  if (data.empty()) throw DataError("fit_rum requires at least one decision");
  if (config.starts == 0) throw DataError("fit_rum requires at least one start");
  if (!(config.omega_lo < config.omega_hi) || !(config.log_lambda_lo < config.log_lambda_hi) ||
      !std::isfinite(config.omega_lo) || !std::isfinite(config.omega_hi) ||
      !std::isfinite(config.log_lambda_lo) || !std::isfinite(config.log_lambda_hi)) {
    throw DataError("fit_rum bounds must be finite and non-empty");
  }

  const LikelihoodModel model(data);
  const auto points = start_points(config);
  RumFit fit;
  fit.starts.resize(points.size());

  unsigned workers = config.workers == 0 ? std::thread::hardware_concurrency() : config.workers;
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(points.size())));
  auto run_range = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < points.size(); i += stride) {
      fit.starts[i] = optimize_from(model, points[i], config);
      fit.starts[i].index = i;
    }
  };
  if (workers == 1) {
    run_range(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run_range, w, workers);
  }

  std::vector<std::size_t> valid;
  for (const auto& s : fit.starts) {
    if (s.valid()) valid.push_back(s.index);
  }
  fit.valid_count = valid.size();
  if (valid.empty()) {
    throw RumFitError("no start reached a valid interior convergence", fit.starts);
  }

  // Random subset of the valid convergences (all of them when fewer exist).
  std::vector<std::size_t> chosen = valid;
  if (config.valid_sample > 0 && chosen.size() > config.valid_sample) {
    Rng rng(derive_seed(config.seed, 0x53414D504C45ULL));
    for (std::size_t i = 0; i < config.valid_sample; ++i) {
      const auto j = i + uniform_index(rng, chosen.size() - i);
      std::swap(chosen[i], chosen[j]);
    }
    chosen.resize(config.valid_sample);
    std::sort(chosen.begin(), chosen.end());
  }
  fit.sampled = chosen;

  std::vector<double> omegas;
  std::vector<double> lambdas;
  for (auto idx : chosen) {
    omegas.push_back(fit.starts[idx].estimate.omega);
    lambdas.push_back(fit.starts[idx].estimate.lambda);
  }
  const auto n = static_cast<double>(chosen.size());
  fit.omega_mean = std::accumulate(omegas.begin(), omegas.end(), 0.0) / n;
  fit.lambda_mean = std::accumulate(lambdas.begin(), lambdas.end(), 0.0) / n;
  fit.omega_sd = sample_sd(omegas, fit.omega_mean);
  fit.lambda_sd = sample_sd(lambdas, fit.lambda_mean);
  fit.log_likelihood_at_mean = model.value(fit.omega_mean, std::log(fit.lambda_mean));
  return fit;
}

double diagnose_omega_validity(const RumFit& fit, std::span<const Gamble> gambles,
                               const OmegaGrid& grid) {
  if (fit.valid_count == 0 || fit.sampled.empty()) {
    throw NumericalError("omega validity diagnostic needs a fit with a valid convergence");
  }
  if (gambles.empty()) return 0.0;
  std::size_t outside = 0;
  for (const auto& g : gambles) {
    const auto domain = monotonic_domain(g, fit.lambda_mean, grid);
    const bool inside = std::any_of(domain.begin(), domain.end(),
                                    [&](const OmegaInterval& iv) { return iv.contains(fit.omega_mean); });
    if (!inside) ++outside;
  }
  return static_cast<double>(outside) / static_cast<double>(gambles.size());
}

}  // namespace tiltlab::rum
