#include "anchorlab/posterior_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <thread>

#include "anchorlab/common.hpp"
#include "anchorlab/error.hpp"

namespace anchorlab::sim {
namespace {

constexpr double kTruncation = 6.0;

[[noreturn]] void bad_config(const std::string& what) { throw Error(Errc::invalid_config, what); }

double log_sum_exp(std::span<const double> xs, std::size_t skip = std::numeric_limits<std::size_t>::max()) {
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (i != skip) hi = std::max(hi, xs[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (i != skip) s += std::exp(xs[i] - hi);
  return hi + std::log(s);
}

std::size_t sweep_target(const SimConfig& config) {
  if (static_cast<int>(config.strengths.size()) != config.m) return 0;
  try {
    return config.optimal_index();
  } catch (const Error&) {
    return 0;
  }
}

SimConfig with_target_strength(const SimConfig& base, std::size_t target, double s_star) {
  SimConfig cfg = base;
  cfg.strengths.assign(static_cast<std::size_t>(cfg.m), 0.0);
  cfg.strengths[target] = s_star;
  return cfg;
}

// Splits [0, trials) over worker threads; fn(begin, end, slot) fills per-slot
// partial results that the caller reduces in slot order.
template <typename Fn>
void for_trial_ranges(long trials, unsigned parallelism, Fn&& fn) {
  const unsigned workers = std::max(1u, std::min<unsigned>(parallelism, static_cast<unsigned>(std::max(1L, trials))));
  if (workers == 1) {
    fn(0L, trials, 0u);
    return;
  }
  std::vector<std::jthread> pool;
  const long chunk = (trials + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const long begin = std::min<long>(trials, w * chunk);
    const long end = std::min<long>(trials, begin + chunk);
    pool.emplace_back([&fn, begin, end, w] { fn(begin, end, w); });
  }
}

ScalingFit ols(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0) throw Error(Errc::insufficient_points, "regressor has no spread");
  ScalingFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ssr = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (fit.intercept + fit.slope * x[i]);
    ssr += r * r;
  }
  fit.r2 = syy > 0 ? 1.0 - ssr / syy : 1.0;
  return fit;
}

}  // namespace

void SimConfig::validate() const {
  if (m < 2) bad_config("m must be >= 2");
  if (!(tau > 0) || !std::isfinite(tau)) bad_config("tau must be finite and > 0");
  if (!(delta > 0 && delta <= 1)) bad_config("delta must be in (0, 1]");
  if (n < 1) bad_config("n must be >= 1");
  if (!(noise_sigma > 0) || !std::isfinite(noise_sigma)) bad_config("noise_sigma must be finite and > 0");
  if (!(p_optimal > p_random() && p_optimal <= 1)) bad_config("p_optimal must be in (1/m, 1]");
  if (static_cast<int>(strengths.size()) != m)
    bad_config("expected " + std::to_string(m) + " strengths, got " + std::to_string(strengths.size()));
  for (double s : strengths)
    if (!std::isfinite(s)) bad_config("strengths must be finite");
  const double top = *std::max_element(strengths.begin(), strengths.end());
  if (std::count(strengths.begin(), strengths.end(), top) != 1)
    bad_config("maximal strength must be unique");
}

std::size_t SimConfig::optimal_index() const {
  validate();
  return static_cast<std::size_t>(std::max_element(strengths.begin(), strengths.end()) - strengths.begin());
}

double critical_threshold(double tau, int m, double delta) {
  if (m < 2) throw Error(Errc::invalid_domain, "m must be >= 2");
  if (!(tau > 0)) throw Error(Errc::invalid_domain, "tau must be > 0");
  if (!(delta > 0 && delta <= 1)) throw Error(Errc::invalid_domain, "delta must be in (0, 1]");
  return std::log(static_cast<double>(m - 1) / delta) / (2.0 * tau);
}

EvidenceDraw draw_evidence(const SimConfig& config, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  EvidenceDraw draw;
  draw.mean_noise.resize(static_cast<std::size_t>(config.m));
  for (auto& mean : draw.mean_noise) {
    double sum = 0.0;
    for (int j = 0; j < config.n; ++j) {
      double z;
      do {
        z = normal(rng);
      } while (std::abs(z) > kTruncation);
      sum += z;
    }
    mean = sum / config.n;
  }
  draw.u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return draw;
}

TrialOutcome evaluate_trial(const SimConfig& config, const EvidenceDraw& draw) {
  const std::size_t opt = config.optimal_index();
  const std::size_t m = config.strengths.size();

  std::vector<double> log_weight(m);
  for (std::size_t i = 0; i < m; ++i)
    log_weight[i] = 2.0 * config.tau * (config.strengths[i] + config.noise_sigma * draw.mean_noise[i]);

  const double log_norm = log_sum_exp(log_weight);
  TrialOutcome out;
  out.posterior.resize(m);
  for (std::size_t i = 0; i < m; ++i) out.posterior[i] = std::exp(log_weight[i] - log_norm);

  out.selected = 0;
  for (std::size_t i = 1; i < m; ++i)
    if (log_weight[i] > log_weight[out.selected]) out.selected = i;

  const double log_odds = log_weight[opt] - log_sum_exp(log_weight, opt);
  out.dominant = out.selected == opt && log_odds >= std::log(1.0 / config.delta);
  out.mass_on_optimal = out.posterior[opt];
  out.success = draw.u < (out.dominant ? config.p_optimal : config.p_random());
  return out;
}

TrialOutcome run_trial(const SimConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  return evaluate_trial(config, draw_evidence(config, rng));
}

SuccessCurve success_curve(const SimConfig& config_template, std::span<const double> s_star_grid,
                           long trials_per_point, unsigned parallelism) {
  if (trials_per_point < 100) bad_config("trials_per_point must be >= 100");
  for (std::size_t i = 1; i < s_star_grid.size(); ++i)
    if (!(s_star_grid[i] > s_star_grid[i - 1])) bad_config("s_star grid must be strictly increasing");

  SuccessCurve curve;
  if (s_star_grid.empty()) return curve;

  const std::size_t target = sweep_target(config_template);
  std::vector<SimConfig> configs;
  configs.reserve(s_star_grid.size());
  for (double s : s_star_grid) {
    configs.push_back(with_target_strength(config_template, target, s));
    configs.back().validate();
  }

  const unsigned workers = std::max(1u, parallelism);
  std::vector<std::vector<long>> partial(workers, std::vector<long>(s_star_grid.size(), 0));
  for_trial_ranges(trials_per_point, workers, [&](long begin, long end, unsigned slot) {
    auto& counts = partial[slot];
    for (long t = begin; t < end; ++t) {
      std::mt19937_64 rng(derive_seed(config_template.seed, {static_cast<std::uint64_t>(t)}));
      const EvidenceDraw draw = draw_evidence(configs.front(), rng);
      for (std::size_t g = 0; g < configs.size(); ++g)
        if (evaluate_trial(configs[g], draw).success) ++counts[g];
    }
  });

  for (std::size_t g = 0; g < s_star_grid.size(); ++g) {
    long successes = 0;
    for (const auto& counts : partial) successes += counts[g];
    curve.points.push_back({s_star_grid[g], static_cast<double>(successes) / trials_per_point, trials_per_point});
  }
  return curve;
}

double transition_width(const SuccessCurve& curve, double lo_frac, double hi_frac) {
  if (!(lo_frac >= 0 && lo_frac < hi_frac && hi_frac <= 1))
    throw Error(Errc::invalid_argument, "need 0 <= lo_frac < hi_frac <= 1");
  const auto& pts = curve.points;
  if (pts.size() < 2) throw Error(Errc::range_not_spanned, "curve has fewer than two points");

  // Pool-adjacent-violators fit, weighted by trial counts.
  struct Block {
    double value;
    double weight;
    std::size_t count;
  };
  std::vector<Block> blocks;
  for (const auto& p : pts) {
    blocks.push_back({p.success_rate, static_cast<double>(std::max(1L, p.trials)), 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].value > blocks.back().value) {
      Block b = blocks.back();
      blocks.pop_back();
      Block& a = blocks.back();
      a.value = (a.value * a.weight + b.value * b.weight) / (a.weight + b.weight);
      a.weight += b.weight;
      a.count += b.count;
    }
  }
  std::vector<double> fitted;
  for (const auto& b : blocks) fitted.insert(fitted.end(), b.count, b.value);

  const double lo = fitted.front();
  const double hi = fitted.back();
  if (!(hi > lo)) throw Error(Errc::range_not_spanned, "curve is flat");

  auto crossing = [&](double frac) {
    const double level = lo + frac * (hi - lo);
    std::size_t i = 0;
    while (i < fitted.size() && fitted[i] < level) ++i;
    if (i == 0) return pts[0].s_star;
    if (i == fitted.size()) throw Error(Errc::range_not_spanned, "curve never reaches level");
    const double t = (level - fitted[i - 1]) / (fitted[i] - fitted[i - 1]);
    return pts[i - 1].s_star + t * (pts[i].s_star - pts[i - 1].s_star);
  };
  return std::max(0.0, crossing(hi_frac) - crossing(lo_frac));
}

ScalingFit scaling_exponent(std::span<const double> n_values, std::span<const double> widths) {
  if (n_values.size() != widths.size()) throw Error(Errc::dimension_mismatch, "n_values and widths differ in length");
  if (n_values.size() < 3) throw Error(Errc::insufficient_points, "need at least three points");
  std::vector<double> x, y;
  for (std::size_t i = 0; i < n_values.size(); ++i) {
    if (!(n_values[i] > 0)) throw Error(Errc::invalid_argument, "n values must be positive");
    if (!(widths[i] > 0)) throw Error(Errc::non_positive_width, "width " + format_double(widths[i]));
    x.push_back(std::log(n_values[i]));
    y.push_back(std::log(widths[i]));
  }
  return ols(x, y);
}

DecayFit decay_rates(const SimConfig& config_template, double epsilon, std::span<const int> n_values,
                     long trials, unsigned parallelism) {
  if (!(epsilon > 0)) throw Error(Errc::invalid_argument, "epsilon must be > 0");
  if (trials < 100) bad_config("trials must be >= 100");
  const double s_c = critical_threshold(config_template.tau, config_template.m, config_template.delta);
  const std::size_t target = sweep_target(config_template);

  DecayFit fit;
  std::vector<double> xs_sub, ys_sub, xs_sup, ys_sup;
  for (int n : n_values) {
    SimConfig sub = with_target_strength(config_template, target, s_c - epsilon);
    SimConfig sup = with_target_strength(config_template, target, s_c + epsilon);
    sub.n = sup.n = n;
    sub.validate();
    sup.validate();

    const unsigned workers = std::max(1u, parallelism);
    std::vector<long> sub_hits(workers, 0), sup_misses(workers, 0);
    for_trial_ranges(trials, workers, [&](long begin, long end, unsigned slot) {
      for (long t = begin; t < end; ++t) {
        std::mt19937_64 rng(derive_seed(config_template.seed,
                                        {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(t)}));
        const EvidenceDraw draw = draw_evidence(sub, rng);
        if (evaluate_trial(sub, draw).dominant) ++sub_hits[slot];
        if (!evaluate_trial(sup, draw).dominant) ++sup_misses[slot];
      }
    });
    long a = 0, b = 0;
    for (unsigned w = 0; w < workers; ++w) {
      a += sub_hits[w];
      b += sup_misses[w];
    }
    const double fa = static_cast<double>(a) / trials;
    const double fb = static_cast<double>(b) / trials;
    fit.n_values.push_back(n);
    fit.sub_freq.push_back(fa);
    fit.super_freq.push_back(fb);
    if (a > 0) {
      xs_sub.push_back(n);
      ys_sub.push_back(std::log(fa));
    }
    if (b > 0) {
      xs_sup.push_back(n);
      ys_sup.push_back(std::log(fb));
    }
  }
  if (xs_sub.size() < 3 || xs_sup.size() < 3)
    throw Error(Errc::insufficient_points, "fewer than three non-zero tail frequencies; lower epsilon or n");
  const ScalingFit s1 = ols(xs_sub, ys_sub);
  const ScalingFit s2 = ols(xs_sup, ys_sup);
  fit.c1 = -s1.slope / (epsilon * epsilon);
  fit.c2 = -s2.slope / epsilon;
  fit.r2_sub = s1.r2;
  fit.r2_super = s2.r2;
  return fit;
}

}  // namespace anchorlab::sim
