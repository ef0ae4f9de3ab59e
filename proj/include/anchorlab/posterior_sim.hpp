#pragma once
// Monte Carlo model of posterior concentration over a finite set of latent
// patterns.
//
// World: M patterns with anchoring strengths S_i; the target pattern P* is the
// unique maximiser. A trial draws n demonstrations. Each demonstration yields,
// for every pattern, a noisy reading of that pattern's strength,
// a_ij = S_i + sigma * z_ij with z_ij standard normal truncated to |z| <= 6.
// The per-pattern evidence score is the demonstration average
// f_n(P_i) = (1/n) sum_j a_ij, and the posterior is
//
//     p(P_i | anchors) ∝ exp(2 tau f_n(P_i)).
//
// P* dominates the posterior when its weight exceeds the pooled competitor
// weight by the factor 1/delta. With noise-free readings and competitors at
// strength 0 that happens exactly at S* = S_c = ln((M-1)/delta) / (2 tau),
// while the averaging noise (sd sigma/sqrt(n)) sets how sharp the crossing is.
//
// A trial succeeds with probability p_optimal when P* dominates and with
// p_random = 1/M otherwise.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace anchorlab::sim {

struct SimConfig {
  int m = 2;
  double tau = 1.0;
  double delta = 0.1;
  int n = 1;
  std::vector<double> strengths;
  double noise_sigma = 1.0;
  double p_optimal = 0.95;
  std::uint64_t seed = 0;

  // Throws InvalidConfig (including tied maximal strengths).
  void validate() const;
  std::size_t optimal_index() const;
  double p_random() const noexcept { return 1.0 / m; }
};

struct TrialOutcome {
  std::vector<double> posterior;
  std::size_t selected = 0;  // argmax of the posterior, lowest index on ties
  bool dominant = false;     // P* holds posterior odds >= 1/delta against the rest
  bool success = false;
  double mass_on_optimal = 0.0;
};

struct CurvePoint {
  double s_star = 0.0;
  double success_rate = 0.0;
  long trials = 0;
};

struct SuccessCurve {
  std::vector<CurvePoint> points;
};

struct ScalingFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

// Noise realisation of one trial: per-pattern mean of the n standardized
// readings, plus the uniform used for the correctness draw. Independent of the
// strengths, so one draw can be replayed against many strength settings.
struct EvidenceDraw {
  std::vector<double> mean_noise;
  double u = 0.0;
};

double critical_threshold(double tau, int m, double delta);

EvidenceDraw draw_evidence(const SimConfig& config, std::mt19937_64& rng);
TrialOutcome evaluate_trial(const SimConfig& config, const EvidenceDraw& draw);
TrialOutcome run_trial(const SimConfig& config);

// Optimal pattern (index 0 unless the template has valid strengths) is set to
// each grid value, competitors to 0. Trial t uses seed derive(template.seed, t)
// at every grid point, so the curve uses common random numbers.
SuccessCurve success_curve(const SimConfig& config_template, std::span<const double> s_star_grid,
                           long trials_per_point, unsigned parallelism = 1);

// 10%-90% rise of the curve, measured on its isotonic (monotone) fit.
double transition_width(const SuccessCurve& curve, double lo_frac = 0.1, double hi_frac = 0.9);

// OLS of ln(width) on ln(n).
ScalingFit scaling_exponent(std::span<const double> n_values, std::span<const double> widths);

// Empirical exponential-decay rates of the regime tails: frequency with which
// P* dominates at S_c - epsilon (subcritical) and fails to dominate at
// S_c + epsilon (supercritical), regressed as ln(freq) on n.
struct DecayFit {
  std::vector<int> n_values;
  std::vector<double> sub_freq;
  std::vector<double> super_freq;
  double c1 = 0.0;  // -slope / epsilon^2 (subcritical)
  double c2 = 0.0;  // -slope / epsilon (supercritical)
  double r2_sub = 0.0;
  double r2_super = 0.0;
};

DecayFit decay_rates(const SimConfig& config_template, double epsilon,
                     std::span<const int> n_values, long trials, unsigned parallelism = 1);

}  // namespace anchorlab::sim
