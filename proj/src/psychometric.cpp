#include "anchorlab/psychometric.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <random>
#include <set>
#include <thread>

#include <Eigen/Dense>

#include "json.hpp"

#include "anchorlab/common.hpp"
#include "anchorlab/error.hpp"

namespace anchorlab::psy {
namespace {

const double kLn9 = std::log(9.0);

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct Data {
  std::vector<double> log_k;
  std::vector<double> y;
  std::vector<double> w;
};

Data fit_data(const ShotCurve& curve) {
  Data d;
  double total = 0;
  for (const auto& p : curve.points) {
    if (p.k < 1) continue;
    d.log_k.push_back(std::log(static_cast<double>(p.k)));
    d.y.push_back(p.accuracy);
    d.w.push_back(static_cast<double>(p.n_items));
    total += static_cast<double>(p.n_items);
  }
  const double mean_w = total / static_cast<double>(std::max<std::size_t>(1, d.w.size()));
  for (double& w : d.w) w /= mean_w;
  return d;
}

// Parameters: a, g, and (free mode) the asymptote.
struct Model {
  double floor;
  bool free_asymptote;
  double fixed_asymptote;

  double asymptote(const Eigen::VectorXd& p) const { return free_asymptote ? p(2) : fixed_asymptote; }

  double cost(const Data& d, const Eigen::VectorXd& p) const {
    double c = 0;
    const double span = asymptote(p) - floor;
    for (std::size_t i = 0; i < d.y.size(); ++i) {
      const double r = d.y[i] - (floor + span * logistic(p(1) * d.log_k[i] - p(0)));
      c += d.w[i] * r * r;
    }
    return c;
  }

  // Weighted residuals and their Jacobian with respect to the model values.
  void linearize(const Data& d, const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd& j) const {
    const auto n = static_cast<Eigen::Index>(d.y.size());
    r.resize(n);
    j.resize(n, p.size());
    const double span = asymptote(p) - floor;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      const double sw = std::sqrt(d.w[ui]);
      const double s = logistic(p(1) * d.log_k[ui] - p(0));
      const double ds = s * (1 - s);
      r(i) = sw * (d.y[ui] - (floor + span * s));
      j(i, 0) = sw * (-span * ds);
      j(i, 1) = sw * (span * ds * d.log_k[ui]);
      if (free_asymptote) j(i, 2) = sw * s;
    }
  }

  void project(Eigen::VectorXd& p) const {
    if (free_asymptote) p(2) = std::clamp(p(2), floor + 1e-6, 1.0);
  }
};

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  return v;
}

double percentile(std::vector<double> xs, double q) {
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

}  // namespace

void ShotCurve::validate() const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (p.k < 0) throw Error(Errc::invalid_argument, "negative shot count");
    if (i > 0 && p.k <= points[i - 1].k) throw Error(Errc::invalid_argument, "k values must be strictly increasing");
    if (!(p.accuracy >= 0 && p.accuracy <= 1)) throw Error(Errc::invalid_argument, "accuracy outside [0, 1]");
    if (p.n_items < 1) throw Error(Errc::invalid_argument, "n_items must be >= 1");
  }
}

double fitted_accuracy(const FitResult& fit, double k) {
  if (!(k > 0)) throw Error(Errc::invalid_argument, "fitted form needs k > 0");
  return fit.floor + (fit.asymptote - fit.floor) * logistic(fit.g * std::log(k) - fit.a);
}

FitResult fit_shot_curve(const ShotCurve& curve, const FitOptions& options) {
  curve.validate();
  if (!(options.floor >= 0 && options.floor < 1)) throw Error(Errc::invalid_argument, "floor must be in [0, 1)");
  const bool free = options.asymptote_mode == AsymptoteMode::free;
  if (!free && !(options.fixed_asymptote > options.floor && options.fixed_asymptote <= 1))
    throw Error(Errc::invalid_argument, "asymptote must be in (floor, 1]");

  const Data d = fit_data(curve);
  if (d.y.size() < 4) throw Error(Errc::insufficient_points, "need at least 4 points with k >= 1");
  const auto [lo_y, hi_y] = std::minmax_element(d.y.begin(), d.y.end());
  if (*hi_y - *lo_y <= 1e-12) throw Error(Errc::degenerate_curve, "accuracy is flat across k");

  const Model model{options.floor, free, options.fixed_asymptote};
  const Eigen::Index np = free ? 3 : 2;

  // Coarse grid; threshold parameterised as ln k50 so the slope grid stays
  // meaningful across very early and very late transitions.
  Eigen::VectorXd best(np);
  double best_cost = INFINITY;
  std::vector<double> asymptotes{options.fixed_asymptote};
  if (free) {
    asymptotes.clear();
    for (double v : linspace(0.3, 1.0, 15))
      if (v > options.floor) asymptotes.push_back(v);
    asymptotes.push_back(std::clamp(*hi_y, options.floor + 1e-3, 1.0));
  }
  Eigen::VectorXd p(np);
  for (double ln_k50 : linspace(std::log(0.01), std::log(1000.0), 49)) {
    for (double lg : linspace(-2.0, 1.5, 36)) {
      const double g = std::pow(10.0, lg);
      for (double asym : asymptotes) {
        p(0) = g * ln_k50;
        p(1) = g;
        if (free) p(2) = asym;
        const double c = model.cost(d, p);
        if (c < best_cost) {
          best_cost = c;
          best = p;
        }
      }
    }
  }

  // Levenberg-Marquardt refinement.
  p = best;
  double cost = best_cost;
  double lambda = 1e-3;
  Eigen::VectorXd r;
  Eigen::MatrixXd j;
  int iter = 0;
  bool converged = false;
  for (; iter < options.max_iterations; ++iter) {
    if (cost < 1e-30) {
      converged = true;
      break;
    }
    model.linearize(d, p, r, j);
    const Eigen::MatrixXd jtj = j.transpose() * j;
    const Eigen::VectorXd jtr = j.transpose() * r;
    if (jtr.cwiseAbs().maxCoeff() < 1e-15) {
      converged = true;
      break;
    }
    Eigen::MatrixXd lhs = jtj;
    for (Eigen::Index i = 0; i < np; ++i) lhs(i, i) += lambda * std::max(jtj(i, i), 1e-12);
    const Eigen::VectorXd step = lhs.ldlt().solve(jtr);
    Eigen::VectorXd trial = p + step;
    model.project(trial);
    const double trial_cost = model.cost(d, trial);
    if (std::isfinite(trial_cost) && trial_cost <= cost) {
      const Eigen::VectorXd moved = trial - p;
      p = trial;
      cost = trial_cost;
      lambda = std::max(lambda / 10, 1e-12);
      bool small = true;
      for (Eigen::Index i = 0; i < np; ++i)
        if (std::abs(moved(i)) > options.tolerance * (1 + std::abs(p(i)))) small = false;
      if (small) {
        converged = true;
        break;
      }
    } else {
      lambda *= 10;
      if (lambda > 1e16) {
        // No descent direction left at machine precision: a minimum.
        converged = true;
        break;
      }
    }
  }
  if (!converged)
    throw Error(Errc::non_convergence, "no convergence after " + std::to_string(options.max_iterations) + " iterations");

  FitResult fit;
  fit.a = p(0);
  fit.g = p(1);
  fit.asymptote = model.asymptote(p);
  fit.floor = options.floor;
  fit.rss = cost;
  fit.iterations = iter;
  if (!(fit.g > 1e-6) || !std::isfinite(fit.a))
    throw Error(Errc::degenerate_curve, "fitted curve does not rise with k (g = " + format_double(fit.g) + ")");
  fit.k50 = std::exp(fit.a / fit.g);
  fit.k90 = std::exp((fit.a + kLn9) / fit.g);
  fit.k10 = std::exp((fit.a - kLn9) / fit.g);
  fit.phase_width = fit.k90 - fit.k10;

  int k_min = 0, k_max = 0;
  for (const auto& pt : curve.points)
    if (pt.k >= 1) {
      if (k_min == 0) k_min = pt.k;
      k_max = pt.k;
    }
  fit.extrapolated = fit.k50 < k_min || fit.k50 > k_max;
  return fit;
}

BootstrapResult bootstrap_intervals(const ShotCurve& curve, int resamples, std::uint64_t seed,
                                    const FitOptions& options, double level, unsigned parallelism) {
  if (resamples < 200) throw Error(Errc::too_few_resamples, "need >= 200 resamples, got " + std::to_string(resamples));
  if (!(level > 0 && level < 1)) throw Error(Errc::invalid_argument, "level must be in (0, 1)");
  fit_shot_curve(curve, options);

  struct Slot {
    bool ok = false;
    FitResult fit;
    std::exception_ptr error;
  };
  std::vector<Slot> slots(static_cast<std::size_t>(resamples));
  auto work = [&](int begin, int end) {
    for (int r = begin; r < end; ++r) {
      std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(r)}));
      ShotCurve boot = curve;
      for (auto& pt : boot.points) {
        std::binomial_distribution<long> draw(pt.n_items, pt.accuracy);
        pt.accuracy = static_cast<double>(draw(rng)) / static_cast<double>(pt.n_items);
      }
      auto& slot = slots[static_cast<std::size_t>(r)];
      try {
        slot.fit = fit_shot_curve(boot, options);
        slot.ok = true;
      } catch (const Error&) {
        slot.error = std::current_exception();
      }
    }
  };
  const int workers = static_cast<int>(std::clamp<unsigned>(parallelism, 1, static_cast<unsigned>(resamples)));
  if (workers == 1) {
    work(0, resamples);
  } else {
    std::vector<std::jthread> pool;
    const int chunk = (resamples + workers - 1) / workers;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back(work, std::min(resamples, w * chunk), std::min(resamples, (w + 1) * chunk));
  }

  BootstrapResult out;
  out.resamples = resamples;
  std::vector<double> k50, k90, width, asym;
  std::exception_ptr last_error;
  for (const auto& s : slots) {
    if (!s.ok) {
      ++out.failures;
      last_error = s.error;
      continue;
    }
    k50.push_back(s.fit.k50);
    k90.push_back(s.fit.k90);
    width.push_back(s.fit.phase_width);
    asym.push_back(s.fit.asymptote);
  }
  if (out.failures * 5 > resamples) std::rethrow_exception(last_error);

  const double qlo = (1 - level) / 2;
  const double qhi = (1 + level) / 2;
  out.k50 = {percentile(k50, qlo), percentile(k50, qhi)};
  out.k90 = {percentile(k90, qlo), percentile(k90, qhi)};
  out.phase_width = {percentile(width, qlo), percentile(width, qhi)};
  out.asymptote = {percentile(asym, qlo), percentile(asym, qhi)};
  return out;
}

double cohens_d(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw Error(Errc::too_few_samples, "each sample needs at least 2 values");
  auto moments = [](std::span<const double> x) {
    double mean = 0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double ss = 0;
    for (double v : x) ss += (v - mean) * (v - mean);
    return std::pair{mean, ss};
  };
  const auto [ma, ssa] = moments(a);
  const auto [mb, ssb] = moments(b);
  const double pooled = (ssa + ssb) / static_cast<double>(a.size() + b.size() - 2);
  if (!(pooled > 0)) throw Error(Errc::zero_pooled_variance, "both samples are constant");
  return (ma - mb) / std::sqrt(pooled);
}

double DeltaMatrix::at(int trained, int evaluated) const {
  const auto t = std::find(trained_bases.begin(), trained_bases.end(), trained);
  const auto e = std::find(evaluated_bases.begin(), evaluated_bases.end(), evaluated);
  if (t == trained_bases.end() || e == evaluated_bases.end())
    throw Error(Errc::missing_cell, "no cell (" + std::to_string(trained) + ", " + std::to_string(evaluated) + ")");
  return delta[static_cast<std::size_t>(t - trained_bases.begin())][static_cast<std::size_t>(e - evaluated_bases.begin())];
}

DeltaMatrix interference_matrix(std::span<const InterferenceRun> runs) {
  std::set<int> trained, evaluated;
  std::map<std::pair<int, int>, double> cells;
  for (const auto& r : runs) {
    if (!std::isfinite(r.acc_before) || !std::isfinite(r.acc_after))
      throw Error(Errc::non_finite_input, "non-finite accuracy");
    trained.insert(r.trained_base);
    evaluated.insert(r.evaluated_base);
    if (!cells.emplace(std::pair{r.trained_base, r.evaluated_base}, 100.0 * (r.acc_after - r.acc_before)).second)
      throw Error(Errc::duplicate_cell, "cell (" + std::to_string(r.trained_base) + ", " +
                                            std::to_string(r.evaluated_base) + ") given twice");
  }
  DeltaMatrix m;
  m.trained_bases.assign(trained.begin(), trained.end());
  m.evaluated_bases.assign(evaluated.begin(), evaluated.end());
  for (int t : m.trained_bases) {
    auto& row = m.delta.emplace_back();
    for (int e : m.evaluated_bases) {
      const auto it = cells.find({t, e});
      if (it == cells.end())
        throw Error(Errc::missing_cell, "cell (" + std::to_string(t) + ", " + std::to_string(e) + ") absent");
      row.push_back(it->second);
    }
  }
  return m;
}

ScopeShift scope_shift(int operand_digits, double acc_before, double acc_after) {
  if (!(acc_before >= 0 && acc_before <= 1 && acc_after >= 0 && acc_after <= 1))
    throw Error(Errc::invalid_argument, "accuracies must be in [0, 1]");
  return {operand_digits, acc_before, acc_after, 100.0 * (acc_after - acc_before)};
}

std::string fit_csv_header() { return "base,k50,k50_lo,k50_hi,k90,phase_width,asymptote,rss"; }

std::string fit_csv_row(int base, const FitResult& fit, const std::optional<BootstrapResult>& boot) {
  std::string row = std::to_string(base) + "," + format_double(fit.k50) + ",";
  if (boot) row += format_double(boot->k50.lo) + "," + format_double(boot->k50.hi);
  else row += ",";
  row += "," + format_double(fit.k90) + "," + format_double(fit.phase_width) + "," + format_double(fit.asymptote) +
         "," + format_double(fit.rss);
  return row;
}

std::string to_json(const FitResult& fit) {
  nlohmann::ordered_json j;
  j["a"] = fit.a;
  j["g"] = fit.g;
  j["k50"] = fit.k50;
  j["k90"] = fit.k90;
  j["k10"] = fit.k10;
  j["phase_width"] = fit.phase_width;
  j["asymptote"] = fit.asymptote;
  j["floor"] = fit.floor;
  j["rss"] = fit.rss;
  j["extrapolated"] = fit.extrapolated;
  return j.dump();
}

std::string to_json(const DeltaMatrix& matrix) {
  nlohmann::ordered_json j;
  j["trained_bases"] = matrix.trained_bases;
  j["evaluated_bases"] = matrix.evaluated_bases;
  j["delta"] = matrix.delta;
  return j.dump();
}

std::string delta_csv(const DeltaMatrix& matrix) {
  std::string out = "trained_base,evaluated_base,delta_pp\n";
  for (std::size_t i = 0; i < matrix.trained_bases.size(); ++i)
    for (std::size_t e = 0; e < matrix.evaluated_bases.size(); ++e)
      out += std::to_string(matrix.trained_bases[i]) + "," + std::to_string(matrix.evaluated_bases[e]) + "," +
             format_double(matrix.delta[i][e]) + "\n";
  return out;
}

}  // namespace anchorlab::psy
