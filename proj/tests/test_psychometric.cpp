#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"

#include "anchorlab/common.hpp"
#include "anchorlab/error.hpp"
#include "anchorlab/psychometric.hpp"

using namespace anchorlab;
using namespace anchorlab::psy;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an anchorlab::Error");
  return Errc::invalid_argument;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Forward model written out independently of fitted_accuracy.
ShotCurve forward(double a, double g, std::vector<int> ks, long n = 250, double floor = 0, double top = 1) {
  ShotCurve c;
  for (int k : ks) c.points.push_back({k, floor + (top - floor) * sigmoid(g * std::log(double(k)) - a), n});
  return c;
}

double direct_d(const std::vector<double>& a, const std::vector<double>& b) {
  auto mean = [](const std::vector<double>& x) { return std::accumulate(x.begin(), x.end(), 0.0) / double(x.size()); };
  auto ss = [&](const std::vector<double>& x) {
    const double m = mean(x);
    double s = 0;
    for (double v : x) s += (v - m) * (v - m);
    return s;
  };
  const double pooled = std::sqrt((ss(a) + ss(b)) / double(a.size() + b.size() - 2));
  return (mean(a) - mean(b)) / pooled;
}

}  // namespace

TEST_CASE("noise-free recovery of a = 2, g = 1") {
  const auto fit = fit_shot_curve(forward(2, 1, {1, 2, 4, 8, 16}));
  CHECK(std::abs(fit.a - 2) < 1e-6);
  CHECK(std::abs(fit.g - 1) < 1e-6);
  CHECK(fit.k50 == doctest::Approx(std::exp(2.0)).epsilon(1e-6));
  CHECK_FALSE(fit.extrapolated);
  CHECK(fit.rss < 1e-12);
}

TEST_CASE("degenerate and short curves") {
  ShotCurve flat;
  for (int k : {1, 2, 4, 8, 16}) flat.points.push_back({k, 0.5, 250});
  CHECK(code_of([&] { fit_shot_curve(flat); }) == Errc::degenerate_curve);

  ShotCurve falling;
  for (int k : {1, 2, 4, 8, 16}) falling.points.push_back({k, 1.0 - k / 20.0, 250});
  CHECK(code_of([&] { fit_shot_curve(falling); }) == Errc::degenerate_curve);

  CHECK(code_of([] { fit_shot_curve(forward(2, 1, {1, 2, 4})); }) == Errc::insufficient_points);

  ShotCurve unsorted = forward(2, 1, {1, 2, 4, 8});
  std::swap(unsorted.points[0], unsorted.points[1]);
  CHECK(code_of([&] { fit_shot_curve(unsorted); }) == Errc::invalid_argument);
}

TEST_CASE("k = 0 points are ignored by the fit") {
  auto with_zero = forward(1, 1.5, {1, 2, 4, 8, 16});
  const auto without = fit_shot_curve(with_zero);
  with_zero.points.insert(with_zero.points.begin(), ShotPoint{0, 0.9, 250});
  const auto fit = fit_shot_curve(with_zero);
  CHECK(fit.a == doctest::Approx(without.a).epsilon(1e-9));
  CHECK(fit.g == doctest::Approx(without.g).epsilon(1e-9));
}

TEST_CASE("fit properties over random truths") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> uk(0.3, 12), ug(0.5, 4);
  for (int t = 0; t < 40; ++t) {
    const double k50 = uk(rng), g = ug(rng);
    const double a = g * std::log(k50);
    const auto fit = fit_shot_curve(forward(a, g, {1, 2, 4, 8, 16, 32}));
    CHECK(fit.k50 == doctest::Approx(std::exp(fit.a / fit.g)).epsilon(1e-12));
    CHECK(fit.k90 > fit.k50);
    CHECK(fit.k50 > fit.k10);
    CHECK(fit.phase_width == doctest::Approx(fit.k90 - fit.k10).epsilon(1e-12));
    CHECK(fitted_accuracy(fit, fit.k50) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(fitted_accuracy(fit, fit.k90) == doctest::Approx(0.9).epsilon(1e-9));
    CHECK(fit.extrapolated == (fit.k50 < 1 || fit.k50 > 32));

    // Idempotence: refit the fitted model's own predictions.
    ShotCurve again;
    for (int k : {1, 2, 4, 8, 16, 32}) again.points.push_back({k, fitted_accuracy(fit, k), 250});
    const auto re = fit_shot_curve(again);
    CHECK(std::abs(re.a - fit.a) < 1e-6);
    CHECK(std::abs(re.g - fit.g) < 1e-6);
  }
}

TEST_CASE("free asymptote and floor") {
  const auto curve = forward(1.5, 2, {1, 2, 3, 4, 6, 8, 12, 16}, 250, 0.1, 0.85);
  FitOptions opts;
  opts.floor = 0.1;
  opts.asymptote_mode = AsymptoteMode::free;
  const auto fit = fit_shot_curve(curve, opts);
  CHECK(fit.asymptote == doctest::Approx(0.85).epsilon(1e-6));
  CHECK(fit.a == doctest::Approx(1.5).epsilon(1e-6));
  CHECK(fitted_accuracy(fit, fit.k50) == doctest::Approx(0.1 + 0.5 * 0.75).epsilon(1e-9));
}

TEST_CASE("bootstrap intervals") {
  CHECK(code_of([] { bootstrap_intervals(forward(2, 1, {1, 2, 4, 8, 16}), 100, 1); }) == Errc::too_few_resamples);

  // Huge cells leave no sampling variance.
  const auto exact = forward(2, 1, {1, 2, 4, 8, 16}, 10'000'000'000'000'000L);
  const auto tight = bootstrap_intervals(exact, 200, 3);
  CHECK(tight.k50.hi - tight.k50.lo < 1e-6);
  CHECK(tight.k50.lo <= std::exp(2.0) + 1e-6);
  CHECK(tight.k50.hi >= std::exp(2.0) - 1e-6);

  const auto noisy = forward(2, 1, {1, 2, 4, 8, 16}, 250);
  const auto b1 = bootstrap_intervals(noisy, 200, 9);
  const auto b2 = bootstrap_intervals(noisy, 200, 9, {}, 0.68, 3);
  CHECK(b1.k50.lo == b2.k50.lo);
  CHECK(b1.k50.hi == b2.k50.hi);
  CHECK(b1.phase_width.hi == b2.phase_width.hi);
  CHECK(b1.k50.lo < b1.k50.hi);
}

TEST_CASE("bootstrap coverage under Bernoulli noise") {
  const double a = 2, g = 1, truth = std::exp(a / g);
  const std::vector<int> ks{1, 2, 4, 8, 16};
  // True coverage sits near 66%, so 100 replications would dip under 60 by
  // chance about one time in twelve; 500 pins the rate down.
  int covered = 0;
  const int outer = 500;
  for (int rep = 0; rep < outer; ++rep) {
    std::mt19937_64 rng(derive_seed(55, {static_cast<std::uint64_t>(rep)}));
    ShotCurve c;
    for (int k : ks) {
      std::binomial_distribution<long> draw(250, sigmoid(g * std::log(double(k)) - a));
      c.points.push_back({k, draw(rng) / 250.0, 250});
    }
    const auto b = bootstrap_intervals(c, 200, derive_seed(56, {static_cast<std::uint64_t>(rep)}));
    if (b.k50.lo <= truth && truth <= b.k50.hi) ++covered;
  }
  CHECK(covered >= outer * 60 / 100);
}

TEST_CASE("cohens_d") {
  const std::vector<double> a{1, 2, 3, 4}, b{1, 2, 3, 4};
  CHECK(cohens_d(a, b) == 0.0);
  const std::vector<double> hi{0, 2}, lo{-1, 1};
  CHECK(cohens_d(hi, lo) == doctest::Approx(1.0 / std::sqrt(2.0)));
  // means 1 and 0, both sd 1
  const std::vector<double> x{0, 1, 2}, y{-1, 0, 1};
  CHECK(cohens_d(x, y) == doctest::Approx(1.0));

  const std::vector<double> one{1};
  CHECK(code_of([&] { cohens_d(one, a); }) == Errc::too_few_samples);
  const std::vector<double> c1{3, 3}, c2{3, 3};
  CHECK(code_of([&] { cohens_d(c1, c2); }) == Errc::zero_pooled_variance);

  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd(0, 2);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> s(static_cast<std::size_t>(2 + t % 9)), u(static_cast<std::size_t>(3 + t % 5));
    for (auto& v : s) v = nd(rng);
    for (auto& v : u) v = nd(rng) + 1;
    const double d = cohens_d(s, u);
    CHECK(std::abs(d - direct_d(s, u)) < 1e-12);
    CHECK(cohens_d(u, s) == -d);
    auto s2 = s, u2 = u;
    for (auto& v : s2) v += 7.25;
    for (auto& v : u2) v += 7.25;
    CHECK(cohens_d(s2, u2) == doctest::Approx(d).epsilon(1e-9));
  }
}

TEST_CASE("interference_matrix") {
  std::vector<InterferenceRun> runs{{8, 9, 0.80, 0.60}};
  auto m = interference_matrix(runs);
  CHECK(m.at(8, 9) == doctest::Approx(-20.0));

  runs.clear();
  for (int t : {8, 9, 10})
    for (int e : {10, 8, 9}) runs.push_back({t, e, 0.7, 0.7});
  m = interference_matrix(runs);
  CHECK(m.trained_bases == std::vector<int>{8, 9, 10});
  CHECK(m.evaluated_bases == std::vector<int>{8, 9, 10});
  for (const auto& row : m.delta)
    for (double v : row) CHECK(v == 0.0);

  auto missing = runs;
  missing.pop_back();
  CHECK(code_of([&] { interference_matrix(missing); }) == Errc::missing_cell);
  auto dup = runs;
  dup.push_back(runs.front());
  CHECK(code_of([&] { interference_matrix(dup); }) == Errc::duplicate_cell);
  CHECK(code_of([&] { m.at(8, 16); }) == Errc::missing_cell);
}

TEST_CASE("scope_shift and serialization") {
  const auto s = scope_shift(4, 0.5, 0.373);
  CHECK(s.delta_pp == doctest::Approx(-12.7));
  const auto fit = fit_shot_curve(forward(2, 1, {1, 2, 4, 8, 16}));
  CHECK(fit_csv_header() == "base,k50,k50_lo,k50_hi,k90,phase_width,asymptote,rss");
  const auto row = fit_csv_row(8, fit, std::nullopt);
  CHECK(row.rfind("8,", 0) == 0);
  CHECK(std::count(row.begin(), row.end(), ',') == 7);
  CHECK(to_json(fit).find("\"k50\"") != std::string::npos);
  std::vector<InterferenceRun> runs{{8, 8, 0.9, 0.9}};
  CHECK(delta_csv(interference_matrix(runs)).find("trained") != std::string::npos);
}
