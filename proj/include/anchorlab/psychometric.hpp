#pragma once
// Accuracy-vs-shots curve fitting and the statistics built on it.
//
// Fitted form, over points with k >= 1:
//
//     acc(k) = floor + (asymptote - floor) * sigmoid(g ln k - a),   g > 0
//
// so a plays the role of (beta d_r - alpha rho_d) for one base and g the role
// of the log-shot coefficient. Thresholds follow in closed form:
// k50 = exp(a/g), k90 = exp((a + ln 9)/g), k10 = exp((a - ln 9)/g).

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace anchorlab::psy {

struct ShotPoint {
  int k = 0;
  double accuracy = 0.0;
  long n_items = 1;
};

struct ShotCurve {
  std::vector<ShotPoint> points;

  // k strictly increasing and >= 0, accuracies in [0, 1], n_items >= 1.
  void validate() const;
};

enum class AsymptoteMode { fixed, free };

struct FitOptions {
  double floor = 0.0;
  AsymptoteMode asymptote_mode = AsymptoteMode::fixed;
  double fixed_asymptote = 1.0;
  double tolerance = 1e-8;
  int max_iterations = 10000;
};

struct FitResult {
  double a = 0.0;
  double g = 0.0;
  double k50 = 0.0;
  double k90 = 0.0;
  double k10 = 0.0;
  double phase_width = 0.0;  // k90 - k10
  double asymptote = 1.0;
  double floor = 0.0;
  double rss = 0.0;            // n_items-weighted, weights normalised to mean 1
  bool extrapolated = false;   // k50 outside the sampled k >= 1 range
  int iterations = 0;
};

// Real k > 0; values below 1 extrapolate the fitted curve.
double fitted_accuracy(const FitResult& fit, double k);

// Grid search over (ln k50, g[, asymptote]) followed by Levenberg-Marquardt.
// InsufficientPoints with fewer than 4 points at k >= 1; DegenerateCurve when
// flat or when the best fit is not increasing; NonConvergence at the cap.
FitResult fit_shot_curve(const ShotCurve& curve, const FitOptions& options = {});

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct BootstrapResult {
  Interval k50;
  Interval k90;
  Interval phase_width;
  Interval asymptote;
  int resamples = 0;
  int failures = 0;
};

// Resamples item outcomes within each cell (binomial draw at the observed
// rate), refits, and reports percentile intervals at `level` coverage.
BootstrapResult bootstrap_intervals(const ShotCurve& curve, int resamples, std::uint64_t seed,
                                    const FitOptions& options = {}, double level = 0.68,
                                    unsigned parallelism = 1);

double cohens_d(std::span<const double> sample_a, std::span<const double> sample_b);

struct InterferenceRun {
  int trained_base = 0;
  int evaluated_base = 0;
  double acc_before = 0.0;
  double acc_after = 0.0;
};

struct DeltaMatrix {
  std::vector<int> trained_bases;
  std::vector<int> evaluated_bases;
  std::vector<std::vector<double>> delta;  // percentage points, [trained][evaluated]

  double at(int trained, int evaluated) const;
};

DeltaMatrix interference_matrix(std::span<const InterferenceRun> runs);

// Accuracy change on one operand-length slice, in percentage points.
struct ScopeShift {
  int operand_digits = 0;
  double acc_before = 0.0;
  double acc_after = 0.0;
  double delta_pp = 0.0;
};

ScopeShift scope_shift(int operand_digits, double acc_before, double acc_after);

std::string fit_csv_header();
std::string fit_csv_row(int base, const FitResult& fit, const std::optional<BootstrapResult>& boot);
std::string to_json(const FitResult& fit);
std::string to_json(const DeltaMatrix& matrix);
std::string delta_csv(const DeltaMatrix& matrix);

}  // namespace anchorlab::psy
