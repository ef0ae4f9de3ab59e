#pragma once
// Information measures over finite distributions (natural log, nats) and the
// per-round diagnostics of a paired-agent debate.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace anchorlab::info {

struct Dist {
  std::vector<double> probs;
  std::optional<std::vector<double>> support_positions;

  Dist() = default;
  explicit Dist(std::vector<double> p, std::optional<std::vector<double>> support = std::nullopt)
      : probs(std::move(p)), support_positions(std::move(support)) {}

  std::size_t dim() const noexcept { return probs.size(); }
  // InvalidDistribution unless non-negative, summing to 1 within 1e-9, with
  // strictly increasing support of matching length when present.
  void validate() const;
};

struct JointDist {
  std::vector<std::vector<double>> table;

  void validate() const;
  Dist row_marginal() const;
  Dist col_marginal() const;
};

double entropy(const Dist& p);
double kl(const Dist& p, const Dist& q);  // +inf when p puts mass where q has none
double jsd(const Dist& p, const Dist& q);
double wasserstein_1d(const Dist& p, const Dist& q);
double mutual_information(const JointDist& j);

Dist mixture(const Dist& p, const Dist& q);

// Coupling of two marginals that puts as much mass on the diagonal as they
// allow: diag(min(p, q)) plus the product of the normalised residuals.
JointDist maximal_coupling(const Dist& p, const Dist& q);

struct DebateRoundRecord {
  int round = 0;
  Dist p_plus;
  Dist p_minus;
  double kappa = 0.0;
  std::optional<double> crit_avg;
  std::optional<JointDist> joint;  // defaults to maximal_coupling(p_plus, p_minus)
};

enum class Phase { exploration, transition, convergence };
std::string_view phase_name(Phase phase);

struct PhaseThresholds {
  double exploration = 0.8;  // kappa >= this
  double transition = 0.6;   // kappa >= this (and below exploration)
};

Phase classify_phase(const DebateRoundRecord& record, const PhaseThresholds& thresholds = {});

struct RoundReport {
  int round = 0;
  double kappa = 0.0;
  double jsd = 0.0;
  double w1 = 0.0;
  double mi = 0.0;
  double h_plus = 0.0;
  double h_minus = 0.0;
  double exploration_quality = 0.0;
  std::optional<double> convergence_rate;   // absent at the first round
  std::optional<double> anchoring_success;  // MI * crit / (JSD + eps), when requested
  Phase phase = Phase::exploration;
};

// MissingCrit when anchoring success is requested and a round lacks crit_avg.
std::vector<RoundReport> debate_diagnostics(std::span<const DebateRoundRecord> history, double epsilon,
                                            bool with_anchoring_success = true,
                                            const PhaseThresholds& thresholds = {});

struct SynthesisQuality {
  double coverage = 0.0;
  double balance = 0.0;
  double convergence = 0.0;
};

// convergence = MI of `joint` when given, else of maximal_coupling(p_arb, mixture(p+, p-)).
SynthesisQuality synthesis_quality(const Dist& p_arb, const Dist& p_plus, const Dist& p_minus,
                                   const std::optional<JointDist>& joint = std::nullopt);

std::string to_json(const RoundReport& report);

}  // namespace anchorlab::info
