#include "anchorlab/infometrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

#include "anchorlab/error.hpp"

namespace anchorlab::info {
namespace {

constexpr double kSumTolerance = 1e-9;

void check_probs(std::span<const double> probs, const char* what) {
  if (probs.empty()) throw Error(Errc::invalid_distribution, std::string(what) + " is empty");
  double sum = 0;
  for (double v : probs) {
    if (!std::isfinite(v) || v < 0) throw Error(Errc::invalid_distribution, std::string(what) + " has a negative or non-finite entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSumTolerance)
    throw Error(Errc::invalid_distribution, std::string(what) + " sums to " + std::to_string(sum));
}

void same_dim(const Dist& p, const Dist& q) {
  if (p.dim() != q.dim())
    throw Error(Errc::dimension_mismatch, std::to_string(p.dim()) + " vs " + std::to_string(q.dim()));
}

double xlogx_ratio(double x, double y) { return x > 0 ? x * std::log(x / y) : 0.0; }

std::vector<double> positions_or_index(const Dist& p) {
  if (p.support_positions) return *p.support_positions;
  std::vector<double> idx(p.dim());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<double>(i);
  return idx;
}

}  // namespace

void Dist::validate() const {
  check_probs(probs, "distribution");
  if (support_positions) {
    if (support_positions->size() != probs.size())
      throw Error(Errc::invalid_distribution, "support length differs from probability length");
    for (std::size_t i = 0; i < support_positions->size(); ++i) {
      if (!std::isfinite((*support_positions)[i])) throw Error(Errc::invalid_distribution, "non-finite support position");
      if (i > 0 && !((*support_positions)[i] > (*support_positions)[i - 1]))
        throw Error(Errc::invalid_distribution, "support positions must be strictly increasing");
    }
  }
}

void JointDist::validate() const {
  if (table.empty() || table.front().empty()) throw Error(Errc::invalid_distribution, "joint table is empty");
  std::vector<double> flat;
  for (const auto& row : table) {
    if (row.size() != table.front().size()) throw Error(Errc::invalid_distribution, "ragged joint table");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  check_probs(flat, "joint table");
}

Dist JointDist::row_marginal() const {
  std::vector<double> r;
  for (const auto& row : table) {
    double s = 0;
    for (double v : row) s += v;
    r.push_back(s);
  }
  return Dist(std::move(r));
}

Dist JointDist::col_marginal() const {
  std::vector<double> c(table.empty() ? 0 : table.front().size(), 0.0);
  for (const auto& row : table)
    for (std::size_t j = 0; j < row.size(); ++j) c[j] += row[j];
  return Dist(std::move(c));
}

double entropy(const Dist& p) {
  p.validate();
  double h = 0;
  for (double v : p.probs)
    if (v > 0) h -= v * std::log(v);
  return std::max(0.0, h);
}

double kl(const Dist& p, const Dist& q) {
  p.validate();
  q.validate();
  same_dim(p, q);
  double d = 0;
  for (std::size_t i = 0; i < p.dim(); ++i) {
    if (p.probs[i] == 0) continue;
    if (q.probs[i] == 0) return std::numeric_limits<double>::infinity();
    d += p.probs[i] * std::log(p.probs[i] / q.probs[i]);
  }
  return std::max(0.0, d);
}

Dist mixture(const Dist& p, const Dist& q) {
  same_dim(p, q);
  std::vector<double> m(p.dim());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = 0.5 * (p.probs[i] + q.probs[i]);
  return Dist(std::move(m), p.support_positions);
}

double jsd(const Dist& p, const Dist& q) {
  p.validate();
  q.validate();
  same_dim(p, q);
  // Summed per element as a commutative pair so that jsd(p,q) == jsd(q,p) bit for bit.
  double total = 0;
  for (std::size_t i = 0; i < p.dim(); ++i) {
    const double m = 0.5 * (p.probs[i] + q.probs[i]);
    total += 0.5 * (xlogx_ratio(p.probs[i], m) + xlogx_ratio(q.probs[i], m));
  }
  return std::clamp(total, 0.0, std::log(2.0));
}

double wasserstein_1d(const Dist& p, const Dist& q) {
  p.validate();
  q.validate();
  same_dim(p, q);
  if (p.support_positions.has_value() != q.support_positions.has_value())
    throw Error(Errc::missing_support, "only one distribution carries support positions");
  const auto xp = positions_or_index(p);
  const auto xq = positions_or_index(q);

  std::vector<double> xs(xp);
  xs.insert(xs.end(), xq.begin(), xq.end());
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

  double w = 0, fp = 0, fq = 0;
  std::size_t ip = 0, iq = 0;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    while (ip < xp.size() && xp[ip] <= xs[i]) fp += p.probs[ip++];
    while (iq < xq.size() && xq[iq] <= xs[i]) fq += q.probs[iq++];
    w += std::abs(fp - fq) * (xs[i + 1] - xs[i]);
  }
  return w;
}

double mutual_information(const JointDist& j) {
  j.validate();
  const Dist r = j.row_marginal();
  const Dist c = j.col_marginal();
  double mi = 0;
  for (std::size_t a = 0; a < j.table.size(); ++a)
    for (std::size_t b = 0; b < j.table[a].size(); ++b) {
      const double v = j.table[a][b];
      if (v > 0) mi += v * std::log(v / (r.probs[a] * c.probs[b]));
    }
  return std::max(0.0, mi);
}

JointDist maximal_coupling(const Dist& p, const Dist& q) {
  p.validate();
  q.validate();
  same_dim(p, q);
  const std::size_t n = p.dim();
  std::vector<double> overlap(n), rp(n), rq(n);
  double shared = 0;
  for (std::size_t i = 0; i < n; ++i) {
    overlap[i] = std::min(p.probs[i], q.probs[i]);
    rp[i] = p.probs[i] - overlap[i];
    rq[i] = q.probs[i] - overlap[i];
    shared += overlap[i];
  }
  JointDist j;
  j.table.assign(n, std::vector<double>(n, 0.0));
  const double rest = 1.0 - shared;
  for (std::size_t a = 0; a < n; ++a) {
    j.table[a][a] = overlap[a];
    if (rest > 1e-15)
      for (std::size_t b = 0; b < n; ++b) j.table[a][b] += rp[a] * rq[b] / rest;
  }
  return j;
}

std::string_view phase_name(Phase phase) {
  switch (phase) {
    case Phase::exploration: return "exploration";
    case Phase::transition: return "transition";
    case Phase::convergence: return "convergence";
  }
  return "unknown";
}

Phase classify_phase(const DebateRoundRecord& record, const PhaseThresholds& thresholds) {
  if (record.kappa >= thresholds.exploration) return Phase::exploration;
  if (record.kappa >= thresholds.transition) return Phase::transition;
  return Phase::convergence;
}

std::vector<RoundReport> debate_diagnostics(std::span<const DebateRoundRecord> history, double epsilon,
                                            bool with_anchoring_success, const PhaseThresholds& thresholds) {
  if (history.empty()) throw Error(Errc::invalid_argument, "empty debate history");
  if (!(epsilon > 0)) throw Error(Errc::invalid_argument, "epsilon must be > 0");

  std::vector<RoundReport> out;
  for (std::size_t t = 0; t < history.size(); ++t) {
    const auto& rec = history[t];
    if (!(rec.kappa >= 0 && rec.kappa <= 1)) throw Error(Errc::invalid_argument, "kappa outside [0, 1]");
    same_dim(rec.p_plus, rec.p_minus);
    RoundReport r;
    r.round = rec.round;
    r.kappa = rec.kappa;
    r.jsd = jsd(rec.p_plus, rec.p_minus);
    r.w1 = wasserstein_1d(rec.p_plus, rec.p_minus);
    r.mi = mutual_information(rec.joint ? *rec.joint : maximal_coupling(rec.p_plus, rec.p_minus));
    r.h_plus = entropy(rec.p_plus);
    r.h_minus = entropy(rec.p_minus);
    r.exploration_quality = r.h_plus + r.h_minus - 2.0 * entropy(mixture(rec.p_plus, rec.p_minus));
    if (t > 0) r.convergence_rate = -(r.w1 - out.back().w1);
    if (with_anchoring_success) {
      if (!rec.crit_avg) throw Error(Errc::missing_crit, "round " + std::to_string(rec.round) + " has no CRIT score");
      r.anchoring_success = r.mi * *rec.crit_avg / (r.jsd + epsilon);
    }
    r.phase = classify_phase(rec, thresholds);
    out.push_back(r);
  }
  return out;
}

SynthesisQuality synthesis_quality(const Dist& p_arb, const Dist& p_plus, const Dist& p_minus,
                                   const std::optional<JointDist>& joint) {
  same_dim(p_arb, p_plus);
  same_dim(p_arb, p_minus);
  SynthesisQuality s;
  s.coverage = entropy(p_arb);
  s.balance = 1.0 - std::abs(jsd(p_arb, p_plus) - jsd(p_arb, p_minus));
  s.convergence = mutual_information(joint ? *joint : maximal_coupling(p_arb, mixture(p_plus, p_minus)));
  return s;
}

std::string to_json(const RoundReport& r) {
  nlohmann::ordered_json j;
  j["round"] = r.round;
  j["kappa"] = r.kappa;
  j["jsd"] = r.jsd;
  j["w1"] = r.w1;
  j["mi"] = r.mi;
  j["h_plus"] = r.h_plus;
  j["h_minus"] = r.h_minus;
  j["exploration_quality"] = r.exploration_quality;
  j["convergence_rate"] = r.convergence_rate ? nlohmann::ordered_json(*r.convergence_rate) : nullptr;
  j["anchoring_success"] = r.anchoring_success ? nlohmann::ordered_json(*r.anchoring_success) : nullptr;
  j["phase"] = phase_name(r.phase);
  return j.dump();
}

}  // namespace anchorlab::info
