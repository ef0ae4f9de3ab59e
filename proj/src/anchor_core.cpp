#include "anchorlab/anchor_core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "anchorlab/error.hpp"

namespace anchorlab::anchor {
namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw Error(Errc::non_finite_input, std::string(what) + " is not finite");
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double euclidean(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double diff = a[i] - b[i];
    s += diff * diff;
  }
  return std::sqrt(s);
}

void require_same_dim(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim())
    throw Error(Errc::dimension_mismatch,
                "dims " + std::to_string(a.dim()) + " and " + std::to_string(b.dim()));
}

}  // namespace

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw Error(Errc::invalid_argument, "embedding must have dim >= 1");
  for (double v : values_) require_finite(v, "embedding component");
}

double EmbeddingVector::norm() const noexcept { return std::sqrt(dot(values_, values_)); }

void AnchorParams::validate() const {
  require_finite(alpha, "alpha");
  require_finite(beta, "beta");
  require_finite(gamma, "gamma");
  if (alpha < 0 || beta < 0 || gamma < 0)
    throw Error(Errc::invalid_argument, "anchor params must be non-negative");
}

double pattern_density(std::span<const EmbeddingVector> embeddings, const DensityOptions& options) {
  const std::size_t k = embeddings.size();
  if (k < 2) throw Error(Errc::fewer_than_two_vectors, "need at least two embeddings, got " + std::to_string(k));
  for (const auto& e : embeddings) require_same_dim(embeddings[0], e);

  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      if (options.metric == DistanceMetric::euclidean)
        total += euclidean(embeddings[i].values(), embeddings[j].values());
      else
        total += semantic_distance(embeddings[i], embeddings[j]);
    }
  }
  const double pairs = static_cast<double>(k) * static_cast<double>(k - 1) / 2.0;
  const double mean = total / pairs;
  if (!(mean >= options.degenerate_floor))
    throw Error(Errc::degenerate_cluster, "mean pairwise distance " + std::to_string(mean) +
                                              " below floor; anchors are identical");
  return 1.0 / mean;
}

double semantic_distance(const EmbeddingVector& pattern, const EmbeddingVector& target) {
  require_same_dim(pattern, target);
  const double np = pattern.norm();
  const double nt = target.norm();
  if (np < kZeroNorm || nt < kZeroNorm) throw Error(Errc::zero_norm_vector, "cosine of a zero vector");
  const double cosine = dot(pattern.values(), target.values()) / (np * nt);
  return std::clamp(1.0 - cosine, 0.0, 2.0);
}

double shot_log_term(double k) {
  require_finite(k, "shot count");
  if (k == 0.0) return 0.0;
  if (k < 1.0) throw Error(Errc::invalid_argument, "shot count must be 0 or >= 1");
  return std::log(k);
}

double anchoring_strength(const AnchorParams& params, double rho_d, double d_r, double k) {
  require_finite(rho_d, "rho_d");
  require_finite(d_r, "d_r");
  params.validate();
  if (rho_d <= 0) throw Error(Errc::non_positive_density, "rho_d must be > 0");
  if (d_r < 0) throw Error(Errc::invalid_argument, "d_r must be >= 0");
  return params.alpha * rho_d - params.beta * d_r - params.gamma * shot_log_term(k);
}

double success_probability(double strength) noexcept {
  if (strength >= 0) return 1.0 / (1.0 + std::exp(-strength));
  const double e = std::exp(strength);
  return e / (1.0 + e);
}

ThresholdSet critical_thresholds(double beta, double d_r, double rho, double rho_prime, double rho_ext) {
  for (double v : {beta, d_r, rho, rho_prime, rho_ext}) require_finite(v, "threshold input");
  if (rho <= 0 || rho_prime <= 0) throw Error(Errc::non_positive_density, "densities must be > 0");
  if (rho_ext < 0) throw Error(Errc::non_positive_density, "external density must be >= 0");
  if (d_r < 0) throw Error(Errc::invalid_argument, "d_r must be >= 0");
  const double mismatch = beta * d_r;
  return {mismatch / rho, mismatch / rho_prime, mismatch / (rho + rho_ext)};
}

EmbeddingVector centroid(std::span<const EmbeddingVector> embeddings) {
  if (embeddings.empty()) throw Error(Errc::invalid_argument, "centroid of no vectors");
  std::vector<double> sum(embeddings[0].dim(), 0.0);
  for (const auto& e : embeddings) {
    require_same_dim(embeddings[0], e);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += e[i];
  }
  const double inv = 1.0 / static_cast<double>(embeddings.size());
  for (double& v : sum) v *= inv;
  return EmbeddingVector(std::move(sum));
}

}  // namespace anchorlab::anchor
