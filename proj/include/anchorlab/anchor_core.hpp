#pragma once
// Pattern density, semantic distance, anchoring strength and the
// method-specific critical thresholds.
//
// Units: densities are inverse embedding distances, semantic distance is the
// cosine distance 1 - cos in [0, 2], logs are natural.
//
// Note on magnitudes: published semantic-distance figures for this benchmark
// sit around 12-15, which is outside the [0, 2] range of a cosine distance.
// This module implements the cosine definition; those figures cannot be
// reproduced with it and are kept only as reference annotations.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace anchorlab::backend {
class Backend;
struct Shot;
}  // namespace anchorlab::backend

namespace anchorlab::anchor {

class EmbeddingVector {
 public:
  // Throws InvalidArgument when empty, NonFiniteInput when any value is not finite.
  explicit EmbeddingVector(std::vector<double> values);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  double norm() const noexcept;

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::vector<double> values_;
};

struct AnchorParams {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;

  void validate() const;
};

struct AnchorEstimate {
  double rho_d = 0.0;
  double d_r = 0.0;
  std::size_t k = 0;
  double strength = 0.0;
};

struct ThresholdSet {
  double few_shot = 0.0;
  double fine_tune = 0.0;
  double rag = 0.0;
};

enum class DistanceMetric { euclidean, cosine };

struct DensityOptions {
  DistanceMetric metric = DistanceMetric::euclidean;
  // Mean pairwise distance below this is treated as a collapsed cluster.
  double degenerate_floor = 1e-12;
};

// Vectors with norm below this are rejected by cosine computations.
inline constexpr double kZeroNorm = 1e-12;

// Reciprocal of the mean pairwise distance over all C(k,2) pairs.
double pattern_density(std::span<const EmbeddingVector> embeddings,
                       const DensityOptions& options = {});

// 1 - cos(pattern, target), clamped to [0, 2].
double semantic_distance(const EmbeddingVector& pattern, const EmbeddingVector& target);

// ln k for k >= 1, 0 for k == 0 (instruction-only anchors carry no shot
// penalty). Real-valued k in (0, 1) is rejected.
double shot_log_term(double k);

// S = alpha*rho_d - beta*d_r - gamma*shot_log_term(k)
double anchoring_strength(const AnchorParams& params, double rho_d, double d_r, double k);

// Logistic link sigma(S), evaluated without overflow for large |S|.
double success_probability(double strength) noexcept;

ThresholdSet critical_thresholds(double beta, double d_r, double rho, double rho_prime,
                                 double rho_ext);

EmbeddingVector centroid(std::span<const EmbeddingVector> embeddings);

// Zero-shot response of the query gives the unconscious-pattern embedding;
// the anchors (each embedded as its equation+answer exemplar text) give the
// density and, through their centroid, the target embedding.
AnchorEstimate estimate_anchoring_strength(std::string_view query,
                                           std::span<const backend::Shot> anchors,
                                           backend::Backend& backend,
                                           const AnchorParams& params,
                                           const DensityOptions& options = {});

}  // namespace anchorlab::anchor
