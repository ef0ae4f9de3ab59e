#include <string>
#include <vector>

#include "anchorlab/anchor_core.hpp"
#include "anchorlab/backend.hpp"
#include "anchorlab/error.hpp"

namespace anchorlab::anchor {

AnchorEstimate estimate_anchoring_strength(std::string_view query,
                                           std::span<const backend::Shot> anchors,
                                           backend::Backend& backend,
                                           const AnchorParams& params,
                                           const DensityOptions& options) {
  params.validate();
  if (anchors.empty()) throw Error(Errc::invalid_argument, "at least one anchor is required");
  if (anchors.size() < 2)
    throw Error(Errc::degenerate_cluster, "a single anchor has no pairwise distance");

  backend::GenerationRequest zero_shot;
  zero_shot.query = std::string(query);
  std::string response;
  try {
    response = backend.generate(zero_shot);
  } catch (const Error& e) {
    throw Error(Errc::backend_failure, std::string("zero-shot generation failed: ") + e.what());
  }

  auto embed = [&](std::string_view text) {
    try {
      return backend.embed(text);
    } catch (const Error& e) {
      throw Error(Errc::backend_failure, std::string("embedding failed: ") + e.what());
    }
  };

  const EmbeddingVector pattern = embed(response);

  std::vector<EmbeddingVector> anchor_vectors;
  anchor_vectors.reserve(anchors.size());
  for (const auto& shot : anchors) anchor_vectors.push_back(embed(backend::exemplar_text(shot)));

  AnchorEstimate est;
  est.k = anchors.size();
  est.rho_d = pattern_density(anchor_vectors, options);
  est.d_r = semantic_distance(pattern, centroid(anchor_vectors));
  est.strength = anchoring_strength(params, est.rho_d, est.d_r, static_cast<double>(est.k));
  return est;
}

}  // namespace anchorlab::anchor
