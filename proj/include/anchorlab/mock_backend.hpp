#pragma once
// Deterministic offline stand-in for a language model on the radix-addition
// task. Each base is a "domain" with a pattern density rho and a semantic
// distance d (cosine scale). Generation answers correctly with probability
//
//     sigmoid(alpha rho - beta d + gamma ln k)   for k >= 1 shots,
//     sigmoid(alpha rho - beta d)                 for k = 0,
//
// so accuracy rises with the number of demonstrations, and otherwise emits a
// decoy. Embeddings are built so that exemplars of one base form a cluster
// whose mean pairwise distance is about 1/rho, and a query of that base sits at
// cosine distance about d from the cluster.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "anchorlab/anchor_core.hpp"
#include "anchorlab/arith_data.hpp"
#include "anchorlab/backend.hpp"

namespace anchorlab::backend {

enum class DecoyMode { decimal_leak, random_digit };
std::string_view decoy_mode_name(DecoyMode mode);
DecoyMode parse_decoy_mode(std::string_view text);

struct MockDomain {
  double rho = 1.0;
  double d = 0.0;
  DecoyMode decoy = DecoyMode::decimal_leak;
};

struct MockRepositoryConfig {
  std::map<int, MockDomain> domains;  // keyed by base
  anchor::AnchorParams params;
  std::size_t embed_dim = 64;
  std::uint64_t seed = 0;

  // InvalidConfig: rho <= 0, d outside [0, 2], embed_dim < 4, bad params.
  void validate() const;
};

// Domains calibrated so the mock reproduces the published k50 values
// (0.28, 1.83, 2.91 for bases 10, 8, 9) with alpha = 1, beta = 8, gamma = 1
// and the published densities: d_B = (rho_B + ln k50_B) / 8.
MockRepositoryConfig calibrated_mock_config();

class MockBackend final : public Backend {
 public:
  explicit MockBackend(MockRepositoryConfig config);

  std::string generate(const GenerationRequest& request) override;
  anchor::EmbeddingVector embed(std::string_view text) override;
  Capabilities capabilities() const override;

  double correct_probability(int base, std::size_t k) const;
  // Decimal leak: the true sum written in base 10 ("55" for 54_8 + 13_8).
  // In base 10 that is the right answer, so a random wrong numeral is used.
  std::string decoy(const arith::BaseProblem& problem, std::uint64_t seed) const;

  const MockRepositoryConfig& config() const noexcept { return config_; }

 private:
  const MockDomain& domain(int base) const;
  std::vector<double> centre(int base) const;

  MockRepositoryConfig config_;
};

}  // namespace anchorlab::backend
