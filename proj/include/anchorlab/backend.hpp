#pragma once
// Model access: text generation and text embedding behind one interface.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "anchorlab/anchor_core.hpp"

namespace anchorlab::backend {

// One demonstration: the input as posed and the answer it should produce.
struct Shot {
  std::string input;
  std::string output;
};

// "equation = ?" + answer  ->  "equation = answer"; any other input gets the
// answer appended after a space.
std::string exemplar_text(const Shot& shot);

struct GenerationRequest {
  std::string system_context;
  std::vector<Shot> shots;
  std::string query;
  int max_tokens = 32;
  double temperature = 0.0;
  std::optional<std::uint64_t> seed;

  void validate() const;
};

struct Capabilities {
  bool supports_embeddings = false;
  std::size_t max_context = 0;
  std::string name;
};

// Implementations must be safe to call from several threads at once.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::string generate(const GenerationRequest& request) = 0;
  virtual anchor::EmbeddingVector embed(std::string_view text) = 0;
  virtual Capabilities capabilities() const = 0;
};

}  // namespace anchorlab::backend
