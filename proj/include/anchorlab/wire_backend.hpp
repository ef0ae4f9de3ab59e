#pragma once
// Client for OpenAI-compatible chat-completions and embeddings endpoints.
//
// Note: a generic embeddings endpoint is not the final hidden state of the
// generating model, so densities and distances measured through it are a
// different representation from an in-model probe.

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>

#include "anchorlab/backend.hpp"
#include "anchorlab/rate_limiter.hpp"

namespace anchorlab::backend {

enum class ShotMode { chat_turns, concatenated };

struct WireConfig {
  std::string name = "wire";
  std::string base_url;  // scheme://host[:port]
  std::string chat_path = "/v1/chat/completions";
  std::string embeddings_path;  // empty: embeddings unsupported
  std::string model;
  std::string embedding_model;
  std::string api_key_env = "ANCHORLAB_API_KEY";
  std::optional<std::string> api_key;  // takes precedence over the env var
  ShotMode shot_mode = ShotMode::chat_turns;
  int max_retries = 3;
  double backoff_initial_ms = 500.0;
  double backoff_factor = 2.0;
  double timeout_s = 60.0;
  double rate_limit_per_min = 0.0;
  std::size_t max_context = 8192;

  void validate() const;
};

ShotMode parse_shot_mode(std::string_view text);

class WireBackend final : public Backend {
 public:
  explicit WireBackend(WireConfig config);

  std::string generate(const GenerationRequest& request) override;
  anchor::EmbeddingVector embed(std::string_view text) override;
  Capabilities capabilities() const override;

  // Request body for a generation call, exposed for inspection in tests.
  std::string chat_body(const GenerationRequest& request) const;
  // Attempts made by this instance, including retries.
  std::uint64_t attempts() const noexcept;

 private:
  std::string post_with_retry(const std::string& path, const std::string& body);

  WireConfig config_;
  std::string api_key_;
  RateLimiter limiter_;
  std::atomic<std::uint64_t> attempts_{0};
};

}  // namespace anchorlab::backend
