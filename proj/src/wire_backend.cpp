#include "anchorlab/wire_backend.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "anchorlab/error.hpp"

namespace anchorlab::backend {
namespace {

using nlohmann::json;

struct Retryable {
  Errc code;
  std::string what;
};

}  // namespace

void WireConfig::validate() const {
  if (base_url.empty()) throw Error(Errc::invalid_config, "wire.base_url is required");
  if (model.empty()) throw Error(Errc::invalid_config, "wire.model is required");
  if (max_retries < 0) throw Error(Errc::invalid_config, "wire.max_retries must be >= 0");
  if (!(backoff_initial_ms >= 0) || !(backoff_factor >= 1))
    throw Error(Errc::invalid_config, "wire backoff must be >= 0 ms with factor >= 1");
  if (!(timeout_s > 0)) throw Error(Errc::invalid_config, "wire.timeout_s must be > 0");
}

ShotMode parse_shot_mode(std::string_view text) {
  if (text == "chat") return ShotMode::chat_turns;
  if (text == "concat") return ShotMode::concatenated;
  throw Error(Errc::invalid_config, "shot mode must be 'chat' or 'concat'");
}

WireBackend::WireBackend(WireConfig config) : config_(std::move(config)), limiter_(config_.rate_limit_per_min) {
  config_.validate();
  if (config_.api_key) {
    api_key_ = *config_.api_key;
  } else if (const char* env = std::getenv(config_.api_key_env.c_str())) {
    api_key_ = env;
  }
}

std::uint64_t WireBackend::attempts() const noexcept { return attempts_.load(); }

std::string WireBackend::chat_body(const GenerationRequest& request) const {
  json messages = json::array();
  if (!request.system_context.empty()) messages.push_back({{"role", "system"}, {"content", request.system_context}});
  if (config_.shot_mode == ShotMode::chat_turns) {
    for (const auto& shot : request.shots) {
      messages.push_back({{"role", "user"}, {"content", shot.input}});
      messages.push_back({{"role", "assistant"}, {"content", shot.output}});
    }
    messages.push_back({{"role", "user"}, {"content", request.query}});
  } else {
    std::string prompt;
    for (const auto& shot : request.shots) prompt += exemplar_text(shot) + "\n";
    messages.push_back({{"role", "user"}, {"content", prompt + request.query}});
  }
  nlohmann::ordered_json body;
  body["model"] = config_.model;
  body["messages"] = messages;
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;
  if (request.seed) body["seed"] = *request.seed;
  return body.dump();
}

std::string WireBackend::post_with_retry(const std::string& path, const std::string& body) {
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  Retryable last{Errc::transport, "no attempt made"};
  double backoff_ms = config_.backoff_initial_ms;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(backoff_ms));
      backoff_ms *= config_.backoff_factor;
    }
    limiter_.acquire();
    ++attempts_;

    // One client per call keeps concurrent requests independent.
    httplib::Client client(config_.base_url);
    const auto secs = static_cast<time_t>(config_.timeout_s);
    const auto usecs = static_cast<time_t>((config_.timeout_s - std::floor(config_.timeout_s)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last = {Errc::transport, httplib::to_string(res.error())};
      continue;
    }
    if (res->status == 429) {
      last = {Errc::rate_limited, "HTTP 429"};
      continue;
    }
    if (res->status >= 500) {
      last = {Errc::transport, "HTTP " + std::to_string(res->status)};
      continue;
    }
    if (res->status < 200 || res->status >= 300)
      throw Error(Errc::backend_failure, "HTTP " + std::to_string(res->status) + " from " + path);
    return res->body;
  }
  throw Error(Errc::backend_exhausted, std::to_string(config_.max_retries + 1) + " attempts failed; last: " +
                                           std::string(errc_name(last.code)) + " (" + last.what + ")");
}

std::string WireBackend::generate(const GenerationRequest& request) {
  request.validate();
  const std::string raw = post_with_retry(config_.chat_path, chat_body(request));
  try {
    const auto reply = json::parse(raw);
    const auto& choice = reply.at("choices").at(0);
    if (choice.contains("message")) return choice.at("message").at("content").get<std::string>();
    return choice.at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(Errc::malformed_response, e.what());
  }
}

anchor::EmbeddingVector WireBackend::embed(std::string_view text) {
  if (text.empty()) throw Error(Errc::invalid_argument, "cannot embed empty text");
  if (config_.embeddings_path.empty()) throw Error(Errc::backend_failure, "no embeddings endpoint configured");
  nlohmann::ordered_json body;
  body["model"] = config_.embedding_model.empty() ? config_.model : config_.embedding_model;
  body["input"] = std::string(text);
  const std::string raw = post_with_retry(config_.embeddings_path, body.dump());
  std::vector<double> values;
  try {
    values = json::parse(raw).at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(Errc::malformed_response, e.what());
  }
  try {
    return anchor::EmbeddingVector(std::move(values));
  } catch (const Error& e) {
    throw Error(Errc::malformed_response, e.what());
  }
}

Capabilities WireBackend::capabilities() const {
  return {!config_.embeddings_path.empty(), config_.max_context, config_.name};
}

}  // namespace anchorlab::backend
