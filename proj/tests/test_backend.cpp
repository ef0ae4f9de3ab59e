#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"

#include "anchorlab/anchor_core.hpp"
#include "anchorlab/arith_data.hpp"
#include "anchorlab/common.hpp"
#include "anchorlab/error.hpp"
#include "anchorlab/mock_backend.hpp"
#include "anchorlab/rate_limiter.hpp"
#include "anchorlab/wire_backend.hpp"

using namespace anchorlab;
using namespace anchorlab::backend;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an anchorlab::Error");
  return Errc::invalid_argument;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

GenerationRequest request_for(const arith::BaseProblem& p, std::size_t k, std::uint64_t seed) {
  GenerationRequest r;
  r.query = p.prompt;
  for (std::size_t i = 0; i < k; ++i) r.shots.push_back({"[base=8] 1_8 + 1_8 = ?", "2_8"});
  r.seed = seed;
  return r;
}

MockRepositoryConfig example_config() {
  MockRepositoryConfig c;
  c.domains[10] = {12.69, 0.9, DecoyMode::decimal_leak};
  c.domains[8] = {9.67, 1.2, DecoyMode::decimal_leak};
  c.params = {1, 1, 1};
  return c;
}

// Local chat/embeddings endpoint whose behaviour each test scripts.
struct FakeServer {
  httplib::Server server;
  int port = 0;
  std::thread thread;
  std::mutex mu;
  std::vector<std::string> bodies;
  std::vector<std::string> auth_headers;
  std::atomic<int> fail_first{0};  // respond with fail_status this many times
  std::atomic<int> fail_status{500};
  std::atomic<int> hits{0};
  std::string reply = R"({"choices":[{"message":{"role":"assistant","content":"67_8"}}]})";

  FakeServer() {
    auto handler = [this](const httplib::Request& req, httplib::Response& res, const std::string& ok_body) {
      ++hits;
      {
        std::lock_guard lock(mu);
        bodies.push_back(req.body);
        auth_headers.push_back(req.get_header_value("Authorization"));
      }
      if (fail_first > 0) {
        --fail_first;
        res.status = fail_status;
        res.set_content("{}", "application/json");
        return;
      }
      res.set_content(ok_body, "application/json");
    };
    server.Post("/v1/chat/completions", [this, handler](const auto& req, auto& res) {
      std::string body;
      {
        std::lock_guard lock(mu);
        body = reply;
      }
      handler(req, res, body);
    });
    server.Post("/v1/embeddings", [handler](const auto& req, auto& res) {
      handler(req, res, R"({"data":[{"embedding":[0.5,-1.0,2.0]}]})");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~FakeServer() {
    server.stop();
    thread.join();
  }

  WireConfig config() const {
    WireConfig c;
    c.name = "fake";
    c.base_url = "http://127.0.0.1:" + std::to_string(port);
    c.model = "test-model";
    c.api_key = "secret-token";
    c.backoff_initial_ms = 1;
    c.timeout_s = 5;
    return c;
  }
};

}  // namespace

TEST_CASE("mock: high-density base answers almost always correctly") {
  MockBackend mock(example_config());
  const auto p = arith::make_problem(10, "23", "45");
  const double expected = sigmoid(12.69 - 0.9 + std::log(4.0));
  CHECK(mock.correct_probability(10, 4) == doctest::Approx(expected));
  CHECK(expected > 0.99);
  int correct = 0;
  for (std::uint64_t s = 0; s < 1000; ++s)
    if (arith::grade(mock.generate(request_for(p, 4, s)), p.answer, 10)) ++correct;
  CHECK(correct >= 990);
}

TEST_CASE("mock: determinism and decoys") {
  MockBackend mock(example_config());
  const auto p = arith::make_problem(8, "54", "13");
  for (std::uint64_t s = 0; s < 50; ++s) CHECK(mock.generate(request_for(p, 2, s)) == mock.generate(request_for(p, 2, s)));
  CHECK(mock.decoy(p, 1) == "55");
  CHECK_FALSE(arith::grade(mock.decoy(p, 1), p.answer, 8));

  auto cfg = example_config();
  cfg.domains[8].decoy = DecoyMode::random_digit;
  MockBackend random_mock(cfg);
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto d = random_mock.decoy(p, s);
    CHECK(d.size() == 4);  // two digits plus "_8"
    CHECK(d.substr(2) == "_8");
    CHECK_FALSE(arith::grade(d, p.answer, 8));
  }
  // base 10 cannot leak decimals, so the decoy is a wrong numeral
  const auto q = arith::make_problem(10, "23", "45");
  CHECK_FALSE(arith::grade(mock.decoy(q, 3), q.answer, 10));

  GenerationRequest junk;
  junk.query = "what is love";
  CHECK(code_of([&] { mock.generate(junk); }) == Errc::unparseable_query);
  GenerationRequest empty;
  CHECK(code_of([&] { mock.generate(empty); }) == Errc::invalid_argument);
  CHECK(code_of([&] { mock.generate(request_for(arith::make_problem(9, "10", "11"), 1, 0)); }) ==
        Errc::invalid_config);
}

TEST_CASE("mock: accuracy rises with k and matches the closed form") {
  auto cfg = backend::calibrated_mock_config();
  MockBackend mock(cfg);
  const auto bundle = arith::synthesize_bundle(9, 3);
  const auto& dom = cfg.domains.at(9);
  const int trials = 2000;
  double prev = -1;
  for (std::size_t k : {1, 2, 4, 8, 16}) {
    int correct = 0;
    for (int t = 0; t < trials; ++t) {
      const auto& p = bundle.id_2d[static_cast<std::size_t>(t) % bundle.id_2d.size()];
      if (arith::grade(mock.generate(request_for(p, k, static_cast<std::uint64_t>(t))), p.answer, 9)) ++correct;
    }
    const double acc = double(correct) / trials;
    const double truth = sigmoid(dom.rho - 8 * dom.d + std::log(double(k)));
    const double se = std::sqrt(truth * (1 - truth) / trials);
    CHECK(std::abs(acc - truth) <= 3 * se);
    CHECK(acc >= prev);
    prev = acc;
  }
}

TEST_CASE("mock: embeddings") {
  MockBackend mock(backend::calibrated_mock_config());
  const auto a = mock.embed("[base=8] 54_8 + 13_8 = 67_8");
  CHECK(a == mock.embed("[base=8] 54_8 + 13_8 = 67_8"));
  CHECK(a.dim() == 64);
  CHECK(a.norm() == doctest::Approx(1.0));
  CHECK(code_of([&] { mock.embed(""); }) == Errc::invalid_argument);
  CHECK(mock.embed("untagged text").dim() == 64);

  for (int base : {10, 8, 9}) {
    const auto bundle = arith::synthesize_bundle(base, 11);
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<anchor::EmbeddingVector> es;
      for (int i = 0; i < 8; ++i) es.push_back(mock.embed(arith::render_exemplar(bundle.train_2d[static_cast<std::size_t>(trial * 8 + i)])));
      const double rho = anchor::pattern_density(es);
      CHECK(std::abs(rho / mock.config().domains.at(base).rho - 1.0) < 0.10);
    }
    // A query sits at the configured cosine distance from the cluster centre.
    std::vector<anchor::EmbeddingVector> many;
    for (int i = 0; i < 200; ++i) many.push_back(mock.embed(arith::render_exemplar(bundle.train_2d[static_cast<std::size_t>(i)])));
    const auto q = mock.embed(bundle.id_2d[0].prompt);
    const double d = anchor::semantic_distance(q, anchor::centroid(many));
    CHECK(d == doctest::Approx(mock.config().domains.at(base).d).epsilon(0.05));
  }
}

TEST_CASE("mock: capabilities and config validation") {
  MockBackend mock(example_config());
  const auto caps = mock.capabilities();
  CHECK(caps.supports_embeddings);
  CHECK(caps.name == "mock");
  auto bad = example_config();
  bad.embed_dim = 3;
  CHECK(code_of([&] { MockBackend m(bad); }) == Errc::invalid_config);
  bad = example_config();
  bad.domains[8].rho = 0;
  CHECK(code_of([&] { MockBackend m(bad); }) == Errc::invalid_config);
  CHECK(parse_decoy_mode("random-digit") == DecoyMode::random_digit);
  CHECK(decoy_mode_name(DecoyMode::decimal_leak) == "decimal-leak");
  CHECK(code_of([] { parse_decoy_mode("other"); }) == Errc::invalid_config);
}

TEST_CASE("wire: chat body shapes") {
  WireConfig c;
  c.base_url = "http://127.0.0.1:1";
  c.model = "m";
  GenerationRequest r;
  r.system_context = "sys";
  r.shots = {{"[base=8] 1_8 + 1_8 = ?", "2_8"}};
  r.query = "[base=8] 54_8 + 13_8 = ?";
  r.seed = 4;
  const auto chat = nlohmann::json::parse(WireBackend(c).chat_body(r));
  CHECK(chat["model"] == "m");
  REQUIRE(chat["messages"].size() == 4);
  CHECK(chat["messages"][0]["role"] == "system");
  CHECK(chat["messages"][1]["role"] == "user");
  CHECK(chat["messages"][2]["role"] == "assistant");
  CHECK(chat["messages"][2]["content"] == "2_8");
  CHECK(chat["messages"][3]["content"] == r.query);
  CHECK(chat["temperature"] == 0.0);
  CHECK(chat["max_tokens"] == 32);
  CHECK(chat["seed"] == 4);

  c.shot_mode = ShotMode::concatenated;
  const auto flat = nlohmann::json::parse(WireBackend(c).chat_body(r));
  REQUIRE(flat["messages"].size() == 2);
  CHECK(flat["messages"][1]["content"] == "[base=8] 1_8 + 1_8 = 2_8\n[base=8] 54_8 + 13_8 = ?");
  CHECK(parse_shot_mode("concat") == ShotMode::concatenated);
  CHECK(code_of([] { parse_shot_mode("x"); }) == Errc::invalid_config);

  WireConfig missing;
  CHECK(code_of([&] { WireBackend w(missing); }) == Errc::invalid_config);
}

TEST_CASE("wire: round trip, retries and failures") {
  FakeServer fake;
  GenerationRequest r;
  r.query = "[base=8] 54_8 + 13_8 = ?";

  SUBCASE("success with bearer credential") {
    WireBackend w(fake.config());
    CHECK(w.generate(r) == "67_8");
    CHECK(w.attempts() == 1);
    CHECK(fake.auth_headers.back() == "Bearer secret-token");
    CHECK(nlohmann::json::parse(fake.bodies.back())["messages"].back()["content"] == r.query);
  }
  SUBCASE("completion-style text field") {
    fake.reply = R"({"choices":[{"text":"12"}]})";
    WireBackend w(fake.config());
    CHECK(w.generate(r) == "12");
  }
  SUBCASE("retries on 500 then succeeds") {
    fake.fail_first = 2;
    fake.fail_status = 500;
    WireBackend w(fake.config());
    CHECK(w.generate(r) == "67_8");
    CHECK(w.attempts() == 3);
  }
  SUBCASE("retries on 429") {
    fake.fail_first = 1;
    fake.fail_status = 429;
    WireBackend w(fake.config());
    CHECK(w.generate(r) == "67_8");
    CHECK(w.attempts() == 2);
  }
  SUBCASE("exhaustion after max_retries") {
    fake.fail_first = 100;
    auto c = fake.config();
    c.max_retries = 2;
    WireBackend w(c);
    CHECK(code_of([&] { w.generate(r); }) == Errc::backend_exhausted);
    CHECK(w.attempts() == 3);
    CHECK(fake.hits == 3);
  }
  SUBCASE("client errors are not retried") {
    fake.fail_first = 1;
    fake.fail_status = 401;
    WireBackend w(fake.config());
    CHECK(code_of([&] { w.generate(r); }) == Errc::backend_failure);
    CHECK(w.attempts() == 1);
  }
  SUBCASE("malformed reply") {
    fake.reply = R"({"nothing":true})";
    WireBackend w(fake.config());
    CHECK(code_of([&] { w.generate(r); }) == Errc::malformed_response);
    fake.reply = "not json";
    CHECK(code_of([&] { w.generate(r); }) == Errc::malformed_response);
  }
  SUBCASE("embeddings") {
    auto c = fake.config();
    WireBackend plain(c);
    CHECK_FALSE(plain.capabilities().supports_embeddings);
    CHECK(plain.capabilities().name == "fake");
    CHECK(code_of([&] { plain.embed("x"); }) == Errc::backend_failure);
    c.embeddings_path = "/v1/embeddings";
    c.embedding_model = "emb";
    WireBackend w(c);
    CHECK(w.capabilities().supports_embeddings);
    const auto e = w.embed("hello");
    CHECK(e == anchor::EmbeddingVector({0.5, -1.0, 2.0}));
    const auto body = nlohmann::json::parse(fake.bodies.back());
    CHECK(body["model"] == "emb");
    CHECK(body["input"] == "hello");
  }
  SUBCASE("unreachable endpoint exhausts") {
    auto c = fake.config();
    c.base_url = "http://127.0.0.1:1";
    c.max_retries = 1;
    WireBackend w(c);
    CHECK(code_of([&] { w.generate(r); }) == Errc::backend_exhausted);
  }
  SUBCASE("concurrent callers") {
    WireBackend w(fake.config());
    std::atomic<int> ok{0};
    std::vector<std::jthread> pool;
    for (int i = 0; i < 4; ++i)
      pool.emplace_back([&] {
        for (int j = 0; j < 5; ++j)
          if (w.generate(r) == "67_8") ++ok;
      });
    pool.clear();
    CHECK(ok == 20);
  }
}

TEST_CASE("rate limiter spaces admissions") {
  RateLimiter unlimited(0);
  for (int i = 0; i < 1000; ++i) unlimited.acquire();

  RateLimiter limiter(1200);  // 20 per second, burst 1
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 6; ++i) limiter.acquire();
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(elapsed >= 0.24);
  CHECK(elapsed < 2.0);
  CHECK(code_of([] { RateLimiter r(10, 0.5); }) == Errc::invalid_config);
}
