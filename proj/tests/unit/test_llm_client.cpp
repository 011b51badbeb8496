#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>

#include "neurodx/error.hpp"
#include "neurodx/llm_client.hpp"

using namespace neurodx;
using namespace std::chrono_literals;

namespace {

ClientConfig config_for(const MockServer& m) {
  ClientConfig c;
  c.endpoint = m.url();
  c.timeout = 2000ms;
  c.initial_backoff = 1ms;
  return c;
}

SamplingConfig samples(int n) {
  SamplingConfig s;
  s.n_samples = n;
  return s;
}

PromptBundle prompt(const std::string& user) { return {"system", user, ""}; }

ErrorCode code_of(LlmClient& c, const PromptBundle& p, const SamplingConfig& s, int* attempts = nullptr) {
  try {
    c.complete(p, s);
  } catch (const ClientError& e) {
    if (attempts) *attempts = e.attempts();
    return e.code();
  }
  FAIL("expected a client error");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("scripted responses are keyed by prompt hash") {
  MockScript script;
  script.responses[prompt_hash(prompt("a"))] = {"one", "two"};
  MockServer m(script);
  LlmClient c(config_for(m));
  CHECK(c.complete(prompt("a"), samples(3)) == std::vector<std::string>{"one", "two", "one"});
  CHECK(c.complete(prompt("b"), samples(1)) == std::vector<std::string>{canned_completion()});
  CHECK(m.request_count() == 2);
}

TEST_CASE("prompt hash covers both messages") {
  CHECK(prompt_hash(prompt("a")) != prompt_hash(PromptBundle{"other", "a", ""}));
  const std::vector<std::string> parts{"system", "a"};
  CHECK(prompt_hash(parts) == prompt_hash(prompt("a")));
  CHECK(prompt_hash(prompt("a")).size() == 16);
}

TEST_CASE("short replies are topped up with further requests") {
  MockScript script;
  script.responses[prompt_hash(prompt("a"))] = {"x", "y", "z"};
  script.max_choices = 2;
  MockServer m(script);
  LlmClient c(config_for(m));
  const auto out = c.complete(prompt("a"), samples(5));
  CHECK(out == std::vector<std::string>{"x", "y", "x", "y", "x"});
  CHECK(m.request_count() == 3);
}

TEST_CASE("5xx is retried until it succeeds") {
  MockScript script;
  script.fail_status = 503;
  script.fail_count = 2;
  MockServer m(script);
  LlmClient c(config_for(m));
  CHECK(c.complete(prompt("a"), samples(1)).size() == 1);
  CHECK(m.request_count() == 3);
}

TEST_CASE("persistent 5xx exhausts the attempts") {
  MockScript script;
  script.fail_status = 500;
  script.fail_count = -1;
  MockServer m(script);
  LlmClient c(config_for(m));
  int attempts = 0;
  CHECK(code_of(c, prompt("a"), samples(1), &attempts) == ErrorCode::HttpStatus);
  CHECK(attempts == 3);
  CHECK(m.request_count() == 3);
}

TEST_CASE("4xx is final") {
  MockScript script;
  script.fail_status = 404;
  script.fail_count = -1;
  MockServer m(script);
  LlmClient c(config_for(m));
  int attempts = 0;
  CHECK(code_of(c, prompt("a"), samples(1), &attempts) == ErrorCode::HttpStatus);
  CHECK(attempts == 1);
  CHECK(m.request_count() == 1);
}

TEST_CASE("slow endpoint times out after retries") {
  MockScript script;
  script.delay = 400ms;
  MockServer m(script);
  auto cfg = config_for(m);
  cfg.timeout = 100ms;
  cfg.max_attempts = 2;
  LlmClient c(cfg);
  int attempts = 0;
  CHECK(code_of(c, prompt("a"), samples(1), &attempts) == ErrorCode::Timeout);
  CHECK(attempts == 2);
}

TEST_CASE("closed port is unreachable") {
  int port;
  {
    MockServer m(MockScript{});
    port = m.port();
  }
  ClientConfig cfg;
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port);
  cfg.max_attempts = 2;
  cfg.initial_backoff = 1ms;
  cfg.timeout = 500ms;
  LlmClient c(cfg);
  CHECK(code_of(c, prompt("a"), samples(1)) == ErrorCode::Unreachable);
}

TEST_CASE("endpoint forms") {
  MockServer m(MockScript{});
  for (const auto& ep : {m.url(), m.url() + "/", m.url() + "/v1", m.url() + "/v1/chat/completions"}) {
    auto cfg = config_for(m);
    cfg.endpoint = ep;
    LlmClient c(cfg);
    CHECK(c.complete(prompt("a"), samples(1)).size() == 1);
  }
  ClientConfig bad;
  bad.endpoint = "ftp://host";
  CHECK_THROWS_AS(LlmClient{bad}, Error);
  bad.endpoint = "localhost:8080";
  CHECK_THROWS_AS(LlmClient{bad}, Error);
  bad.endpoint = "http://localhost";
  bad.max_attempts = 0;
  CHECK_THROWS_AS(LlmClient{bad}, Error);
}

TEST_CASE("invalid sampling settings are rejected") {
  MockServer m(MockScript{});
  LlmClient c(config_for(m));
  auto s = samples(0);
  CHECK_THROWS_AS(c.complete(prompt("a"), s), Error);
  s = samples(1);
  s.temperature = -1;
  CHECK_THROWS_AS(c.complete(prompt("a"), s), Error);
}

TEST_CASE("concurrent batch keeps prompt order") {
  MockScript script;
  std::vector<PromptBundle> prompts;
  for (int i = 0; i < 12; ++i) {
    prompts.push_back(prompt("p" + std::to_string(i)));
    script.responses[prompt_hash(prompts.back())] = {"r" + std::to_string(i)};
  }
  script.delay = 20ms;
  MockServer m(script);
  auto cfg = config_for(m);
  cfg.max_in_flight = 4;
  LlmClient c(cfg);
  const auto out = c.complete_many(prompts, samples(2));
  REQUIRE(out.size() == 12);
  for (int i = 0; i < 12; ++i) CHECK(out[i] == std::vector<std::string>(2, "r" + std::to_string(i)));
}

TEST_CASE("log lines never carry the key") {
  MockServer m(MockScript{});
  auto cfg = config_for(m);
  cfg.api_key = "sk-very-secret";
  cfg.model_id = "model-sk-very-secret";
  std::mutex mu;
  std::vector<std::string> lines;
  cfg.log = [&](std::string_view l) {
    std::lock_guard lock(mu);
    lines.emplace_back(l);
  };
  LlmClient c(cfg);
  c.complete(prompt("a"), samples(1));
  REQUIRE(lines.size() == 2);
  for (const auto& l : lines) CHECK(l.find("sk-very-secret") == std::string::npos);
  CHECK(lines[0].find("[REDACTED]") != std::string::npos);
}

TEST_CASE("mock script file") {
  const auto path = std::filesystem::temp_directory_path() / "neurodx_mock_script.json";
  {
    std::ofstream f(path);
    f << R"({"responses": {"abc": "one", "def": ["x", "y"]}, "fallback": "fb", "fail_status": 502, "fail_count": 1})";
  }
  const auto s = MockScript::load(path.string());
  CHECK(s.responses.at("abc") == std::vector<std::string>{"one"});
  CHECK(s.responses.at("def").size() == 2);
  CHECK(s.fallback == "fb");
  CHECK(s.fail_status == 502);
  {
    std::ofstream f(path);
    f << R"({"responses": {"abc": []}})";
  }
  CHECK_THROWS_AS(MockScript::load(path.string()), Error);
  std::filesystem::remove(path);
}
