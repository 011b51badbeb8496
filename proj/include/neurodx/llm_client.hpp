#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "neurodx/diagnosis.hpp"

namespace neurodx {

struct SamplingConfig {
  double temperature = 0.9;
  int max_new_tokens = 3000;
  int n_samples = 1;
  std::optional<std::uint64_t> seed;
};

// Throws InvalidConfig.
void validate(const SamplingConfig& cfg);

// Anything that turns a prompt into cfg.n_samples completion texts.
class CompletionSource {
 public:
  virtual ~CompletionSource() = default;
  virtual std::vector<std::string> complete(const PromptBundle& prompt, const SamplingConfig& cfg) = 0;
  // Results in prompt order. The base implementation runs sequentially.
  virtual std::vector<std::vector<std::string>> complete_many(std::span<const PromptBundle> prompts,
                                                              const SamplingConfig& cfg);
};

using LogSink = std::function<void(std::string_view line)>;

struct ClientConfig {
  // Base URL ("http://host:port", ".../v1") or the full chat-completions URL.
  std::string endpoint;
  std::string model_id = "default";
  std::string api_key;
  std::chrono::milliseconds timeout{120000};
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{250};
  double backoff_factor = 2.0;
  int max_in_flight = 4;
  LogSink log;  // receives request/response lines with credentials redacted
};

// Reads NEURODX_API_KEY, then OPENAI_API_KEY; empty when neither is set.
std::string api_key_from_env();

// OpenAI-compatible chat-completions client. Each prompt is one request for
// n completions; servers that return fewer choices are topped up with further
// requests. Timeouts, connection failures and 5xx are retried with
// exponential backoff; 4xx and malformed bodies are final.
class LlmClient final : public CompletionSource {
 public:
  explicit LlmClient(ClientConfig cfg);

  // Exactly cfg.n_samples texts. Throws ClientError carrying the attempt count.
  std::vector<std::string> complete(const PromptBundle& prompt, const SamplingConfig& cfg) override;

  // Up to max_in_flight prompts concurrently; results in prompt order.
  std::vector<std::vector<std::string>> complete_many(std::span<const PromptBundle> prompts,
                                                      const SamplingConfig& cfg) override;

  const ClientConfig& config() const { return cfg_; }

 private:
  ClientConfig cfg_;
  std::string base_;   // scheme://host:port
  std::string route_;  // /v1/chat/completions
  std::atomic<std::uint64_t> next_id_{0};
};

// FNV-1a 64-bit hex digest of the message contents joined by '\x1f' (system
// first, then user). The mock server keys its script by this value.
std::string prompt_hash(const PromptBundle& prompt);
std::string prompt_hash(std::span<const std::string> message_contents);

// Canonical completion ranking CN, AD, bvFTD, nfvPPA, svPPA.
std::string canned_completion();

struct MockScript {
  // prompt hash -> responses; a request for n choices gets responses[i % size].
  std::map<std::string, std::vector<std::string>> responses;
  std::string fallback = canned_completion();
  // The first fail_count requests answer with fail_status (-1 = every request).
  int fail_status = 0;
  int fail_count = 0;
  std::chrono::milliseconds delay{0};
  // Upper bound on choices per reply, like servers that ignore n (0 = none).
  int max_choices = 0;

  // {"responses": {hash: [text, ...]}, "fallback": text, "fail_status",
  //  "fail_count", "delay_ms", "max_choices"}
  static MockScript load(const std::string& path);
};

// Deterministic OpenAI-compatible server on a background thread.
class MockServer {
 public:
  // port 0 picks a free port. Throws PortInUse.
  explicit MockServer(MockScript script, int port = 0, std::string host = "127.0.0.1");
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  int port() const;
  std::string url() const;
  std::uint64_t request_count() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace neurodx
