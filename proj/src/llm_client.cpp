#include "neurodx/llm_client.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "neurodx/error.hpp"
#include "neurodx/io.hpp"

namespace neurodx {

using nlohmann::json;

void validate(const SamplingConfig& cfg) {
  if (!(cfg.temperature >= 0.0) || !std::isfinite(cfg.temperature))
    throw Error(ErrorCode::InvalidConfig, "temperature must be >= 0", "temperature");
  if (cfg.max_new_tokens < 1) throw Error(ErrorCode::InvalidConfig, "max_new_tokens must be positive", "max_new_tokens");
  if (cfg.n_samples < 1) throw Error(ErrorCode::InvalidConfig, "n_samples must be positive", "n_samples");
}

std::vector<std::vector<std::string>> CompletionSource::complete_many(std::span<const PromptBundle> prompts,
                                                                      const SamplingConfig& cfg) {
  std::vector<std::vector<std::string>> out;
  out.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    try {
      out.push_back(complete(prompts[i], cfg));
    } catch (ClientError& e) {
      if (!e.report_index) e.report_index = static_cast<int>(i);
      throw;
    }
  }
  return out;
}

std::string api_key_from_env() {
  for (const char* name : {"NEURODX_API_KEY", "OPENAI_API_KEY"})
    if (const char* v = std::getenv(name); v && *v) return v;
  return {};
}

std::string prompt_hash(std::span<const std::string> message_contents) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < message_contents.size(); ++i) {
    if (i) h = fnv1a64("\x1f", h);
    h = fnv1a64(message_contents[i], h);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string prompt_hash(const PromptBundle& prompt) {
  const std::array<std::string, 2> parts{prompt.system_text, prompt.user_text};
  return prompt_hash(parts);
}

std::string canned_completion() {
  return render_completion(
      "Mock reasoning. No volumetric deviation is weighed here; the ranking below is a fixed default.", kAllClasses);
}

namespace {

// "http://host:port/path" -> ("http://host:port", "/path/chat/completions").
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  auto scheme = endpoint.find("://");
  if (scheme == std::string::npos)
    throw Error(ErrorCode::InvalidConfig, "endpoint must start with http:// or https://", "endpoint");
  const std::string proto = endpoint.substr(0, scheme);
  if (proto != "http" && proto != "https")
    throw Error(ErrorCode::InvalidConfig, "unsupported scheme " + proto, "endpoint");
  auto slash = endpoint.find('/', scheme + 3);
  std::string base = slash == std::string::npos ? endpoint : endpoint.substr(0, slash);
  std::string path = slash == std::string::npos ? "" : endpoint.substr(slash);
  while (!path.empty() && path.back() == '/') path.pop_back();
  if (base.size() <= scheme + 3) throw Error(ErrorCode::InvalidConfig, "endpoint has no host", "endpoint");
  const std::string suffix = "/chat/completions";
  if (path.empty()) path = "/v1" + suffix;
  else if (path.size() < suffix.size() || path.compare(path.size() - suffix.size(), suffix.size(), suffix) != 0)
    path += suffix;
  return {base, path};
}

std::string redact(std::string line, const std::string& secret) {
  if (secret.empty()) return line;
  std::size_t pos = 0;
  while ((pos = line.find(secret, pos)) != std::string::npos) {
    line.replace(pos, secret.size(), "[REDACTED]");
    pos += 10;
  }
  return line;
}

}  // namespace

LlmClient::LlmClient(ClientConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.max_attempts < 1) throw Error(ErrorCode::InvalidConfig, "max_attempts must be positive", "max_attempts");
  if (cfg_.max_in_flight < 1) throw Error(ErrorCode::InvalidConfig, "max_in_flight must be positive", "max_in_flight");
  if (cfg_.timeout.count() <= 0) throw Error(ErrorCode::InvalidConfig, "timeout must be positive", "timeout");
  if (!(cfg_.backoff_factor >= 1.0)) throw Error(ErrorCode::InvalidConfig, "backoff_factor must be >= 1", "backoff_factor");
  std::tie(base_, route_) = split_endpoint(cfg_.endpoint);
}

std::vector<std::string> LlmClient::complete(const PromptBundle& prompt, const SamplingConfig& cfg) {
  validate(cfg);
  auto log = [&](const std::string& line) {
    if (cfg_.log) cfg_.log(redact(line, cfg_.api_key));
  };

  std::vector<std::string> texts;
  texts.reserve(static_cast<std::size_t>(cfg.n_samples));
  int rounds = 0;
  while (static_cast<int>(texts.size()) < cfg.n_samples) {
    const int want = cfg.n_samples - static_cast<int>(texts.size());
    if (++rounds > cfg.n_samples)
      throw ClientError(ErrorCode::MalformedResponse, "endpoint keeps returning too few choices", 1);
    json body = {{"model", cfg_.model_id},
                 {"messages",
                  json::array({{{"role", "system"}, {"content", prompt.system_text}},
                               {{"role", "user"}, {"content", prompt.user_text}}})},
                 {"temperature", cfg.temperature},
                 {"max_tokens", cfg.max_new_tokens},
                 {"n", want}};
    if (cfg.seed) body["seed"] = *cfg.seed + texts.size();
    const std::string payload = body.dump();
    const std::string id = "ndx-" + std::to_string(next_id_.fetch_add(1));

    std::chrono::milliseconds backoff = cfg_.initial_backoff;
    for (int attempt = 1;; ++attempt) {
      httplib::Client cli(base_);
      const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
      const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
      cli.set_connection_timeout(secs.count(), usecs.count());
      cli.set_read_timeout(secs.count(), usecs.count());
      cli.set_write_timeout(secs.count(), usecs.count());
      httplib::Headers headers{{"X-Request-Id", id}};
      if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
      log("request " + id + " attempt " + std::to_string(attempt) + " POST " + base_ + route_ + " model=" +
          cfg_.model_id + " n=" + std::to_string(want) + " bytes=" + std::to_string(payload.size()));
      auto res = cli.Post(route_, headers, payload, "application/json");

      ErrorCode failure;
      std::string reason;
      int status = 0;
      if (!res) {
        const auto err = res.error();
        failure = (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
                   err == httplib::Error::Write)
                      ? ErrorCode::Timeout
                      : ErrorCode::Unreachable;
        reason = httplib::to_string(err);
        log("response " + id + " attempt " + std::to_string(attempt) + " transport error: " + reason);
      } else {
        status = res->status;
        log("response " + id + " attempt " + std::to_string(attempt) + " status " + std::to_string(status) +
            " bytes=" + std::to_string(res->body.size()));
        if (status >= 200 && status < 300) {
          json doc = json::parse(res->body, nullptr, false);
          auto choices = doc.is_object() ? doc.find("choices") : doc.end();
          if (doc.is_discarded() || !doc.is_object() || choices == doc.end() || !choices->is_array() ||
              choices->empty())
            throw ClientError(ErrorCode::MalformedResponse, "response has no choices array", attempt, status);
          std::vector<std::pair<long long, std::string>> got;
          for (std::size_t i = 0; i < choices->size(); ++i) {
            const json& c = (*choices)[i];
            const json* content = nullptr;
            if (c.is_object() && c.contains("message") && c["message"].is_object() &&
                c["message"].contains("content") && c["message"]["content"].is_string())
              content = &c["message"]["content"];
            else if (c.is_object() && c.contains("text") && c["text"].is_string())
              content = &c["text"];
            if (!content) throw ClientError(ErrorCode::MalformedResponse, "choice without text content", attempt, status);
            long long index = c.contains("index") && c["index"].is_number_integer() ? c["index"].get<long long>()
                                                                                     : static_cast<long long>(i);
            got.emplace_back(index, content->get<std::string>());
          }
          std::stable_sort(got.begin(), got.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
          for (auto& [idx, t] : got) {
            if (static_cast<int>(texts.size()) == cfg.n_samples) break;
            texts.push_back(std::move(t));
          }
          break;
        }
        if (status < 500) throw ClientError(ErrorCode::HttpStatus, "HTTP " + std::to_string(status), attempt, status);
        failure = ErrorCode::HttpStatus;
        reason = "HTTP " + std::to_string(status);
      }
      if (attempt >= cfg_.max_attempts) throw ClientError(failure, reason, attempt, status);
      std::this_thread::sleep_for(backoff);
      backoff = std::chrono::milliseconds(
          static_cast<std::chrono::milliseconds::rep>(static_cast<double>(backoff.count()) * cfg_.backoff_factor));
    }
  }
  return texts;
}

std::vector<std::vector<std::string>> LlmClient::complete_many(std::span<const PromptBundle> prompts,
                                                               const SamplingConfig& cfg) {
  validate(cfg);
  std::vector<std::vector<std::string>> out(prompts.size());
  std::vector<std::exception_ptr> errors(prompts.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < prompts.size();) {
      try {
        out[i] = complete(prompts[i], cfg);
      } catch (ClientError& e) {
        e.report_index = static_cast<int>(i);
        errors[i] = std::current_exception();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(cfg_.max_in_flight), prompts.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace neurodx
