#include <atomic>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "neurodx/error.hpp"
#include "neurodx/io.hpp"
#include "neurodx/llm_client.hpp"

namespace neurodx {

using nlohmann::json;

MockScript MockScript::load(const std::string& path) {
  json doc = json::parse(read_text_file(path), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw Error(ErrorCode::MalformedFile, "mock script must be a JSON object", path);
  MockScript s;
  try {
    if (auto it = doc.find("responses"); it != doc.end()) {
      for (const auto& [hash, v] : it->items()) {
        if (v.is_string()) s.responses[hash] = {v.get<std::string>()};
        else s.responses[hash] = v.get<std::vector<std::string>>();
        if (s.responses[hash].empty()) throw Error(ErrorCode::MalformedFile, "empty response list", "responses." + hash);
      }
    }
    if (auto it = doc.find("fallback"); it != doc.end()) s.fallback = it->get<std::string>();
    s.fail_status = doc.value("fail_status", 0);
    s.fail_count = doc.value("fail_count", 0);
    s.delay = std::chrono::milliseconds(doc.value("delay_ms", 0));
    s.max_choices = doc.value("max_choices", 0);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedFile, std::string("mock script: ") + e.what(), path);
  }
  return s;
}

namespace {

// No SO_REUSEPORT: a second server on a busy port must fail to bind.
void exclusive_bind(socket_t sock) {
  int yes = 1;
  setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
}

}  // namespace

struct MockServer::Impl {
  MockScript script;
  std::string host;
  int port = 0;
  httplib::Server server;
  std::thread thread;
  std::atomic<std::uint64_t> requests{0};
  std::atomic<int> failures_served{0};
  std::once_flag stopped;

  void handle(const httplib::Request& req, httplib::Response& res) {
    const std::uint64_t serial = requests.fetch_add(1);
    if (script.delay.count() > 0) std::this_thread::sleep_for(script.delay);
    if (script.fail_status != 0) {
      const int served = failures_served.fetch_add(1);
      if (script.fail_count < 0 || served < script.fail_count) {
        res.status = script.fail_status;
        res.set_content(json{{"error", {{"message", "scripted failure"}}}}.dump(), "application/json");
        return;
      }
    }
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object() || !body.contains("messages") || !body["messages"].is_array()) {
      res.status = 400;
      res.set_content(json{{"error", {{"message", "request needs a messages array"}}}}.dump(), "application/json");
      return;
    }
    std::vector<std::string> contents;
    for (const auto& m : body["messages"])
      contents.push_back(m.is_object() && m.contains("content") && m["content"].is_string()
                             ? m["content"].get<std::string>()
                             : std::string());
    int n = 1;
    if (body.contains("n") && body["n"].is_number_integer()) n = std::max(1, body["n"].get<int>());
    if (script.max_choices > 0) n = std::min(n, script.max_choices);
    const std::string hash = prompt_hash(contents);
    auto it = script.responses.find(hash);
    json choices = json::array();
    for (int i = 0; i < n; ++i) {
      const std::string& text =
          it == script.responses.end() ? script.fallback : it->second[static_cast<std::size_t>(i) % it->second.size()];
      choices.push_back({{"index", i},
                         {"message", {{"role", "assistant"}, {"content", text}}},
                         {"finish_reason", "stop"}});
    }
    json reply = {{"id", "mock-" + std::to_string(serial)},
                  {"object", "chat.completion"},
                  {"model", body.value("model", "mock")},
                  {"choices", choices},
                  {"usage", {{"prompt_tokens", 0}, {"completion_tokens", 0}, {"total_tokens", 0}}}};
    res.set_content(reply.dump(), "application/json");
  }
};

MockServer::MockServer(MockScript script, int port, std::string host) : impl_(std::make_unique<Impl>()) {
  impl_->script = std::move(script);
  impl_->host = std::move(host);
  auto handler = [impl = impl_.get()](const httplib::Request& req, httplib::Response& res) { impl->handle(req, res); };
  impl_->server.set_socket_options(exclusive_bind);
  impl_->server.Post("/v1/chat/completions", handler);
  impl_->server.Post("/chat/completions", handler);
  impl_->server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"status":"ok"})", "application/json");
  });
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(impl_->host);
    if (impl_->port <= 0) throw Error(ErrorCode::PortInUse, "could not bind any port", impl_->host);
  } else {
    if (!impl_->server.bind_to_port(impl_->host, port))
      throw Error(ErrorCode::PortInUse, "port unavailable", impl_->host + ":" + std::to_string(port));
    impl_->port = port;
  }
  impl_->thread = std::thread([impl = impl_.get()] { impl->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

MockServer::~MockServer() { stop(); }

int MockServer::port() const { return impl_->port; }

std::string MockServer::url() const { return "http://" + impl_->host + ":" + std::to_string(impl_->port); }

std::uint64_t MockServer::request_count() const { return impl_->requests.load(); }

void MockServer::stop() {
  std::call_once(impl_->stopped, [this] {
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
  });
}

}  // namespace neurodx
