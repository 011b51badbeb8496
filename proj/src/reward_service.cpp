#include "neurodx/reward_service.hpp"

#include <atomic>
#include <chrono>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "neurodx/error.hpp"
#include "neurodx/rewards.hpp"

namespace neurodx {

using nlohmann::json;

std::string_view version() { return NEURODX_VERSION; }

namespace {

ServiceReply bad_request(const std::string& message, const std::string& pointer) {
  return {400, {{"error", message}, {"pointer", pointer}}};
}

json breakdown_json(const RewardBreakdown& b) {
  return {{"format_reward", b.format_reward},
          {"components",
           {{"think_then_json", b.components.think_then_json},
            {"single_wellformed_json", b.components.single_wellformed_json},
            {"top_extractable", b.components.top_extractable},
            {"full_class_coverage", b.components.full_class_coverage}}},
          {"ambiguity_capped", b.ambiguity_capped},
          {"accuracy_reward", b.accuracy_reward},
          {"total", b.total}};
}

}  // namespace

ServiceReply handle_rewards_request(std::string_view body) {
  json req = json::parse(body, nullptr, false);
  if (req.is_discarded()) return bad_request("body is not valid JSON", "");
  if (!req.is_object()) return bad_request("body must be a JSON object", "");
  auto items = req.find("items");
  if (items == req.end() || !items->is_array()) return bad_request("items must be an array", "/items");
  bool with_adv = false;
  if (auto opts = req.find("options"); opts != req.end() && !opts->is_null()) {
    if (!opts->is_object()) return bad_request("options must be an object", "/options");
    if (auto ca = opts->find("compute_advantages"); ca != opts->end()) {
      if (!ca->is_boolean()) return bad_request("compute_advantages must be a boolean", "/options/compute_advantages");
      with_adv = ca->get<bool>();
    }
  }

  struct Parsed {
    json query_id;
    std::vector<std::string> completions;
    DiagnosisClass gold;
  };
  std::vector<Parsed> parsed;
  parsed.reserve(items->size());
  for (std::size_t i = 0; i < items->size(); ++i) {
    const json& it = (*items)[i];
    const std::string at = "/items/" + std::to_string(i);
    if (!it.is_object()) return bad_request("item must be an object", at);
    Parsed p;
    auto q = it.find("query_id");
    if (q == it.end() || !(q->is_string() || q->is_number_integer()))
      return bad_request("query_id must be a string or integer", at + "/query_id");
    p.query_id = *q;
    auto comps = it.find("completions");
    if (comps == it.end() || !comps->is_array() || comps->empty())
      return bad_request("completions must be a non-empty array", at + "/completions");
    for (std::size_t k = 0; k < comps->size(); ++k) {
      if (!(*comps)[k].is_string())
        return bad_request("completion must be a string", at + "/completions/" + std::to_string(k));
      p.completions.push_back((*comps)[k].get<std::string>());
    }
    auto gold = it.find("gold");
    if (gold == it.end() || !gold->is_string()) return bad_request("gold must be a string", at + "/gold");
    const auto g = gold->get<std::string>();
    auto cls = parse_class_id(g);
    if (!cls) cls = map_label(g);
    if (!cls) return bad_request("gold does not map to a diagnostic class: " + g, at + "/gold");
    p.gold = *cls;
    parsed.push_back(std::move(p));
  }

  json results = json::array();
  for (const auto& p : parsed) {
    std::vector<RewardBreakdown> bs;
    std::vector<double> totals;
    for (const auto& c : p.completions) {
      bs.push_back(score_completion(c, p.gold));
      totals.push_back(bs.back().total);
    }
    std::vector<double> adv;
    if (with_adv) adv = group_advantages(totals);
    json comps = json::array();
    for (std::size_t k = 0; k < bs.size(); ++k) {
      json o = breakdown_json(bs[k]);
      if (with_adv) o["advantage"] = adv[k];
      comps.push_back(std::move(o));
    }
    results.push_back({{"query_id", p.query_id}, {"completions", std::move(comps)}});
  }
  return {200, {{"results", std::move(results)}}};
}

namespace {

// No SO_REUSEPORT: a second server on a busy port must fail to bind.
void exclusive_bind(socket_t sock) {
  int yes = 1;
  setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
}

}  // namespace

struct RewardService::Impl {
  ServiceConfig cfg;
  httplib::Server server;
  std::thread thread;
  int port = 0;
  bool bound = false;
  std::mutex mu;

  void log(const httplib::Request& req, const httplib::Response& res) {
    if (!cfg.access_log) return;
    json line = {{"ts", std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::system_clock::now().time_since_epoch())
                            .count()},
                 {"method", req.method},
                 {"path", req.path},
                 {"status", res.status},
                 {"remote", req.remote_addr},
                 {"bytes_in", req.body.size()},
                 {"bytes_out", res.body.size()}};
    cfg.access_log(line.dump());
  }

  void bind() {
    std::lock_guard lock(mu);
    if (bound) return;
    if (cfg.port == 0) {
      port = server.bind_to_any_port(cfg.host);
      if (port <= 0) throw Error(ErrorCode::PortInUse, "could not bind any port", cfg.host);
    } else {
      if (!server.bind_to_port(cfg.host, cfg.port))
        throw Error(ErrorCode::PortInUse, "port unavailable", cfg.host + ":" + std::to_string(cfg.port));
      port = cfg.port;
    }
    bound = true;
  }
};

RewardService::RewardService(ServiceConfig cfg) : impl_(std::make_unique<Impl>()) {
  impl_->cfg = std::move(cfg);
  auto& s = impl_->server;
  s.set_socket_options(exclusive_bind);
  s.set_payload_max_length(impl_->cfg.payload_limit);
  s.set_logger([impl = impl_.get()](const httplib::Request& req, const httplib::Response& res) { impl->log(req, res); });
  s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      json body = {{"error", res.status == 413 ? "payload too large" : httplib::status_message(res.status)}};
      res.set_content(body.dump(), "application/json");
    }
  });

  s.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(json{{"status", "ok"}, {"version", version()}}.dump(), "application/json");
  });
  s.Post("/v1/rewards", [impl = impl_.get()](const httplib::Request& req, httplib::Response& res) {
    const auto& secret = impl->cfg.shared_secret;
    if (!secret.empty() && req.get_header_value("X-Reward-Secret") != secret) {
      res.status = 401;
      res.set_content(json{{"error", "missing or wrong X-Reward-Secret header"}}.dump(), "application/json");
      return;
    }
    ServiceReply reply;
    try {
      reply = handle_rewards_request(req.body);
    } catch (const std::exception& e) {
      reply = {500, {{"error", e.what()}}};
    }
    res.status = reply.status;
    res.set_content(reply.body.dump(), "application/json");
  });
}

RewardService::~RewardService() { stop(); }

void RewardService::start() {
  impl_->bind();
  impl_->thread = std::thread([impl = impl_.get()] { impl->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void RewardService::run() {
  impl_->bind();
  impl_->server.listen_after_bind();
}

void RewardService::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int RewardService::port() const { return impl_->port; }

}  // namespace neurodx
