#include <doctest.h>

#include <httplib.h>

#include "completions.hpp"
#include "neurodx/error.hpp"
#include "neurodx/reward_service.hpp"
#include "neurodx/rewards.hpp"

using namespace neurodx;
using nlohmann::json;

namespace {

json request(std::vector<std::string> completions, const std::string& gold = "AD", bool adv = true) {
  return {{"items", {{{"query_id", "q1"}, {"completions", completions}, {"gold", gold}}}},
          {"options", {{"compute_advantages", adv}}}};
}

std::string pointer_of(const json& req) {
  const auto r = handle_rewards_request(req.dump());
  CHECK(r.status == 400);
  return r.body.value("pointer", "?");
}

}  // namespace

TEST_CASE("fixture totals") {
  const std::vector<std::string> texts{render_completion("a", std::vector<DiagnosisClass>{DiagnosisClass::AD,
                                                                                          DiagnosisClass::CN,
                                                                                          DiagnosisClass::bvFTD,
                                                                                          DiagnosisClass::nfvPPA,
                                                                                          DiagnosisClass::svPPA}),
                                       render_completion("b", kAllClasses), fixture::ambiguous(), ""};
  const auto r = handle_rewards_request(request(texts).dump());
  REQUIRE(r.status == 200);
  const auto& comps = r.body["results"][0]["completions"];
  REQUIRE(comps.size() == 4);
  CHECK(comps[0]["total"] == 2.0);
  CHECK(comps[1]["total"] == 1.0);
  CHECK(comps[2]["total"] == 0.25);
  CHECK(comps[2]["ambiguity_capped"] == true);
  CHECK(comps[3]["total"] == 0.0);
  CHECK(r.body["results"][0]["query_id"] == "q1");
  CHECK(comps[0].contains("advantage"));
  const auto no_adv = handle_rewards_request(request(texts, "AD", false).dump());
  CHECK_FALSE(no_adv.body["results"][0]["completions"][0].contains("advantage"));
}

TEST_CASE("schema errors point at the field") {
  CHECK(handle_rewards_request("{").status == 400);
  CHECK(pointer_of(json::array()) == "");
  CHECK(pointer_of(json::object()) == "/items");
  CHECK(pointer_of({{"items", {1}}}) == "/items/0");
  CHECK(pointer_of({{"items", {{{"completions", {"x"}}, {"gold", "AD"}}}}}) == "/items/0/query_id");
  CHECK(pointer_of({{"items", {{{"query_id", 3}, {"completions", json::array()}, {"gold", "AD"}}}}}) ==
        "/items/0/completions");
  CHECK(pointer_of({{"items", {{{"query_id", 3}, {"completions", {"x", 2}}, {"gold", "AD"}}}}}) ==
        "/items/0/completions/1");
  CHECK(pointer_of({{"items", {{{"query_id", 3}, {"completions", {"x"}}, {"gold", "Lewy body dementia"}}}}}) ==
        "/items/0/gold");
  CHECK(pointer_of({{"items", json::array()}, {"options", {{"compute_advantages", "yes"}}}}) ==
        "/options/compute_advantages");
}

TEST_CASE("HTTP responses equal the direct handler") {
  ServiceConfig cfg;
  cfg.port = 0;
  std::vector<std::string> log;
  std::mutex mu;
  cfg.access_log = [&](std::string_view l) {
    std::lock_guard lock(mu);
    log.emplace_back(l);
  };
  RewardService svc(cfg);
  svc.start();
  httplib::Client cli("127.0.0.1", svc.port());
  const auto body = request({render_completion("a", kAllClasses), "x"}, "Cognitively normal").dump();
  auto res = cli.Post("/v1/rewards", body, "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->body == handle_rewards_request(body).body.dump());
  res = cli.Post("/v1/rewards", "[]", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  res = cli.Get("/healthz");
  REQUIRE(res);
  CHECK(json::parse(res->body)["status"] == "ok");
  svc.stop();
  std::lock_guard lock(mu);
  REQUIRE(log.size() == 3);
  CHECK(json::parse(log[0])["status"] == 200);
  CHECK(json::parse(log[0])["path"] == "/v1/rewards");
}

TEST_CASE("shared secret and payload limit") {
  ServiceConfig cfg;
  cfg.port = 0;
  cfg.shared_secret = "s3";
  cfg.payload_limit = 256;
  RewardService svc(cfg);
  svc.start();
  httplib::Client cli("127.0.0.1", svc.port());
  const auto body = request({"x"}).dump();
  auto res = cli.Post("/v1/rewards", body, "application/json");
  REQUIRE(res);
  CHECK(res->status == 401);
  res = cli.Post("/v1/rewards", {{"X-Reward-Secret", "s3"}}, body, "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  res = cli.Post("/v1/rewards", {{"X-Reward-Secret", "s3"}}, request({std::string(1000, 'a')}).dump(),
                 "application/json");
  REQUIRE(res);
  CHECK(res->status == 413);
  svc.stop();
}

TEST_CASE("busy port is reported") {
  ServiceConfig cfg;
  cfg.port = 0;
  RewardService a(cfg);
  a.start();
  ServiceConfig same;
  same.port = a.port();
  RewardService b(same);
  try {
    b.start();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PortInUse);
  }
  a.stop();
}
