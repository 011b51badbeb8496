#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace neurodx {

std::string_view version();

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8000;  // 0 picks a free port
  std::size_t payload_limit = 8u << 20;
  std::string shared_secret;  // required in X-Reward-Secret when non-empty
  std::function<void(std::string_view)> access_log;  // one JSON object per line
};

struct ServiceReply {
  int status = 200;
  nlohmann::json body;
};

// Handler for POST /v1/rewards without the HTTP layer. Schema violations and
// unmappable gold labels yield 400 with a JSON pointer to the field.
ServiceReply handle_rewards_request(std::string_view body);

class RewardService {
 public:
  explicit RewardService(ServiceConfig cfg);
  ~RewardService();
  RewardService(const RewardService&) = delete;
  RewardService& operator=(const RewardService&) = delete;

  // Binds and serves on a background thread. Throws PortInUse.
  void start();
  // Binds and serves on the calling thread until stop().
  void run();
  void stop();
  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace neurodx
