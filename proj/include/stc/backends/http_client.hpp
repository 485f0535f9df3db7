#pragma once

#include <map>

#include "stc/backends/interfaces.hpp"

namespace stc::backends {

struct HttpEndpoint {
  std::string base_url;      // e.g. "http://127.0.0.1:8080"
  std::string bearer_token;  // forwarded as Authorization: Bearer <token>
  int max_retries = 3;       // transport errors only
  int backoff_ms = 50;       // doubled after each retry
  int timeout_sec = 30;
};

// JSON-over-HTTP transport: POST <base>/v1/<kind> with the canonical request
// as body. Transport failures are retried with exponential backoff;
// non-2xx responses are model-level errors and are never retried.
class HttpSource : public ResponseSource {
 public:
  // One endpoint per capability kind ("complete", "detect", ...).
  explicit HttpSource(std::map<std::string, HttpEndpoint> endpoints);

  nlohmann::json fetch(const std::string& kind,
                       const nlohmann::json& canonical_request) override;

  const BackendCounters& counters() const { return counters_; }

 private:
  std::map<std::string, HttpEndpoint> endpoints_;
  BackendCounters counters_;
};

}  // namespace stc::backends
