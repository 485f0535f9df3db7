#include "stc/backends/http_client.hpp"

#include <chrono>
#include <thread>

#include <httplib.h>

namespace stc::backends {

HttpSource::HttpSource(std::map<std::string, HttpEndpoint> endpoints)
    : endpoints_(std::move(endpoints)) {}

nlohmann::json HttpSource::fetch(const std::string& kind,
                                 const nlohmann::json& canonical_request) {
  auto it = endpoints_.find(kind);
  if (it == endpoints_.end())
    throw std::invalid_argument("no endpoint configured for capability " + kind);
  const HttpEndpoint& ep = it->second;

  counters_.count(kind);
  const std::string path = "/v1/" + kind;
  const std::string body = canonical_request.dump();

  int backoff_ms = ep.backoff_ms;
  std::string last_error;
  for (int attempt = 0; attempt <= ep.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
      backoff_ms *= 2;
    }
    // A fresh client per call keeps concurrent episode workers independent.
    httplib::Client client(ep.base_url);
    client.set_connection_timeout(ep.timeout_sec, 0);
    client.set_read_timeout(ep.timeout_sec, 0);
    httplib::Headers headers;
    if (!ep.bearer_token.empty())
      headers.emplace("Authorization", "Bearer " + ep.bearer_token);

    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;  // transport failure: retry
    }
    if (res->status < 200 || res->status >= 300)
      throw ValidationError("backend " + kind + " returned HTTP " +
                            std::to_string(res->status) + ": " + res->body);
    nlohmann::json parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (parsed.is_discarded())
      throw ValidationError("backend " + kind + " returned invalid JSON");
    return parsed;
  }
  throw BackendUnreachable("backend " + kind + " unreachable at " + ep.base_url +
                           " after " + std::to_string(ep.max_retries + 1) +
                           " attempts: " + last_error);
}

}  // namespace stc::backends
