#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>

#include "stc/backends/interfaces.hpp"

namespace stc::datastore {

// Content-addressed on-disk response store. Layout: <dir>/<d0d1>/<d2d3>/<digest>.json
// holding {request_digest, kind, response, created_at}. Writes are
// idempotent; storing a different payload under an existing digest is a
// corruption signal and throws.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  void put(const std::string& digest, const std::string& kind,
           const nlohmann::json& response);
  std::optional<nlohmann::json> get(const std::string& digest) const;

  struct Stats {
    std::size_t entries = 0;
    std::uintmax_t bytes = 0;
    std::map<std::string, std::size_t> by_kind;
  };
  Stats stats() const;

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path entry_path(const std::string& digest) const;

  std::filesystem::path dir_;
  mutable std::mutex write_mutex_;
};

// Serves fetches from the cache; misses go to the inner source and the
// response is stored before returning. With a warm cache the inner source
// is never touched.
class CachedSource : public backends::ResponseSource {
 public:
  CachedSource(std::shared_ptr<backends::ResponseSource> inner,
               std::shared_ptr<ResponseCache> cache)
      : inner_(std::move(inner)), cache_(std::move(cache)) {}

  nlohmann::json fetch(const std::string& kind,
                       const nlohmann::json& canonical_request) override;

 private:
  std::shared_ptr<backends::ResponseSource> inner_;
  std::shared_ptr<ResponseCache> cache_;
};

}  // namespace stc::datastore
