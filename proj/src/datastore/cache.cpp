#include "stc/datastore/cache.hpp"

#include <chrono>
#include <fstream>

#include "stc/backends/digest.hpp"

namespace stc::datastore {

namespace fs = std::filesystem;

ResponseCache::ResponseCache(fs::path dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
}

fs::path ResponseCache::entry_path(const std::string& digest) const {
  if (digest.size() < 4)
    throw std::invalid_argument("cache: digest too short: " + digest);
  return dir_ / digest.substr(0, 2) / digest.substr(2, 2) / (digest + ".json");
}

void ResponseCache::put(const std::string& digest, const std::string& kind,
                        const nlohmann::json& response) {
  std::lock_guard<std::mutex> lock(write_mutex_);
  const fs::path path = entry_path(digest);
  if (fs::exists(path)) {
    auto existing = get(digest);
    if (existing && *existing == response) return;  // idempotent re-put
    throw std::runtime_error("cache corruption: digest " + digest +
                             " already stored with a different payload");
  }
  fs::create_directories(path.parent_path());
  nlohmann::json entry{
      {"request_digest", digest},
      {"kind", kind},
      {"response", response},
      {"created_at",
       std::chrono::duration_cast<std::chrono::seconds>(
           std::chrono::system_clock::now().time_since_epoch())
           .count()}};
  // Write to a temp name then rename so readers never see partial entries.
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cache: cannot write " + tmp.string());
    out << entry.dump() << '\n';
  }
  fs::rename(tmp, path);
}

std::optional<nlohmann::json> ResponseCache::get(const std::string& digest) const {
  const fs::path path = entry_path(digest);
  std::ifstream in(path);
  if (!in) return std::nullopt;
  nlohmann::json entry = nlohmann::json::parse(in, nullptr, false);
  if (entry.is_discarded() || !entry.contains("response"))
    throw std::runtime_error("cache corruption: malformed entry " + path.string());
  return entry["response"];
}

ResponseCache::Stats ResponseCache::stats() const {
  Stats s;
  if (!fs::exists(dir_)) return s;
  for (const auto& file : fs::recursive_directory_iterator(dir_)) {
    if (!file.is_regular_file() || file.path().extension() != ".json") continue;
    ++s.entries;
    s.bytes += file.file_size();
    std::ifstream in(file.path());
    nlohmann::json entry = nlohmann::json::parse(in, nullptr, false);
    if (!entry.is_discarded())
      ++s.by_kind[entry.value("kind", std::string("unknown"))];
  }
  return s;
}

nlohmann::json CachedSource::fetch(const std::string& kind,
                                   const nlohmann::json& canonical_request) {
  const std::string digest = backends::request_digest(kind, canonical_request);
  if (auto hit = cache_->get(digest)) return *hit;
  nlohmann::json response = inner_->fetch(kind, canonical_request);
  cache_->put(digest, kind, response);
  return response;
}

}  // namespace stc::datastore
