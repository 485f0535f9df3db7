#pragma once

#include <filesystem>
#include <unordered_map>

#include "stc/backends/interfaces.hpp"

namespace stc::backends {

// Deterministic backend: a pure function of request digest, read-only after
// load. Unknown digests raise MissingFixture (strict mode).
class FixtureSource : public ResponseSource {
 public:
  explicit FixtureSource(std::vector<FixtureRecord> records);

  static std::shared_ptr<FixtureSource> load_jsonl(
      const std::filesystem::path& path);

  nlohmann::json fetch(const std::string& kind,
                       const nlohmann::json& canonical_request) override;

  const BackendCounters& counters() const { return counters_; }
  BackendCounters& counters() { return counters_; }
  std::size_t size() const { return responses_.size(); }

 private:
  std::unordered_map<std::string, nlohmann::json> responses_;
  BackendCounters counters_;
};

// FixtureRecord JSONL helpers.
std::vector<FixtureRecord> read_fixture_records(const std::filesystem::path& path);
void write_fixture_records(const std::filesystem::path& path,
                           const std::vector<FixtureRecord>& records);

}  // namespace stc::backends
