#include "stc/backends/fixture.hpp"

#include <fstream>

#include "stc/backends/digest.hpp"

namespace stc::backends {

FixtureSource::FixtureSource(std::vector<FixtureRecord> records) {
  for (auto& rec : records) {
    auto [it, inserted] =
        responses_.try_emplace(rec.request_digest, rec.response);
    if (!inserted && it->second != rec.response)
      throw std::invalid_argument(
          "fixture set scripts conflicting responses for digest " +
          rec.request_digest);
  }
}

std::shared_ptr<FixtureSource> FixtureSource::load_jsonl(
    const std::filesystem::path& path) {
  return std::make_shared<FixtureSource>(read_fixture_records(path));
}

nlohmann::json FixtureSource::fetch(const std::string& kind,
                                    const nlohmann::json& canonical_request) {
  counters_.count(kind);
  const std::string digest = request_digest(kind, canonical_request);
  auto it = responses_.find(digest);
  if (it == responses_.end()) throw MissingFixture(kind, digest);
  return it->second;
}

std::vector<FixtureRecord> read_fixture_records(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open fixture file " + path.string());
  std::vector<FixtureRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("request_digest") || !j.contains("response"))
      throw std::runtime_error("malformed fixture record at " + path.string() +
                               ":" + std::to_string(line_no));
    records.push_back(FixtureRecord{j["request_digest"].get<std::string>(),
                                    j.value("kind", std::string{}),
                                    j["response"]});
  }
  return records;
}

void write_fixture_records(const std::filesystem::path& path,
                           const std::vector<FixtureRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write fixture file " + path.string());
  for (const auto& rec : records) {
    nlohmann::json j{{"request_digest", rec.request_digest},
                     {"kind", rec.kind},
                     {"response", rec.response}};
    out << j.dump() << '\n';
  }
}

}  // namespace stc::backends
