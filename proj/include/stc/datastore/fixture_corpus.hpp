#pragma once

#include <filesystem>

#include "stc/backends/interfaces.hpp"
#include "stc/core/types.hpp"
#include "stc/prompting/examples.hpp"

namespace stc::datastore {

// One verification scenario: a sample, its config, every scripted backend
// response the episode will request, and the expected trace assembled from
// the hand-declared script (round count, per-round winners, acceptance
// flags, final answer).
struct FixtureScenario {
  std::string id;
  std::string note;
  Sample sample;
  EpisodeConfig config;
  std::vector<backends::FixtureRecord> records;  // scenario-specific
  ReasoningTrace expected;
};

struct FixtureCorpus {
  std::vector<prompting::PoolEntry> pool;
  std::vector<backends::FixtureRecord> shared_records;  // pool embeddings
  std::vector<FixtureScenario> scenarios;

  // Shared + scenario records for running a single scenario.
  std::vector<backends::FixtureRecord> records_for(
      const FixtureScenario& scenario) const;
  // Union across all scenarios; conflicting digests are a build error.
  std::vector<backends::FixtureRecord> merged_records() const;
  std::vector<Sample> samples() const;
  const FixtureScenario& scenario(const std::string& id) const;
};

// Materializes a corpus from a scenario spec file (see
// docs/fixture-corpus.md). Throws std::runtime_error naming the scenario
// and the missing or inconsistent scripted response.
FixtureCorpus build_fixture_corpus(const std::filesystem::path& spec_path);

}  // namespace stc::datastore
