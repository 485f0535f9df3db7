#pragma once

#include <filesystem>

#include "stc/backends/interfaces.hpp"
#include "stc/core/types.hpp"

namespace stc::prompting {

// A solved training-set pair placed in prompts to condition few-shot
// behavior.
struct InContextExample {
  std::string question;
  std::vector<std::string> context_captions;
  std::vector<std::string> candidate_labels;
  std::string most_related_label;  // must be one of candidate_labels
  std::string answer;
  std::optional<std::string> rationale;  // required for modes ipvr and cot
};

struct PoolEntry {
  std::string id;
  InContextExample example;
  std::vector<double> embedding;  // computed once at load, read-only after
};

// The text a pool entry is embedded under: question plus its context
// captions, mirroring the episode-side query text.
std::string pool_embedding_text(const InContextExample& example);

// Query text for in-context selection: question plus the scene's global
// caption.
std::string query_embedding_text(const std::string& question,
                                 const std::string& global_caption);

class ExamplePool {
 public:
  ExamplePool() = default;
  explicit ExamplePool(std::vector<PoolEntry> entries);

  // Reads InContextExample JSONL and embeds each entry via the backend.
  static ExamplePool load_jsonl(const std::filesystem::path& path,
                                backends::EmbeddingBackend& embedder);

  static std::vector<PoolEntry> read_jsonl(const std::filesystem::path& path);
  static void write_jsonl(const std::filesystem::path& path,
                          const std::vector<PoolEntry>& entries);

  const std::vector<PoolEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<PoolEntry> entries_;
};

// Partitions the top n*k pool entries (by cosine similarity to the query,
// ties broken by pool order) into k disjoint lists of n: the rank-r entry
// goes to list r mod k. Returns entry indices. Throws when the pool is
// smaller than n*k.
std::vector<std::vector<int>> select_in_context(
    const std::vector<double>& query_embedding, const ExamplePool& pool, int n,
    int k);

// Argmax over labels of embedding cosine similarity to the answer; ties go
// to the earlier label. Used when building in-context examples from
// training data.
std::string label_closest_to_answer(const std::vector<std::string>& labels,
                                    const std::string& answer,
                                    backends::EmbeddingBackend& embedder);

}  // namespace stc::prompting
