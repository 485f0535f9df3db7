#include "stc/prompting/examples.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

namespace stc::prompting {

using nlohmann::json;

std::string pool_embedding_text(const InContextExample& example) {
  std::string text = example.question;
  for (const auto& caption : example.context_captions) {
    text += ' ';
    text += caption;
  }
  return text;
}

std::string query_embedding_text(const std::string& question,
                                 const std::string& global_caption) {
  if (global_caption.empty()) return question;
  return question + ' ' + global_caption;
}

ExamplePool::ExamplePool(std::vector<PoolEntry> entries)
    : entries_(std::move(entries)) {
  for (const auto& e : entries_) {
    if (e.embedding.empty())
      throw std::invalid_argument("pool entry '" + e.id + "' has no embedding");
    if (e.embedding.size() != entries_.front().embedding.size())
      throw std::invalid_argument("pool embeddings have mixed dimensions");
    const auto& labels = e.example.candidate_labels;
    if (std::find(labels.begin(), labels.end(), e.example.most_related_label) ==
        labels.end())
      throw std::invalid_argument("pool entry '" + e.id +
                                  "': most_related_label not in candidate_labels");
  }
}

std::vector<PoolEntry> ExamplePool::read_jsonl(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open pool file " + path.string());
  std::vector<PoolEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw std::runtime_error("malformed pool record at " + path.string() + ":" +
                               std::to_string(line_no));
    PoolEntry e;
    e.id = j.at("id").get<std::string>();
    e.example.question = j.at("question").get<std::string>();
    e.example.context_captions =
        j.at("context_captions").get<std::vector<std::string>>();
    e.example.candidate_labels =
        j.at("candidate_labels").get<std::vector<std::string>>();
    e.example.most_related_label = j.at("most_related_label").get<std::string>();
    e.example.answer = j.at("answer").get<std::string>();
    if (j.contains("rationale") && !j["rationale"].is_null())
      e.example.rationale = j["rationale"].get<std::string>();
    entries.push_back(std::move(e));
  }
  return entries;
}

void ExamplePool::write_jsonl(const std::filesystem::path& path,
                              const std::vector<PoolEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write pool file " + path.string());
  for (const auto& e : entries) {
    json j{{"id", e.id},
           {"question", e.example.question},
           {"context_captions", e.example.context_captions},
           {"candidate_labels", e.example.candidate_labels},
           {"most_related_label", e.example.most_related_label},
           {"answer", e.example.answer}};
    j["rationale"] =
        e.example.rationale ? json(*e.example.rationale) : json(nullptr);
    out << j.dump() << '\n';
  }
}

ExamplePool ExamplePool::load_jsonl(const std::filesystem::path& path,
                                    backends::EmbeddingBackend& embedder) {
  auto entries = read_jsonl(path);
  for (auto& e : entries)
    e.embedding = embedder.embed_text(pool_embedding_text(e.example)).values;
  return ExamplePool(std::move(entries));
}

std::vector<std::vector<int>> select_in_context(
    const std::vector<double>& query_embedding, const ExamplePool& pool, int n,
    int k) {
  if (n < 1 || k < 1) throw std::invalid_argument("select_in_context: n,k >= 1");
  const int need = n * k;
  if (static_cast<int>(pool.size()) < need)
    throw std::invalid_argument(
        "select_in_context: pool of " + std::to_string(pool.size()) +
        " smaller than n*k = " + std::to_string(need));

  std::vector<double> sims(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i)
    sims[i] =
        backends::cosine_similarity(query_embedding, pool.entries()[i].embedding);

  // Stable argsort, descending similarity; ties keep pool order.
  std::vector<int> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return sims[a] > sims[b]; });

  std::vector<std::vector<int>> lists(k);
  for (int rank = 0; rank < need; ++rank)
    lists[rank % k].push_back(order[rank]);
  return lists;
}

std::string label_closest_to_answer(const std::vector<std::string>& labels,
                                    const std::string& answer,
                                    backends::EmbeddingBackend& embedder) {
  if (labels.empty())
    throw std::invalid_argument("label_closest_to_answer: empty label list");
  const auto answer_embedding = embedder.embed_text(answer).values;
  int best = 0;
  double best_sim = -2;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double sim = backends::cosine_similarity(
        embedder.embed_text(labels[i]).values, answer_embedding);
    if (sim > best_sim) {
      best_sim = sim;
      best = static_cast<int>(i);
    }
  }
  return labels[best];
}

}  // namespace stc::prompting
