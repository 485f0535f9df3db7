#include "stc/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <unordered_map>

#include "stc/core/answer.hpp"

namespace stc::eval {

double vqa_soft_accuracy(const std::string& prediction,
                         const std::vector<std::string>& annotator_answers) {
  if (annotator_answers.empty())
    throw std::invalid_argument("vqa_soft_accuracy: empty annotator list");

  const std::string pred = normalize_answer(prediction);
  std::vector<std::string> answers(10);
  for (std::size_t i = 0; i < answers.size(); ++i)
    answers[i] =
        normalize_answer(annotator_answers[i % annotator_answers.size()]);

  double sum = 0;
  for (std::size_t leave = 0; leave < answers.size(); ++leave) {
    int matches = 0;
    for (std::size_t j = 0; j < answers.size(); ++j)
      if (j != leave && answers[j] == pred) ++matches;
    sum += std::min(1.0, matches / 3.0);
  }
  return sum / static_cast<double>(answers.size());
}

namespace {

std::vector<std::string> tokenize(const std::string& text, bool lowercase) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(lowercase ? static_cast<char>(std::tolower(
                                        static_cast<unsigned char>(c)))
                                  : c);
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::unordered_map<std::string, long long> ngram_counts(
    const std::vector<std::string>& tokens, int n) {
  std::unordered_map<std::string, long long> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t start = 0; start + n <= tokens.size(); ++start) {
    std::string gram;
    for (int w = 0; w < n; ++w) {
      if (w) gram.push_back(' ');
      gram += tokens[start + w];
    }
    ++counts[gram];
  }
  return counts;
}

}  // namespace

BleuAccumulator::BleuAccumulator(int max_n, bool lowercase)
    : max_n_(max_n),
      lowercase_(lowercase),
      correct_(static_cast<std::size_t>(max_n), 0),
      total_(static_cast<std::size_t>(max_n), 0) {
  if (max_n < 1) throw std::invalid_argument("bleu: max_n must be >= 1");
}

void BleuAccumulator::add(const std::string& candidate,
                          const std::vector<std::string>& references) {
  if (references.empty())
    throw std::invalid_argument("bleu: at least one reference required");
  const auto cand = tokenize(candidate, lowercase_);
  if (cand.empty()) throw std::invalid_argument("bleu: empty candidate");

  // Closest reference length; ties resolved toward the shorter reference.
  long long closest = -1;
  long long closest_diff = -1;
  std::vector<std::vector<std::string>> refs;
  for (const auto& r : references) {
    refs.push_back(tokenize(r, lowercase_));
    const long long len = static_cast<long long>(refs.back().size());
    const long long diff = std::llabs(len - static_cast<long long>(cand.size()));
    if (closest_diff < 0 || diff < closest_diff) {
      closest_diff = diff;
      closest = len;
    } else if (diff == closest_diff && len < closest) {
      closest = len;
    }
  }
  candidate_length_ += static_cast<long long>(cand.size());
  reference_length_ += closest;

  for (int n = 1; n <= max_n_; ++n) {
    const auto cand_counts = ngram_counts(cand, n);
    std::unordered_map<std::string, long long> max_ref_counts;
    for (const auto& ref : refs) {
      for (const auto& [gram, count] : ngram_counts(ref, n)) {
        auto it = max_ref_counts.find(gram);
        if (it == max_ref_counts.end())
          max_ref_counts.emplace(gram, count);
        else
          it->second = std::max(it->second, count);
      }
    }
    for (const auto& [gram, count] : cand_counts) {
      total_[n - 1] += count;
      auto it = max_ref_counts.find(gram);
      if (it != max_ref_counts.end())
        correct_[n - 1] += std::min(count, it->second);
    }
  }
}

double BleuAccumulator::score() const {
  if (candidate_length_ == 0) return 0;
  double log_sum = 0;
  for (int n = 0; n < max_n_; ++n) {
    if (total_[n] == 0 || correct_[n] == 0) return 0;
    log_sum += std::log(static_cast<double>(correct_[n]) /
                        static_cast<double>(total_[n]));
  }
  double brevity_penalty = 1.0;
  if (candidate_length_ < reference_length_)
    brevity_penalty = std::exp(1.0 - static_cast<double>(reference_length_) /
                                         static_cast<double>(candidate_length_));
  return brevity_penalty * std::exp(log_sum / max_n_);
}

double bleu(const std::string& candidate,
            const std::vector<std::string>& references, int max_n,
            bool lowercase) {
  BleuAccumulator acc(max_n, lowercase);
  acc.add(candidate, references);
  return acc.score();
}

double rationale_similarity(const std::string& candidate,
                            const std::vector<std::string>& references,
                            backends::EmbeddingBackend& embedder) {
  if (candidate.empty() || references.empty())
    throw std::invalid_argument("rationale_similarity: empty input");
  const auto cand = embedder.embed_text(candidate).values;
  double sum = 0;
  for (const auto& ref : references)
    sum += backends::cosine_similarity(cand, embedder.embed_text(ref).values);
  return sum / static_cast<double>(references.size());
}

QueryStats query_accounting(const std::vector<ReasoningTrace>& traces) {
  if (traces.empty())
    throw std::invalid_argument("query_accounting: empty trace list");
  QueryStats stats;
  for (const auto& t : traces) {
    stats.mean_rounds += static_cast<double>(t.rounds.size());
    stats.mean_queries += static_cast<double>(t.total_llm_queries);
  }
  stats.mean_rounds /= static_cast<double>(traces.size());
  stats.mean_queries /= static_cast<double>(traces.size());
  return stats;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j{{"mean_accuracy", mean_accuracy},
                   {"mean_rounds", mean_rounds},
                   {"mean_queries", mean_queries}};
  j["bleu_corpus"] = bleu_corpus ? nlohmann::json(*bleu_corpus)
                                 : nlohmann::json(nullptr);
  j["per_sample"] = nlohmann::json::array();
  for (const auto& s : per_sample) {
    nlohmann::json row{{"sample_id", s.sample_id},
                       {"accuracy", s.accuracy},
                       {"rounds", s.rounds},
                       {"queries", s.queries}};
    row["bleu"] = s.bleu ? nlohmann::json(*s.bleu) : nlohmann::json(nullptr);
    row["rationale_similarity"] = s.rationale_similarity
                                      ? nlohmann::json(*s.rationale_similarity)
                                      : nlohmann::json(nullptr);
    j["per_sample"].push_back(std::move(row));
  }
  return j;
}

std::string EvalReport::render_table() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-24s %8s %8s %8s %8s %8s\n", "sample",
                "acc", "bleu", "rsim", "rounds", "queries");
  out << line;
  auto opt = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", *v);
    return std::string(buf);
  };
  for (const auto& s : per_sample) {
    std::snprintf(line, sizeof(line), "%-24s %8.4f %8s %8s %8d %8d\n",
                  s.sample_id.c_str(), s.accuracy, opt(s.bleu).c_str(),
                  opt(s.rationale_similarity).c_str(), s.rounds, s.queries);
    out << line;
  }
  std::snprintf(line, sizeof(line),
                "mean accuracy %.4f | corpus bleu %s | mean rounds %.4f | "
                "mean queries %.4f | samples %zu\n",
                mean_accuracy, opt(bleu_corpus).c_str(), mean_rounds,
                mean_queries, per_sample.size());
  out << line;
  return out.str();
}

EvalReport evaluate(const std::vector<ReasoningTrace>& traces,
                    const std::vector<Sample>& samples,
                    backends::EmbeddingBackend* embedder, bool lowercase_bleu) {
  std::unordered_map<std::string, const Sample*> by_id;
  for (const auto& s : samples) by_id.emplace(s.id, &s);

  EvalReport report;
  BleuAccumulator corpus_bleu(4, lowercase_bleu);
  bool any_bleu = false;

  for (const auto& trace : traces) {
    auto it = by_id.find(trace.sample_id);
    if (it == by_id.end())
      throw std::runtime_error("evaluate: trace sample '" + trace.sample_id +
                               "' is absent from the dataset");
    const Sample& sample = *it->second;

    SampleMetrics m;
    m.sample_id = trace.sample_id;
    m.rounds = static_cast<int>(trace.rounds.size());
    m.queries = trace.total_llm_queries;

    if (trace.config.answer_format == AnswerFormat::multiple_choice &&
        sample.choices && sample.correct_choice_index) {
      const std::string correct = normalize_answer(
          (*sample.choices)[static_cast<std::size_t>(*sample.correct_choice_index)]);
      m.accuracy = trace.final_answer.normalized_text == correct ? 1.0 : 0.0;
    } else {
      if (sample.direct_answers.empty())
        throw std::runtime_error("evaluate: sample '" + sample.id +
                                 "' has no direct answers");
      m.accuracy =
          vqa_soft_accuracy(trace.final_answer.raw_text, sample.direct_answers);
    }

    // Rationale metrics use the last round that produced a rationale.
    std::string produced;
    for (auto rit = trace.rounds.rbegin(); rit != trace.rounds.rend(); ++rit) {
      if (rit->rationale && !rit->rationale->text.empty()) {
        produced = rit->rationale->text;
        break;
      }
    }
    if (!produced.empty() && sample.reference_rationales &&
        !sample.reference_rationales->empty()) {
      m.bleu = bleu(produced, *sample.reference_rationales, 4, lowercase_bleu);
      corpus_bleu.add(produced, *sample.reference_rationales);
      any_bleu = true;
      if (embedder)
        m.rationale_similarity =
            rationale_similarity(produced, *sample.reference_rationales, *embedder);
    }

    report.mean_accuracy += m.accuracy;
    report.per_sample.push_back(std::move(m));
  }

  if (!report.per_sample.empty()) {
    report.mean_accuracy /= static_cast<double>(report.per_sample.size());
    const QueryStats stats = query_accounting(traces);
    report.mean_rounds = stats.mean_rounds;
    report.mean_queries = stats.mean_queries;
  }
  if (any_bleu) report.bleu_corpus = corpus_bleu.score();
  return report;
}

}  // namespace stc::eval
