#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "stc/backends/interfaces.hpp"
#include "stc/core/types.hpp"

namespace stc::eval {

// Leave-one-out soft accuracy: normalize everything, then average
// min(matches/3, 1) over the ten drop-one annotator subsets. Answer lists
// with other sizes are replicated cyclically to ten (documented rule).
double vqa_soft_accuracy(const std::string& prediction,
                         const std::vector<std::string>& annotator_answers);

// Corpus-style BLEU accumulator with multi-bleu semantics: whitespace
// tokenization, clipped n-gram counts against the per-segment maximum over
// references, brevity penalty from the closest reference length (ties go to
// the shorter reference), geometric mean without smoothing (any zero
// precision makes the score 0).
class BleuAccumulator {
 public:
  explicit BleuAccumulator(int max_n = 4, bool lowercase = false);

  void add(const std::string& candidate,
           const std::vector<std::string>& references);
  double score() const;  // in [0,1]

  int max_n() const { return max_n_; }

 private:
  int max_n_;
  bool lowercase_;
  long long candidate_length_ = 0;
  long long reference_length_ = 0;
  std::vector<long long> correct_;
  std::vector<long long> total_;
};

// Single-pair convenience wrapper over the accumulator.
double bleu(const std::string& candidate,
            const std::vector<std::string>& references, int max_n = 4,
            bool lowercase = false);

// Mean over references of embedding cosine similarity to the candidate.
double rationale_similarity(const std::string& candidate,
                            const std::vector<std::string>& references,
                            backends::EmbeddingBackend& embedder);

struct QueryStats {
  double mean_rounds = 0;
  double mean_queries = 0;
};

QueryStats query_accounting(const std::vector<ReasoningTrace>& traces);

struct SampleMetrics {
  std::string sample_id;
  double accuracy = 0;
  std::optional<double> bleu;
  std::optional<double> rationale_similarity;
  int rounds = 0;
  int queries = 0;
};

struct EvalReport {
  std::vector<SampleMetrics> per_sample;
  double mean_accuracy = 0;
  double mean_rounds = 0;
  double mean_queries = 0;
  std::optional<double> bleu_corpus;

  nlohmann::json to_json() const;
  // Fixed-layout summary table.
  std::string render_table() const;
};

// Joins traces with samples by id (every trace must resolve) and computes
// per-sample and aggregate metrics. The rationale similarity column is
// filled only when an embedder is supplied.
EvalReport evaluate(const std::vector<ReasoningTrace>& traces,
                    const std::vector<Sample>& samples,
                    backends::EmbeddingBackend* embedder = nullptr,
                    bool lowercase_bleu = false);

}  // namespace stc::eval
