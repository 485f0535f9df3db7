#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace stc {

// Axis-aligned box in real-valued pixel coordinates. A valid box has
// x_min < x_max and y_min < y_max.
struct BoundingBox {
  double x_min = 0;
  double y_min = 0;
  double x_max = 0;
  double y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool valid() const { return x_min < x_max && y_min < y_max; }

  bool operator==(const BoundingBox&) const = default;
};

// One detected object: the unit the think stage attends over.
struct ConceptCandidate {
  std::string label;  // category name from the detector vocabulary
  BoundingBox bbox;
  double score = 0;  // detection confidence in [0,1]

  bool operator==(const ConceptCandidate&) const = default;
};

// Everything the see stage knows about one image, plus the concepts the
// think stage has attended to so far (with their regional captions).
struct SceneContext {
  std::string image_ref;  // opaque identifier, resolved by backends
  std::string global_caption;
  double image_width = 0;
  double image_height = 0;
  std::vector<ConceptCandidate> candidates;  // descending score, ties by label
  std::vector<std::pair<ConceptCandidate, std::string>> attended;

  bool is_attended(const std::string& label) const;
  // Distinct un-attended labels, in candidate order.
  std::vector<std::string> remaining_labels() const;
};

struct Sample {
  std::string id;
  std::string image_ref;
  std::string question;
  std::vector<std::string> direct_answers;
  std::optional<std::vector<std::string>> choices;
  std::optional<int> correct_choice_index;
  std::optional<std::vector<std::string>> reference_rationales;
};

// One model completion. mean/total logprobs are absent when log
// probabilities were not requested.
struct Completion {
  std::string text;
  std::vector<std::string> tokens;
  std::vector<double> token_logprobs;  // natural log, each <= 0
  std::optional<double> mean_logprob;
  std::optional<double> total_logprob;

  bool operator==(const Completion&) const = default;
};

struct AnswerPrediction {
  std::string raw_text;
  std::string normalized_text;
  double score = 0;  // mean token logprob over the answer span

  bool operator==(const AnswerPrediction&) const = default;
};

struct Rationale {
  std::string text;
  double image_similarity = 0;  // in [-1,1]
  bool accepted = false;

  bool operator==(const Rationale&) const = default;
};

enum class PromptMode { ipvr_attend, ipvr_qa, pica, cot };
enum class EngineMode { ipvr, pica, cot };
enum class AnswerFormat { direct, multiple_choice };

// An assembled few-shot prompt and the ids of the pool examples it embeds.
struct PromptText {
  std::string text;
  PromptMode mode = PromptMode::ipvr_qa;
  std::vector<std::string> example_ids;

  bool operator==(const PromptText&) const = default;
};

// Record of one think-confirm round.
struct RoundRecord {
  int round_index = 0;  // 1-based
  std::optional<ConceptCandidate> attended_concept;
  std::optional<std::string> regional_caption;
  // Attend prompt first (when issued), then the k QA prompts in list order.
  std::vector<PromptText> prompts;
  std::vector<Completion> ensemble;  // all k completions, unparseable included
  AnswerPrediction answer;
  std::optional<Rationale> rationale;
  int llm_queries_this_round = 0;  // k, plus one when an attend query was issued
};

// All engine hyperparameters. Field-by-field CLI flags: --n, --k, --miter,
// --thre; the rest keep their own names.
struct EpisodeConfig {
  int example_count = 8;         // in-context examples per prompt (n)
  int ensemble_size = 5;         // QA prompts per round (k)
  int max_rounds = 5;            // iteration cap (mIter)
  double accept_threshold = 0;   // rationale similarity gate (thre)
  double bbox_expand = 1.5;      // region expansion factor for captioning
  EngineMode mode = EngineMode::ipvr;
  AnswerFormat answer_format = AnswerFormat::direct;
  bool enable_attend = true;
  bool enable_rationale = true;
  bool enable_verify = true;
  int caption_candidates = 5;  // candidates requested per regional caption (m)

  // Throws std::invalid_argument on out-of-range fields.
  void validate() const;

  bool operator==(const EpisodeConfig&) const = default;
};

// Complete record of one episode. Serialized as one JSON object per line;
// see docs/trace-schema.md.
struct ReasoningTrace {
  std::string sample_id;
  std::string config_digest;
  EpisodeConfig config;
  std::vector<RoundRecord> rounds;
  AnswerPrediction final_answer;
  bool converged = false;
  int total_llm_queries = 0;
  std::optional<std::string> failure_stage;  // set when the episode failed
};

}  // namespace stc
