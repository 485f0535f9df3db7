#pragma once

#include "stc/backends/interfaces.hpp"
#include "stc/core/types.hpp"
#include "stc/prompting/examples.hpp"

namespace stc::pipeline {

// Episode failure carrying the stage tag recorded in the trace
// ("see", "attend", "describe", "predict", "confirm", "backend").
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& message)
      : std::runtime_error(stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// Request constants shared with the fixture corpus builder so scripted and
// live requests hash identically.
inline constexpr int kQaMaxTokens = 64;
inline constexpr int kScoreMaxTokens = 1;

backends::CompletionRequest make_qa_request(const std::string& prompt_text);
// Scores `candidate` as a continuation of the prompt: the service returns
// the appended span's tokens and log-probabilities (see docs/protocol.md).
backends::CompletionRequest make_score_request(const std::string& prompt_text,
                                               const std::string& candidate);

// Spans of the answer/rationale inside a completion's text, in byte offsets.
struct ParsedCompletion {
  std::string answer;  // trimmed; empty = unparseable member
  std::size_t answer_begin = 0;
  std::size_t answer_end = 0;
  std::string rationale;  // trimmed; empty = no rationale span
};

// QA completions are line-structured: modes ipvr_qa/pica put the answer
// first and an optional "Rationale:" line after; mode cot puts the
// rationale first and the answer after "Answer:".
ParsedCompletion parse_qa_completion(const std::string& text, PromptMode mode);

// Mean token logprob over the tokens whose span starts inside
// [answer_begin, answer_end). Falls back to the completion-wide mean when
// token offsets are unavailable.
double answer_span_score(const Completion& completion,
                         const ParsedCompletion& parsed);

struct ScoredAnswer {
  bool valid = false;  // false = discarded (empty answer span)
  double score = 0;
  std::string normalized_answer;
};

// Argmax by score; ties pick the lexicographically smaller normalized
// answer. Returns -1 when no member is valid.
int pick_ensemble_winner(const std::vector<ScoredAnswer>& members);

// --- Stages ---------------------------------------------------------------

// Detect + global caption. Candidates are ordered by descending score, ties
// by label.
SceneContext run_see(const std::string& image_ref,
                     const backends::Backends& backends);

struct AttendResult {
  ConceptCandidate selected;
  PromptText prompt;
};

// Scores every remaining label as a continuation of the attend prompt and
// returns the argmax candidate (ties: higher detection score, then label).
// Counts as one logical LLM query.
AttendResult attend_step(const SceneContext& scene,
                         const std::vector<const prompting::PoolEntry*>& examples,
                         const std::string& question,
                         const backends::Backends& backends);

// Expands the concept's box, requests config.caption_candidates captions
// guided by the question, keeps the one most similar to the question by
// embedding cosine, and appends (concept, caption) to scene.attended.
std::string describe_step(SceneContext& scene, const ConceptCandidate& target,
                          const std::string& question,
                          const EpisodeConfig& config,
                          const backends::Backends& backends);

struct PredictResult {
  AnswerPrediction answer;
  std::vector<Completion> ensemble;
  std::vector<PromptText> prompts;
  int winner_index = -1;
};

// Issues k QA completions (one per example list) and selects the one with
// the highest answer-span mean logprob.
PredictResult predict_step(
    const SceneContext& scene,
    const std::vector<std::vector<const prompting::PoolEntry*>>& example_lists,
    const std::vector<Rationale>& rationales_so_far, const Sample& sample,
    const EpisodeConfig& config, const backends::Backends& backends);

// Parses the rationale span of the selected completion and verifies it
// against the image. Accepted iff similarity >= config.accept_threshold, or
// unconditionally when verification is disabled. Returns nullopt when the
// completion carries no rationale.
std::optional<Rationale> confirm_step(const std::string& image_ref,
                                      const Completion& selected,
                                      PromptMode qa_mode,
                                      const EpisodeConfig& config,
                                      const backends::Backends& backends);

// The full episode loop: see once, select examples once, then up to
// max_rounds think-confirm rounds, stopping early when two consecutive
// answers agree. Stage failures are recorded in the returned trace instead
// of propagating.
ReasoningTrace run_episode(const Sample& sample,
                           const prompting::ExamplePool& pool,
                           const EpisodeConfig& config,
                           const backends::Backends& backends);

PromptMode qa_mode_for(EngineMode mode);

// Completion line shape: rationale-first only for cot with rationale
// generation enabled; answer-first otherwise.
PromptMode parse_mode_for(const EpisodeConfig& config);

}  // namespace stc::pipeline
