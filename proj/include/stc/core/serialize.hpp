#pragma once

#include <json.hpp>

#include "stc/core/types.hpp"

namespace stc {

std::string to_string(EngineMode mode);
std::string to_string(AnswerFormat format);
std::string to_string(PromptMode mode);
EngineMode engine_mode_from_string(const std::string& s);
AnswerFormat answer_format_from_string(const std::string& s);
PromptMode prompt_mode_from_string(const std::string& s);

// Config JSON uses the CLI flag vocabulary: n, k, miter, thre, bbox_expand,
// mode, answer_format, enable_attend, enable_rationale, enable_verify,
// caption_candidates.
nlohmann::json config_to_json(const EpisodeConfig& config);
EpisodeConfig config_from_json(const nlohmann::json& j);

// Stable content hash of the canonical config serialization; recorded in
// every trace so traces are self-describing and replayable.
std::string config_digest(const EpisodeConfig& config);

nlohmann::json bbox_to_json(const BoundingBox& box);
BoundingBox bbox_from_json(const nlohmann::json& j);
nlohmann::json concept_to_json(const ConceptCandidate& c);
ConceptCandidate concept_from_json(const nlohmann::json& j);
nlohmann::json completion_to_json(const Completion& c);
Completion completion_from_json(const nlohmann::json& j);

nlohmann::json trace_to_json(const ReasoningTrace& trace);

// Parses and validates every ReasoningTrace invariant (round/query
// accounting, convergence soundness, digest match, answer normalization).
// Throws std::runtime_error naming the violated invariant.
ReasoningTrace trace_from_json(const nlohmann::json& j);

// Validation used both after an episode and on deserialization.
void validate_trace(const ReasoningTrace& trace);

}  // namespace stc
