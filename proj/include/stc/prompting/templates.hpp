#pragma once

#include "stc/core/types.hpp"
#include "stc/prompting/examples.hpp"

namespace stc::prompting {

// Prompt grammar constants (see docs/prompts.md; golden renderings live in
// data/golden/). Generated answers are cut at the example separator.
inline constexpr const char* kExampleSeparator = "===";
inline constexpr const char* kContextMarker = "Context:";
inline constexpr const char* kQuestionMarker = "Question:";
inline constexpr const char* kOptionsMarker = "Options:";
inline constexpr const char* kAnswerMarker = "Answer:";
inline constexpr const char* kRationaleMarker = "Rationale:";
inline constexpr const char* kObjectsMarker = "Objects:";

// Builds the concept-selection prompt: n examples, then the test block with
// the global caption plus already-attended regional captions and the
// remaining labels as options, ending at the answer slot. Throws when no
// un-attended candidate remains.
PromptText build_attend_prompt(const std::vector<const PoolEntry*>& examples,
                               const SceneContext& scene,
                               const std::string& question);

// Builds the QA prompt for one ensemble member. Mode ipvr_qa interleaves
// accepted rationales from earlier rounds; pica uses captions + object tags
// only; cot orders the rationale before the answer and ends at the
// rationale slot. Choices are appended as an options line for the
// multiple-choice answer format. With include_rationales=false (the
// no-rationale ablation) no rationale line appears anywhere: examples render
// question/answer only and the prompt ends at the answer slot.
PromptText build_qa_prompt(const std::vector<const PoolEntry*>& examples,
                           const SceneContext& scene,
                           const std::vector<Rationale>& rationales_so_far,
                           const std::string& question, PromptMode mode,
                           const std::optional<std::vector<std::string>>& choices,
                           bool include_rationales = true);

}  // namespace stc::prompting
