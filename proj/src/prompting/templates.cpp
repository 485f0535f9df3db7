#include "stc/prompting/templates.hpp"

#include <stdexcept>

namespace stc::prompting {

namespace {

constexpr const char* kAttendHeader =
    "Please select the object from the options that is most related to the "
    "question.";
constexpr const char* kQaHeader =
    "Please answer the question according to the context.";

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// "Context: <global caption> <regional caption>*" for the test block.
std::string scene_context_line(const SceneContext& scene) {
  std::string line = std::string(kContextMarker) + ' ' + scene.global_caption;
  for (const auto& entry : scene.attended) {
    line += ' ';
    line += entry.second;
  }
  return line;
}

void append_example_ids(PromptText& prompt,
                        const std::vector<const PoolEntry*>& examples) {
  for (const auto* e : examples) prompt.example_ids.push_back(e->id);
}

}  // namespace

PromptText build_attend_prompt(const std::vector<const PoolEntry*>& examples,
                               const SceneContext& scene,
                               const std::string& question) {
  const auto remaining = scene.remaining_labels();
  if (remaining.empty())
    throw std::invalid_argument("attend prompt: no un-attended candidates remain");

  std::string text = kAttendHeader;
  text += '\n';
  for (const auto* entry : examples) {
    const InContextExample& ex = entry->example;
    text += kExampleSeparator;
    text += '\n';
    text += std::string(kContextMarker) + ' ' + join(ex.context_captions, " ") + '\n';
    text += std::string(kQuestionMarker) + ' ' + ex.question + '\n';
    text += std::string(kOptionsMarker) + ' ' + join(ex.candidate_labels, ", ") + '\n';
    text += std::string(kAnswerMarker) + ' ' + ex.most_related_label + '\n';
  }
  text += kExampleSeparator;
  text += '\n';
  text += scene_context_line(scene) + '\n';
  text += std::string(kQuestionMarker) + ' ' + question + '\n';
  text += std::string(kOptionsMarker) + ' ' + join(remaining, ", ") + '\n';
  text += kAnswerMarker;

  PromptText prompt{std::move(text), PromptMode::ipvr_attend, {}};
  append_example_ids(prompt, examples);
  return prompt;
}

PromptText build_qa_prompt(const std::vector<const PoolEntry*>& examples,
                           const SceneContext& scene,
                           const std::vector<Rationale>& rationales_so_far,
                           const std::string& question, PromptMode mode,
                           const std::optional<std::vector<std::string>>& choices,
                           bool include_rationales) {
  if (mode != PromptMode::ipvr_qa && mode != PromptMode::pica &&
      mode != PromptMode::cot)
    throw std::invalid_argument("build_qa_prompt: mode must be a QA mode");

  const bool wants_rationale =
      include_rationales &&
      (mode == PromptMode::ipvr_qa || mode == PromptMode::cot);
  std::string text = kQaHeader;
  text += '\n';

  for (const auto* entry : examples) {
    const InContextExample& ex = entry->example;
    if (wants_rationale && !ex.rationale)
      throw std::invalid_argument("example '" + entry->id +
                                  "' lacks the rationale required by this mode");
    text += kExampleSeparator;
    text += '\n';
    text += std::string(kContextMarker) + ' ' + join(ex.context_captions, " ");
    if (mode == PromptMode::pica)
      text += std::string(" ") + kObjectsMarker + ' ' + join(ex.candidate_labels, ", ");
    text += '\n';
    text += std::string(kQuestionMarker) + ' ' + ex.question + '\n';
    if (!wants_rationale) {
      text += std::string(kAnswerMarker) + ' ' + ex.answer + '\n';
    } else if (mode == PromptMode::cot) {
      text += std::string(kRationaleMarker) + ' ' + *ex.rationale + '\n';
      text += std::string(kAnswerMarker) + ' ' + ex.answer + '\n';
    } else {
      text += std::string(kAnswerMarker) + ' ' + ex.answer + '\n';
      text += std::string(kRationaleMarker) + ' ' + *ex.rationale + '\n';
    }
  }

  text += kExampleSeparator;
  text += '\n';
  text += scene_context_line(scene);
  if (mode == PromptMode::pica) {
    std::vector<std::string> tags;
    for (const auto& c : scene.candidates) {
      bool seen = false;
      for (const auto& t : tags) seen = seen || t == c.label;
      if (!seen) tags.push_back(c.label);
    }
    text += std::string(" ") + kObjectsMarker + ' ' + join(tags, ", ");
  }
  text += '\n';
  if (wants_rationale) {
    for (const auto& r : rationales_so_far) {
      if (!r.accepted) continue;
      text += std::string(kRationaleMarker) + ' ' + r.text + '\n';
    }
  }
  text += std::string(kQuestionMarker) + ' ' + question + '\n';
  if (choices && !choices->empty())
    text += std::string(kOptionsMarker) + ' ' + join(*choices, ", ") + '\n';
  text += (wants_rationale && mode == PromptMode::cot) ? kRationaleMarker
                                                       : kAnswerMarker;

  PromptText prompt{std::move(text), mode, {}};
  append_example_ids(prompt, examples);
  return prompt;
}

}  // namespace stc::prompting
