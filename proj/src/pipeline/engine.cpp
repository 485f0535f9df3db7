#include "stc/pipeline/engine.hpp"

#include <algorithm>

#include "stc/core/answer.hpp"
#include "stc/core/geometry.hpp"
#include "stc/core/serialize.hpp"
#include "stc/prompting/templates.hpp"

namespace stc::pipeline {

using prompting::PoolEntry;

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Wraps backend/validation exceptions with the failing stage tag.
template <typename Fn>
auto at_stage(const char* stage, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace

PromptMode qa_mode_for(EngineMode mode) {
  switch (mode) {
    case EngineMode::ipvr: return PromptMode::ipvr_qa;
    case EngineMode::pica: return PromptMode::pica;
    case EngineMode::cot: return PromptMode::cot;
  }
  throw std::logic_error("unknown engine mode");
}

PromptMode parse_mode_for(const EpisodeConfig& config) {
  return (config.mode == EngineMode::cot && config.enable_rationale)
             ? PromptMode::cot
             : PromptMode::ipvr_qa;
}

backends::CompletionRequest make_qa_request(const std::string& prompt_text) {
  backends::CompletionRequest req;
  req.prompt = prompt_text;
  req.max_tokens = kQaMaxTokens;
  req.stop = {prompting::kExampleSeparator};
  req.want_logprobs = true;
  req.temperature = 0;
  return req;
}

backends::CompletionRequest make_score_request(const std::string& prompt_text,
                                               const std::string& candidate) {
  backends::CompletionRequest req;
  req.prompt = prompt_text + ' ' + candidate;
  req.max_tokens = kScoreMaxTokens;
  req.want_logprobs = true;
  req.temperature = 0;
  return req;
}

ParsedCompletion parse_qa_completion(const std::string& text, PromptMode mode) {
  ParsedCompletion out;
  auto line_end = [&](std::size_t from) {
    const std::size_t nl = text.find('\n', from);
    return nl == std::string::npos ? text.size() : nl;
  };

  if (mode == PromptMode::cot) {
    // "<rationale>\nAnswer: <answer>"
    const std::size_t r_end = line_end(0);
    out.rationale = trim(text.substr(0, r_end));
    const std::size_t marker = text.find(prompting::kAnswerMarker);
    if (marker != std::string::npos) {
      out.answer_begin = marker + std::string(prompting::kAnswerMarker).size();
      out.answer_end = line_end(out.answer_begin);
      out.answer = trim(text.substr(out.answer_begin,
                                    out.answer_end - out.answer_begin));
    }
    return out;
  }

  // "<answer>\nRationale: <rationale>"
  out.answer_begin = 0;
  out.answer_end = line_end(0);
  out.answer = trim(text.substr(0, out.answer_end));
  const std::size_t marker =
      text.find(prompting::kRationaleMarker, out.answer_end);
  if (marker != std::string::npos) {
    const std::size_t r_begin =
        marker + std::string(prompting::kRationaleMarker).size();
    out.rationale = trim(text.substr(r_begin, line_end(r_begin) - r_begin));
  }
  return out;
}

double answer_span_score(const Completion& completion,
                         const ParsedCompletion& parsed) {
  double sum = 0;
  int count = 0;
  std::size_t offset = 0;
  for (std::size_t i = 0;
       i < completion.tokens.size() && i < completion.token_logprobs.size();
       ++i) {
    if (offset >= parsed.answer_begin && offset < parsed.answer_end) {
      sum += completion.token_logprobs[i];
      ++count;
    }
    offset += completion.tokens[i].size();
  }
  if (count > 0) return sum / count;
  return completion.mean_logprob.value_or(0.0);
}

int pick_ensemble_winner(const std::vector<ScoredAnswer>& members) {
  int best = -1;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const ScoredAnswer& m = members[i];
    if (!m.valid) continue;
    if (best < 0 || m.score > members[best].score ||
        (m.score == members[best].score &&
         m.normalized_answer < members[best].normalized_answer))
      best = static_cast<int>(i);
  }
  return best;
}

SceneContext run_see(const std::string& image_ref,
                     const backends::Backends& backends) {
  return at_stage("see", [&] {
    SceneContext scene;
    scene.image_ref = image_ref;

    auto detection = backends.detector->detect(image_ref);
    scene.candidates = std::move(detection.objects);
    scene.image_width = detection.image_width;
    scene.image_height = detection.image_height;
    std::stable_sort(scene.candidates.begin(), scene.candidates.end(),
                     [](const ConceptCandidate& a, const ConceptCandidate& b) {
                       if (a.score != b.score) return a.score > b.score;
                       return a.label < b.label;
                     });

    backends::CaptionRequest req;
    req.image_ref = image_ref;
    req.num_candidates = 1;
    scene.global_caption = backends.captioner->caption(req).front();
    return scene;
  });
}

AttendResult attend_step(const SceneContext& scene,
                         const std::vector<const PoolEntry*>& examples,
                         const std::string& question,
                         const backends::Backends& backends) {
  return at_stage("attend", [&] {
    const auto remaining = scene.remaining_labels();
    if (remaining.empty())
      throw StageError("attend", "no un-attended candidates remain");

    PromptText prompt = prompting::build_attend_prompt(examples, scene, question);

    std::string best_label;
    double best_score = 0;
    bool have_best = false;
    for (const auto& label : remaining) {
      const Completion scored =
          backends.completer->complete(make_score_request(prompt.text, label));
      const double score = scored.total_logprob.value_or(0.0);
      if (!have_best || score > best_score) {
        have_best = true;
        best_score = score;
        best_label = label;
      } else if (score == best_score) {
        // Tie: prefer the higher detection score, then the smaller label.
        auto detection_score = [&](const std::string& l) {
          double best_det = -1;
          for (const auto& c : scene.candidates)
            if (c.label == l) best_det = std::max(best_det, c.score);
          return best_det;
        };
        const double current = detection_score(best_label);
        const double challenger = detection_score(label);
        if (challenger > current ||
            (challenger == current && label < best_label))
          best_label = label;
      }
    }

    for (const auto& c : scene.candidates) {
      if (c.label == best_label)
        return AttendResult{c, std::move(prompt)};
    }
    throw StageError("attend", "selected label has no candidate");
  });
}

std::string describe_step(SceneContext& scene, const ConceptCandidate& target,
                          const std::string& question,
                          const EpisodeConfig& config,
                          const backends::Backends& backends) {
  return at_stage("describe", [&] {
    const bool found =
        std::any_of(scene.candidates.begin(), scene.candidates.end(),
                    [&](const ConceptCandidate& c) { return c == target; });
    if (!found)
      throw StageError("describe", "concept is not one of the scene candidates");

    backends::CaptionRequest req;
    req.image_ref = scene.image_ref;
    req.region = expand_bbox(target.bbox, config.bbox_expand, scene.image_width,
                             scene.image_height);
    req.guidance = question;
    req.num_candidates = config.caption_candidates;
    const auto candidates = backends.captioner->caption(req);

    int best = 0;
    if (candidates.size() > 1) {
      const auto question_embedding = backends.embedder->embed_text(question);
      double best_sim = -2;
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        const double sim = backends::cosine_similarity(
            backends.embedder->embed_text(candidates[i]).values,
            question_embedding.values);
        if (sim > best_sim) {
          best_sim = sim;
          best = static_cast<int>(i);
        }
      }
    }
    scene.attended.emplace_back(target, candidates[best]);
    return candidates[best];
  });
}

PredictResult predict_step(
    const SceneContext& scene,
    const std::vector<std::vector<const PoolEntry*>>& example_lists,
    const std::vector<Rationale>& rationales_so_far, const Sample& sample,
    const EpisodeConfig& config, const backends::Backends& backends) {
  return at_stage("predict", [&] {
    if (static_cast<int>(example_lists.size()) != config.ensemble_size)
      throw StageError("predict", "example list count does not match k");

    const PromptMode mode = qa_mode_for(config.mode);
    const PromptMode parse_mode = parse_mode_for(config);
    std::optional<std::vector<std::string>> choices;
    if (config.answer_format == AnswerFormat::multiple_choice)
      choices = sample.choices;

    PredictResult result;
    std::vector<ScoredAnswer> scored;
    for (const auto& examples : example_lists) {
      PromptText prompt = prompting::build_qa_prompt(
          examples, scene, rationales_so_far, sample.question, mode, choices,
          config.enable_rationale);
      Completion completion =
          backends.completer->complete(make_qa_request(prompt.text));
      const ParsedCompletion parsed =
          parse_qa_completion(completion.text, parse_mode);

      ScoredAnswer member;
      member.valid = !parsed.answer.empty();
      if (member.valid) {
        member.score = answer_span_score(completion, parsed);
        member.normalized_answer = normalize_answer(parsed.answer);
      }
      scored.push_back(std::move(member));
      result.prompts.push_back(std::move(prompt));
      result.ensemble.push_back(std::move(completion));
    }

    result.winner_index = pick_ensemble_winner(scored);
    if (result.winner_index < 0)
      throw StageError("predict", "all ensemble completions were unparseable");

    const ParsedCompletion winner = parse_qa_completion(
        result.ensemble[result.winner_index].text, parse_mode);
    result.answer =
        make_answer(winner.answer, scored[result.winner_index].score);
    return result;
  });
}

std::optional<Rationale> confirm_step(const std::string& image_ref,
                                      const Completion& selected,
                                      PromptMode qa_mode,
                                      const EpisodeConfig& config,
                                      const backends::Backends& backends) {
  return at_stage("confirm", [&] {
    const ParsedCompletion parsed = parse_qa_completion(selected.text, qa_mode);
    if (parsed.rationale.empty()) return std::optional<Rationale>{};

    Rationale rationale;
    rationale.text = parsed.rationale;
    rationale.image_similarity =
        backends.similarity->cross_modal_similarity(image_ref, parsed.rationale);
    rationale.accepted = !config.enable_verify ||
                         rationale.image_similarity >= config.accept_threshold;
    return std::optional<Rationale>{rationale};
  });
}

ReasoningTrace run_episode(const Sample& sample,
                           const prompting::ExamplePool& pool,
                           const EpisodeConfig& config,
                           const backends::Backends& backends) {
  config.validate();
  backends.require_all();

  ReasoningTrace trace;
  trace.sample_id = sample.id;
  trace.config = config;
  trace.config_digest = config_digest(config);

  try {
    SceneContext scene = run_see(sample.image_ref, backends);

    const auto query_embedding =
        at_stage("see", [&] {
          return backends.embedder->embed_text(prompting::query_embedding_text(
              sample.question, scene.global_caption));
        });

    const auto index_lists = prompting::select_in_context(
        query_embedding.values, pool, config.example_count, config.ensemble_size);
    std::vector<std::vector<const PoolEntry*>> example_lists;
    for (const auto& indices : index_lists) {
      std::vector<const PoolEntry*> list;
      for (int i : indices) list.push_back(&pool.entries()[i]);
      example_lists.push_back(std::move(list));
    }

    std::vector<Rationale> accepted_rationales;
    std::optional<AnswerPrediction> previous_answer;

    for (int round = 1; round <= config.max_rounds; ++round) {
      RoundRecord record;
      record.round_index = round;

      // Attend + describe: one new concept per round until exhausted. The
      // attend prompt reuses the first partition list.
      bool attend_issued = false;
      if (config.enable_attend && !scene.remaining_labels().empty()) {
        AttendResult attended =
            attend_step(scene, example_lists.front(), sample.question, backends);
        record.regional_caption = describe_step(scene, attended.selected,
                                                sample.question, config, backends);
        record.attended_concept = std::move(attended.selected);
        record.prompts.push_back(std::move(attended.prompt));
        attend_issued = true;
      }

      PredictResult predicted =
          predict_step(scene, example_lists, accepted_rationales, sample,
                       config, backends);
      record.ensemble = std::move(predicted.ensemble);
      record.answer = predicted.answer;
      for (auto& p : predicted.prompts) record.prompts.push_back(std::move(p));

      if (config.enable_rationale) {
        record.rationale = confirm_step(
            sample.image_ref, record.ensemble[predicted.winner_index],
            parse_mode_for(config), config, backends);
        if (record.rationale && record.rationale->accepted)
          accepted_rationales.push_back(*record.rationale);
      }

      record.llm_queries_this_round = config.ensemble_size + (attend_issued ? 1 : 0);
      trace.total_llm_queries += record.llm_queries_this_round;
      trace.rounds.push_back(std::move(record));

      if (previous_answer && answers_equal(predicted.answer, *previous_answer)) {
        trace.converged = true;
        break;
      }
      previous_answer = predicted.answer;
    }

    if (!trace.rounds.empty()) trace.final_answer = trace.rounds.back().answer;
  } catch (const StageError& e) {
    trace.failure_stage = e.stage();
    if (!trace.rounds.empty()) trace.final_answer = trace.rounds.back().answer;
  } catch (const backends::BackendUnreachable&) {
    trace.failure_stage = "backend";
    if (!trace.rounds.empty()) trace.final_answer = trace.rounds.back().answer;
  }
  return trace;
}

}  // namespace stc::pipeline
