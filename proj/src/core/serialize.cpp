#include "stc/core/serialize.hpp"

#include <stdexcept>

#include "stc/backends/digest.hpp"
#include "stc/core/answer.hpp"

namespace stc {

using nlohmann::json;

std::string to_string(EngineMode mode) {
  switch (mode) {
    case EngineMode::ipvr: return "ipvr";
    case EngineMode::pica: return "pica";
    case EngineMode::cot: return "cot";
  }
  throw std::logic_error("unknown engine mode");
}

std::string to_string(AnswerFormat format) {
  return format == AnswerFormat::direct ? "direct" : "multiple_choice";
}

std::string to_string(PromptMode mode) {
  switch (mode) {
    case PromptMode::ipvr_attend: return "ipvr_attend";
    case PromptMode::ipvr_qa: return "ipvr_qa";
    case PromptMode::pica: return "pica";
    case PromptMode::cot: return "cot";
  }
  throw std::logic_error("unknown prompt mode");
}

EngineMode engine_mode_from_string(const std::string& s) {
  if (s == "ipvr") return EngineMode::ipvr;
  if (s == "pica") return EngineMode::pica;
  if (s == "cot") return EngineMode::cot;
  throw std::invalid_argument("unknown mode '" + s + "' (expected ipvr|pica|cot)");
}

AnswerFormat answer_format_from_string(const std::string& s) {
  if (s == "direct") return AnswerFormat::direct;
  if (s == "multiple_choice") return AnswerFormat::multiple_choice;
  throw std::invalid_argument("unknown answer_format '" + s + "'");
}

PromptMode prompt_mode_from_string(const std::string& s) {
  if (s == "ipvr_attend") return PromptMode::ipvr_attend;
  if (s == "ipvr_qa") return PromptMode::ipvr_qa;
  if (s == "pica") return PromptMode::pica;
  if (s == "cot") return PromptMode::cot;
  throw std::invalid_argument("unknown prompt mode '" + s + "'");
}

json config_to_json(const EpisodeConfig& c) {
  return json{{"n", c.example_count},
              {"k", c.ensemble_size},
              {"miter", c.max_rounds},
              {"thre", c.accept_threshold},
              {"bbox_expand", c.bbox_expand},
              {"mode", to_string(c.mode)},
              {"answer_format", to_string(c.answer_format)},
              {"enable_attend", c.enable_attend},
              {"enable_rationale", c.enable_rationale},
              {"enable_verify", c.enable_verify},
              {"caption_candidates", c.caption_candidates}};
}

EpisodeConfig config_from_json(const json& j) {
  EpisodeConfig c;
  c.example_count = j.value("n", c.example_count);
  c.ensemble_size = j.value("k", c.ensemble_size);
  c.max_rounds = j.value("miter", c.max_rounds);
  c.accept_threshold = j.value("thre", c.accept_threshold);
  c.bbox_expand = j.value("bbox_expand", c.bbox_expand);
  if (j.contains("mode")) c.mode = engine_mode_from_string(j["mode"]);
  if (j.contains("answer_format"))
    c.answer_format = answer_format_from_string(j["answer_format"]);
  c.enable_attend = j.value("enable_attend", c.enable_attend);
  c.enable_rationale = j.value("enable_rationale", c.enable_rationale);
  c.enable_verify = j.value("enable_verify", c.enable_verify);
  c.caption_candidates = j.value("caption_candidates", c.caption_candidates);
  c.validate();
  return c;
}

std::string config_digest(const EpisodeConfig& config) {
  return backends::request_digest("config", config_to_json(config));
}

json bbox_to_json(const BoundingBox& b) {
  return json{{"x_min", b.x_min},
              {"y_min", b.y_min},
              {"x_max", b.x_max},
              {"y_max", b.y_max}};
}

BoundingBox bbox_from_json(const json& j) {
  BoundingBox b{j.at("x_min").get<double>(), j.at("y_min").get<double>(),
                j.at("x_max").get<double>(), j.at("y_max").get<double>()};
  if (!b.valid()) throw std::runtime_error("trace: degenerate bounding box");
  return b;
}

json concept_to_json(const ConceptCandidate& c) {
  return json{{"label", c.label}, {"bbox", bbox_to_json(c.bbox)}, {"score", c.score}};
}

ConceptCandidate concept_from_json(const json& j) {
  ConceptCandidate c{j.at("label").get<std::string>(),
                     bbox_from_json(j.at("bbox")), j.at("score").get<double>()};
  if (c.label.empty() || c.score < 0 || c.score > 1)
    throw std::runtime_error("trace: invalid concept candidate");
  return c;
}

json completion_to_json(const Completion& c) {
  json j{{"text", c.text},
         {"tokens", c.tokens},
         {"token_logprobs", c.token_logprobs}};
  j["mean_logprob"] = c.mean_logprob ? json(*c.mean_logprob) : json(nullptr);
  j["total_logprob"] = c.total_logprob ? json(*c.total_logprob) : json(nullptr);
  return j;
}

Completion completion_from_json(const json& j) {
  Completion c;
  c.text = j.at("text").get<std::string>();
  c.tokens = j.at("tokens").get<std::vector<std::string>>();
  c.token_logprobs = j.at("token_logprobs").get<std::vector<double>>();
  if (!j.at("mean_logprob").is_null())
    c.mean_logprob = j["mean_logprob"].get<double>();
  if (!j.at("total_logprob").is_null())
    c.total_logprob = j["total_logprob"].get<double>();
  return c;
}

namespace {

json prompt_to_json(const PromptText& p) {
  return json{{"text", p.text},
              {"mode", to_string(p.mode)},
              {"example_ids", p.example_ids}};
}

PromptText prompt_from_json(const json& j) {
  return PromptText{j.at("text").get<std::string>(),
                    prompt_mode_from_string(j.at("mode")),
                    j.at("example_ids").get<std::vector<std::string>>()};
}

json answer_to_json(const AnswerPrediction& a) {
  return json{{"raw_text", a.raw_text},
              {"normalized_text", a.normalized_text},
              {"score", a.score}};
}

AnswerPrediction answer_from_json(const json& j) {
  return AnswerPrediction{j.at("raw_text").get<std::string>(),
                          j.at("normalized_text").get<std::string>(),
                          j.at("score").get<double>()};
}

json rationale_to_json(const Rationale& r) {
  return json{{"text", r.text},
              {"image_similarity", r.image_similarity},
              {"accepted", r.accepted}};
}

Rationale rationale_from_json(const json& j) {
  return Rationale{j.at("text").get<std::string>(),
                   j.at("image_similarity").get<double>(),
                   j.at("accepted").get<bool>()};
}

json round_to_json(const RoundRecord& r) {
  json j{{"round_index", r.round_index},
         {"llm_queries_this_round", r.llm_queries_this_round},
         {"answer", answer_to_json(r.answer)}};
  j["attended_concept"] =
      r.attended_concept ? concept_to_json(*r.attended_concept) : json(nullptr);
  j["regional_caption"] =
      r.regional_caption ? json(*r.regional_caption) : json(nullptr);
  j["prompts"] = json::array();
  for (const auto& p : r.prompts) j["prompts"].push_back(prompt_to_json(p));
  j["ensemble"] = json::array();
  for (const auto& c : r.ensemble) j["ensemble"].push_back(completion_to_json(c));
  j["rationale"] = r.rationale ? rationale_to_json(*r.rationale) : json(nullptr);
  return j;
}

RoundRecord round_from_json(const json& j) {
  RoundRecord r;
  r.round_index = j.at("round_index").get<int>();
  if (!j.at("attended_concept").is_null())
    r.attended_concept = concept_from_json(j["attended_concept"]);
  if (!j.at("regional_caption").is_null())
    r.regional_caption = j["regional_caption"].get<std::string>();
  for (const auto& p : j.at("prompts")) r.prompts.push_back(prompt_from_json(p));
  for (const auto& c : j.at("ensemble"))
    r.ensemble.push_back(completion_from_json(c));
  r.answer = answer_from_json(j.at("answer"));
  if (!j.at("rationale").is_null())
    r.rationale = rationale_from_json(j["rationale"]);
  r.llm_queries_this_round = j.at("llm_queries_this_round").get<int>();
  return r;
}

}  // namespace

json trace_to_json(const ReasoningTrace& t) {
  json j{{"sample_id", t.sample_id},
         {"config_digest", t.config_digest},
         {"config", config_to_json(t.config)},
         {"converged", t.converged},
         {"total_llm_queries", t.total_llm_queries},
         {"final_answer", answer_to_json(t.final_answer)}};
  j["rounds"] = json::array();
  for (const auto& r : t.rounds) j["rounds"].push_back(round_to_json(r));
  j["failure_stage"] = t.failure_stage ? json(*t.failure_stage) : json(nullptr);
  return j;
}

ReasoningTrace trace_from_json(const json& j) {
  ReasoningTrace t;
  t.sample_id = j.at("sample_id").get<std::string>();
  t.config_digest = j.at("config_digest").get<std::string>();
  t.config = config_from_json(j.at("config"));
  for (const auto& r : j.at("rounds")) t.rounds.push_back(round_from_json(r));
  t.final_answer = answer_from_json(j.at("final_answer"));
  t.converged = j.at("converged").get<bool>();
  t.total_llm_queries = j.at("total_llm_queries").get<int>();
  if (j.contains("failure_stage") && !j["failure_stage"].is_null())
    t.failure_stage = j["failure_stage"].get<std::string>();
  validate_trace(t);
  return t;
}

void validate_trace(const ReasoningTrace& t) {
  auto fail = [&](const std::string& what) {
    throw std::runtime_error("invalid trace for sample '" + t.sample_id +
                             "': " + what);
  };
  if (t.config_digest != config_digest(t.config))
    fail("config_digest does not match config");
  if (static_cast<int>(t.rounds.size()) > t.config.max_rounds)
    fail("more rounds than miter");

  int total = 0;
  std::vector<std::string> attended_labels;
  for (std::size_t i = 0; i < t.rounds.size(); ++i) {
    const RoundRecord& r = t.rounds[i];
    if (r.round_index != static_cast<int>(i) + 1) fail("round_index not sequential");
    const int expected_queries =
        t.config.ensemble_size + (r.attended_concept ? 1 : 0);
    if (r.llm_queries_this_round != expected_queries)
      fail("round query count does not match k + attend");
    if (static_cast<int>(r.ensemble.size()) != t.config.ensemble_size)
      fail("ensemble size does not match k");
    if (r.answer.normalized_text != normalize_answer(r.answer.raw_text))
      fail("answer not normalized");
    if (r.attended_concept) {
      for (const auto& prev : attended_labels)
        if (prev == r.attended_concept->label) fail("concept attended twice");
      attended_labels.push_back(r.attended_concept->label);
      if (!r.regional_caption) fail("attended concept without regional caption");
    }
    if (r.rationale) {
      if (t.config.enable_verify) {
        const bool should_accept =
            r.rationale->image_similarity >= t.config.accept_threshold;
        if (r.rationale->accepted != should_accept)
          fail("rationale acceptance inconsistent with threshold");
      } else if (!r.rationale->accepted) {
        fail("rationale rejected while verification is disabled");
      }
    }
    total += r.llm_queries_this_round;
  }
  if (total != t.total_llm_queries) fail("total_llm_queries does not match sum");

  if (t.converged) {
    if (t.failure_stage) fail("converged trace cannot carry a failure stage");
    if (t.rounds.size() < 2) fail("converged with fewer than two rounds");
    const auto& last = t.rounds[t.rounds.size() - 1].answer;
    const auto& prev = t.rounds[t.rounds.size() - 2].answer;
    if (!answers_equal(last, prev))
      fail("converged but last two answers differ");
  }
  if (!t.rounds.empty() && !t.failure_stage) {
    if (!answers_equal(t.final_answer, t.rounds.back().answer))
      fail("final_answer does not match last round");
  }
  if (t.final_answer.normalized_text != normalize_answer(t.final_answer.raw_text))
    fail("final answer not normalized");
}

}  // namespace stc
