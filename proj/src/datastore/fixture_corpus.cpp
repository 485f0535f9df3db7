#include "stc/datastore/fixture_corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "stc/backends/digest.hpp"
#include "stc/core/answer.hpp"
#include "stc/core/geometry.hpp"
#include "stc/core/serialize.hpp"
#include "stc/pipeline/engine.hpp"
#include "stc/prompting/templates.hpp"

namespace stc::datastore {

using backends::FixtureRecord;
using nlohmann::json;
using prompting::PoolEntry;

namespace {

// Log-probability assigned to structural tokens ("\nRationale:",
// "\nAnswer:") in scripted completions; never part of an answer span.
constexpr double kStructureLogprob = -0.01;

class CorpusBuilder {
 public:
  explicit CorpusBuilder(const json& spec) : spec_(spec) {}

  FixtureCorpus build();

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error("fixture corpus: " + where_ + ": " + what);
  }

  const std::vector<double>& embedding_of(const std::string& text) const {
    auto it = embeddings_.find(text);
    if (it == embeddings_.end())
      fail("no scripted embedding for text \"" + text + "\"");
    return it->second;
  }

  void add_record(std::vector<FixtureRecord>& records, const std::string& kind,
                  const json& request, const json& response) {
    const std::string digest = backends::request_digest(kind, request);
    for (const auto& r : records) {
      if (r.request_digest == digest) {
        if (r.response != response)
          fail("conflicting scripted responses for one request (" + kind + ")");
        return;
      }
    }
    records.push_back(FixtureRecord{digest, kind, response});
  }

  void add_embed_record(std::vector<FixtureRecord>& records,
                        const std::string& text) {
    add_record(records, backends::kKindEmbed, backends::embed_request_json(text),
               json{{"vector", embedding_of(text)}});
  }

  // Scripted completion for one QA ensemble member. Tokens: one per answer
  // word (each with its scripted logprob), structural markers at
  // kStructureLogprob, the rationale as a single token.
  Completion scripted_qa_completion(const json& member, PromptMode mode) const;

  Sample parse_sample(const json& j) const;
  FixtureScenario build_scenario(const json& j);

  const json& spec_;
  std::string where_;
  int dim_ = 0;
  int vocabulary_size_ = 0;
  std::map<std::string, std::vector<double>> embeddings_;
  std::vector<PoolEntry> pool_;
};

Sample CorpusBuilder::parse_sample(const json& j) const {
  Sample s;
  s.id = j.at("id").get<std::string>();
  s.image_ref = j.at("image_ref").get<std::string>();
  s.question = j.at("question").get<std::string>();
  s.direct_answers = j.at("direct_answers").get<std::vector<std::string>>();
  if (j.contains("choices") && !j["choices"].is_null()) {
    s.choices = j["choices"].get<std::vector<std::string>>();
    if (j.contains("correct_choice_index") && !j["correct_choice_index"].is_null())
      s.correct_choice_index = j["correct_choice_index"].get<int>();
  }
  if (j.contains("reference_rationales") && !j["reference_rationales"].is_null())
    s.reference_rationales =
        j["reference_rationales"].get<std::vector<std::string>>();
  return s;
}

Completion CorpusBuilder::scripted_qa_completion(const json& member,
                                                 PromptMode mode) const {
  const std::string answer = member.value("answer", std::string{});
  std::string rationale;
  if (member.contains("rationale") && !member["rationale"].is_null())
    rationale = member["rationale"].get<std::string>();

  if (answer.find('\n') != std::string::npos)
    fail("scripted answer must not contain newlines");
  if (rationale.find('\n') != std::string::npos ||
      rationale.find(prompting::kAnswerMarker) != std::string::npos)
    fail("scripted rationale must not contain newlines or the answer marker");

  std::vector<std::string> answer_words;
  {
    std::string word;
    for (char c : answer) {
      if (c == ' ') {
        if (!word.empty()) answer_words.push_back(word);
        word.clear();
      } else {
        word.push_back(c);
      }
    }
    if (!word.empty()) answer_words.push_back(word);
  }
  std::vector<double> answer_logprobs;
  if (member.contains("answer_logprobs"))
    answer_logprobs = member["answer_logprobs"].get<std::vector<double>>();
  if (answer_words.size() != answer_logprobs.size())
    fail("answer_logprobs size must match the answer word count");
  const double rationale_logprob = member.value("rationale_logprob", -0.5);

  std::string text;
  std::vector<std::string> tokens;
  std::vector<double> logprobs;
  auto push = [&](const std::string& token, double lp) {
    text += token;
    tokens.push_back(token);
    logprobs.push_back(lp);
  };

  if (mode == PromptMode::cot) {
    if (!rationale.empty()) push(' ' + rationale, rationale_logprob);
    push(std::string("\n") + prompting::kAnswerMarker, kStructureLogprob);
    for (std::size_t i = 0; i < answer_words.size(); ++i)
      push(' ' + answer_words[i], answer_logprobs[i]);
  } else {
    for (std::size_t i = 0; i < answer_words.size(); ++i)
      push(' ' + answer_words[i], answer_logprobs[i]);
    if (!rationale.empty()) {
      push(std::string("\n") + prompting::kRationaleMarker, kStructureLogprob);
      push(' ' + rationale, rationale_logprob);
    } else if (answer_words.empty()) {
      push("\n", kStructureLogprob);
    }
  }
  return backends::finalize_completion(text, tokens, logprobs, true);
}

FixtureScenario CorpusBuilder::build_scenario(const json& j) {
  FixtureScenario scenario;
  scenario.id = j.at("id").get<std::string>();
  where_ = "scenario '" + scenario.id + "'";
  scenario.note = j.value("note", std::string{});
  scenario.sample = parse_sample(j.at("sample"));
  scenario.config = config_from_json(j.at("config"));
  const EpisodeConfig& config = scenario.config;

  const json& expected_spec = j.at("expected");
  const int expected_rounds = expected_spec.at("rounds").get<int>();
  const bool expected_converged = expected_spec.at("converged").get<bool>();

  const json& rounds_spec = j.at("rounds");
  if (static_cast<int>(rounds_spec.size()) != expected_rounds)
    fail("rounds script length must equal expected.rounds");

  // --- Scene -----------------------------------------------------------
  const auto image_size = j.at("image_size").get<std::vector<double>>();
  if (image_size.size() != 2) fail("image_size must be [w,h]");
  SceneContext scene;
  scene.image_ref = scenario.sample.image_ref;
  scene.image_width = image_size[0];
  scene.image_height = image_size[1];
  scene.global_caption = j.at("global_caption").get<std::string>();

  json objects_json = json::array();
  for (const auto& obj : j.at("objects")) {
    ConceptCandidate c;
    c.label = obj.at("label").get<std::string>();
    const auto b = obj.at("bbox").get<std::vector<double>>();
    if (b.size() != 4) fail("object bbox must be [x0,y0,x1,y1]");
    c.bbox = BoundingBox{b[0], b[1], b[2], b[3]};
    c.score = obj.at("score").get<double>();
    scene.candidates.push_back(c);
    objects_json.push_back(json{{"label", c.label},
                                {"bbox", {b[0], b[1], b[2], b[3]}},
                                {"score", c.score}});
  }
  add_record(scenario.records, backends::kKindDetect,
             backends::detect_request_json(scene.image_ref),
             json{{"objects", objects_json},
                  {"image_size", {scene.image_width, scene.image_height}},
                  {"vocabulary_size", vocabulary_size_}});

  // Same candidate order the see stage produces.
  std::stable_sort(scene.candidates.begin(), scene.candidates.end(),
                   [](const ConceptCandidate& a, const ConceptCandidate& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return a.label < b.label;
                   });

  backends::CaptionRequest global_caption_req;
  global_caption_req.image_ref = scene.image_ref;
  global_caption_req.num_candidates = 1;
  add_record(scenario.records, backends::kKindCaption,
             backends::caption_request_json(global_caption_req),
             json{{"captions", {scene.global_caption}}});

  // --- Example selection -------------------------------------------------
  const std::string query_text = prompting::query_embedding_text(
      scenario.sample.question, scene.global_caption);
  add_embed_record(scenario.records, query_text);

  prompting::ExamplePool pool(pool_);
  const auto index_lists = prompting::select_in_context(
      embedding_of(query_text), pool, config.example_count, config.ensemble_size);
  std::vector<std::vector<const PoolEntry*>> example_lists;
  for (const auto& indices : index_lists) {
    std::vector<const PoolEntry*> list;
    for (int i : indices) list.push_back(&pool_[static_cast<std::size_t>(i)]);
    example_lists.push_back(std::move(list));
  }

  // --- Rounds ------------------------------------------------------------
  ReasoningTrace& trace = scenario.expected;
  trace.sample_id = scenario.sample.id;
  trace.config = config;
  trace.config_digest = config_digest(config);

  const PromptMode qa_mode = pipeline::qa_mode_for(config.mode);
  const PromptMode parse_mode = pipeline::parse_mode_for(config);
  std::optional<std::vector<std::string>> choices;
  if (config.answer_format == AnswerFormat::multiple_choice)
    choices = scenario.sample.choices;

  std::vector<Rationale> accepted_rationales;
  std::string previous_answer;

  for (int round = 1; round <= expected_rounds; ++round) {
    const json& round_spec = rounds_spec[static_cast<std::size_t>(round - 1)];
    RoundRecord record;
    record.round_index = round;

    const bool should_attend =
        config.enable_attend && !scene.remaining_labels().empty();
    if (should_attend != round_spec.contains("attend"))
      fail("round " + std::to_string(round) +
           (should_attend ? ": attend script missing"
                          : ": attend script present but attend is not issued"));

    if (should_attend) {
      const json& attend_spec = round_spec.at("attend");
      const auto remaining = scene.remaining_labels();
      PromptText attend_prompt = prompting::build_attend_prompt(
          example_lists.front(), scene, scenario.sample.question);

      const json& scores = attend_spec.at("scores");
      if (scores.size() != remaining.size())
        fail("round " + std::to_string(round) +
             ": attend scores must cover exactly the remaining labels");
      std::string best_label;
      double best_score = 0;
      for (const auto& label : remaining) {
        if (!scores.contains(label))
          fail("round " + std::to_string(round) +
               ": no attend score for remaining label '" + label + "'");
        const double score = scores[label].get<double>();
        const auto req = pipeline::make_score_request(attend_prompt.text, label);
        add_record(scenario.records, backends::kKindComplete,
                   backends::completion_request_json(req),
                   json{{"text", " " + label},
                        {"tokens", {" " + label}},
                        {"token_logprobs", {score}}});
        if (best_label.empty() || score > best_score) {
          best_label = label;
          best_score = score;
        } else if (score == best_score) {
          auto det = [&](const std::string& l) {
            double best_det = -1;
            for (const auto& c : scene.candidates)
              if (c.label == l) best_det = std::max(best_det, c.score);
            return best_det;
          };
          if (det(label) > det(best_label) ||
              (det(label) == det(best_label) && label < best_label))
            best_label = label;
        }
      }
      if (attend_spec.contains("expect_label") &&
          attend_spec["expect_label"].get<std::string>() != best_label)
        fail("round " + std::to_string(round) + ": attend argmax is '" +
             best_label + "', not the declared expect_label");

      const auto chosen =
          std::find_if(scene.candidates.begin(), scene.candidates.end(),
                       [&](const ConceptCandidate& c) { return c.label == best_label; });

      // Regional captions for the expanded, clamped box.
      const auto caption_texts =
          round_spec.at("captions").get<std::vector<std::string>>();
      if (static_cast<int>(caption_texts.size()) != config.caption_candidates)
        fail("round " + std::to_string(round) +
             ": captions script must have caption_candidates entries");
      backends::CaptionRequest region_req;
      region_req.image_ref = scene.image_ref;
      region_req.region = expand_bbox(chosen->bbox, config.bbox_expand,
                                      scene.image_width, scene.image_height);
      region_req.guidance = scenario.sample.question;
      region_req.num_candidates = config.caption_candidates;
      add_record(scenario.records, backends::kKindCaption,
                 backends::caption_request_json(region_req),
                 json{{"captions", caption_texts}});

      int caption_pick = 0;
      if (caption_texts.size() > 1) {
        add_embed_record(scenario.records, scenario.sample.question);
        const auto& question_embedding = embedding_of(scenario.sample.question);
        double best_sim = -2;
        for (std::size_t i = 0; i < caption_texts.size(); ++i) {
          add_embed_record(scenario.records, caption_texts[i]);
          const double sim = backends::cosine_similarity(
              embedding_of(caption_texts[i]), question_embedding);
          if (sim > best_sim) {
            best_sim = sim;
            caption_pick = static_cast<int>(i);
          }
        }
      }
      if (round_spec.contains("caption_pick") &&
          round_spec["caption_pick"].get<int>() != caption_pick)
        fail("round " + std::to_string(round) +
             ": caption rerank argmax does not match the declared caption_pick");

      scene.attended.emplace_back(*chosen,
                                  caption_texts[static_cast<std::size_t>(caption_pick)]);
      record.attended_concept = *chosen;
      record.regional_caption = caption_texts[static_cast<std::size_t>(caption_pick)];
      record.prompts.push_back(std::move(attend_prompt));
    }

    // --- predict ---------------------------------------------------------
    const json& ensemble_spec = round_spec.at("ensemble");
    if (static_cast<int>(ensemble_spec.size()) != config.ensemble_size)
      fail("round " + std::to_string(round) + ": ensemble script must have k members");

    std::vector<pipeline::ScoredAnswer> scored;
    for (int member = 0; member < config.ensemble_size; ++member) {
      PromptText prompt = prompting::build_qa_prompt(
          example_lists[static_cast<std::size_t>(member)], scene,
          accepted_rationales, scenario.sample.question, qa_mode, choices,
          config.enable_rationale);
      const Completion completion = scripted_qa_completion(
          ensemble_spec[static_cast<std::size_t>(member)], parse_mode);
      const auto req = pipeline::make_qa_request(prompt.text);
      add_record(scenario.records, backends::kKindComplete,
                 backends::completion_request_json(req),
                 json{{"text", completion.text},
                      {"tokens", completion.tokens},
                      {"token_logprobs", completion.token_logprobs}});

      const auto parsed =
          pipeline::parse_qa_completion(completion.text, parse_mode);
      pipeline::ScoredAnswer sa;
      sa.valid = !parsed.answer.empty();
      if (sa.valid) {
        sa.score = pipeline::answer_span_score(completion, parsed);
        sa.normalized_answer = normalize_answer(parsed.answer);
      }
      scored.push_back(std::move(sa));
      record.prompts.push_back(std::move(prompt));
      record.ensemble.push_back(completion);
    }

    const int winner = pipeline::pick_ensemble_winner(scored);
    if (winner < 0) fail("round " + std::to_string(round) + ": no parseable member");
    if (round_spec.contains("pick") && round_spec["pick"].get<int>() != winner)
      fail("round " + std::to_string(round) + ": ensemble argmax is member " +
           std::to_string(winner) + ", not the declared pick");

    const auto winner_parsed = pipeline::parse_qa_completion(
        record.ensemble[static_cast<std::size_t>(winner)].text, parse_mode);
    record.answer = make_answer(winner_parsed.answer,
                                scored[static_cast<std::size_t>(winner)].score);

    // --- confirm ---------------------------------------------------------
    if (config.enable_rationale && !winner_parsed.rationale.empty()) {
      if (!round_spec.contains("similarity"))
        fail("round " + std::to_string(round) +
             ": rationale present but no scripted similarity");
      Rationale rationale;
      rationale.text = winner_parsed.rationale;
      rationale.image_similarity = round_spec["similarity"].get<double>();
      rationale.accepted = !config.enable_verify ||
                           rationale.image_similarity >= config.accept_threshold;
      add_record(scenario.records, backends::kKindSimilarity,
                 backends::similarity_request_json(scene.image_ref, rationale.text),
                 json{{"score", rationale.image_similarity}});
      if (round_spec.contains("accepted") &&
          round_spec["accepted"].get<bool>() != rationale.accepted)
        fail("round " + std::to_string(round) +
             ": declared accepted flag contradicts threshold rule");
      if (rationale.accepted) accepted_rationales.push_back(rationale);
      record.rationale = rationale;
    } else if (round_spec.contains("similarity")) {
      fail("round " + std::to_string(round) +
           ": scripted similarity but no rationale is produced");
    }

    record.llm_queries_this_round = config.ensemble_size + (should_attend ? 1 : 0);
    trace.total_llm_queries += record.llm_queries_this_round;

    // Convergence bookkeeping must match the declared round count.
    const std::string normalized = record.answer.normalized_text;
    const bool converges_now = round >= 2 && normalized == previous_answer;
    if (converges_now && round != expected_rounds)
      fail("answers converge at round " + std::to_string(round) +
           " but the script declares " + std::to_string(expected_rounds));
    previous_answer = normalized;
    trace.rounds.push_back(std::move(record));
    if (round == expected_rounds) trace.converged = converges_now;
  }

  if (trace.converged != expected_converged)
    fail(std::string("expected.converged is ") +
         (expected_converged ? "true" : "false") + " but the script says otherwise");
  if (!trace.converged && expected_rounds != config.max_rounds)
    fail("a non-converged scenario must run exactly miter rounds");
  trace.final_answer = trace.rounds.back().answer;

  if (expected_spec.contains("final_answer") &&
      normalize_answer(expected_spec["final_answer"].get<std::string>()) !=
          trace.final_answer.normalized_text)
    fail("declared final_answer does not match the script");
  if (expected_spec.contains("total_llm_queries") &&
      expected_spec["total_llm_queries"].get<int>() != trace.total_llm_queries)
    fail("declared total_llm_queries does not match the script");

  validate_trace(trace);
  return scenario;
}

FixtureCorpus CorpusBuilder::build() {
  where_ = "spec";
  dim_ = spec_.at("embedding_dim").get<int>();
  if (dim_ < 1) fail("embedding_dim must be >= 1");
  vocabulary_size_ = spec_.value("vocabulary_size", 1595);

  for (const auto& [text, vec] : spec_.at("embeddings").items()) {
    const auto values = vec.get<std::vector<double>>();
    if (static_cast<int>(values.size()) != dim_)
      fail("embedding for \"" + text + "\" has the wrong dimension");
    embeddings_.emplace(text, values);
  }

  FixtureCorpus corpus;
  for (const auto& entry_json : spec_.at("pool")) {
    PoolEntry e;
    e.id = entry_json.at("id").get<std::string>();
    e.example.question = entry_json.at("question").get<std::string>();
    e.example.context_captions =
        entry_json.at("context_captions").get<std::vector<std::string>>();
    e.example.candidate_labels =
        entry_json.at("candidate_labels").get<std::vector<std::string>>();
    e.example.most_related_label =
        entry_json.at("most_related_label").get<std::string>();
    e.example.answer = entry_json.at("answer").get<std::string>();
    if (entry_json.contains("rationale") && !entry_json["rationale"].is_null())
      e.example.rationale = entry_json["rationale"].get<std::string>();
    const std::string text = prompting::pool_embedding_text(e.example);
    e.embedding = embedding_of(text);
    add_embed_record(corpus.shared_records, text);
    pool_.push_back(std::move(e));
  }
  corpus.pool = pool_;

  std::set<std::string> ids;
  for (const auto& scenario_json : spec_.at("scenarios")) {
    corpus.scenarios.push_back(build_scenario(scenario_json));
    if (!ids.insert(corpus.scenarios.back().id).second)
      throw std::runtime_error("fixture corpus: duplicate scenario id " +
                               corpus.scenarios.back().id);
  }
  where_ = "spec";
  if (corpus.scenarios.empty()) fail("corpus has no scenarios");

  // Scenarios must agree wherever their requests coincide.
  (void)corpus.merged_records();
  return corpus;
}

}  // namespace

std::vector<FixtureRecord> FixtureCorpus::records_for(
    const FixtureScenario& scenario) const {
  std::vector<FixtureRecord> all = shared_records;
  all.insert(all.end(), scenario.records.begin(), scenario.records.end());
  return all;
}

std::vector<FixtureRecord> FixtureCorpus::merged_records() const {
  std::map<std::string, const FixtureRecord*> by_digest;
  std::vector<FixtureRecord> merged;
  auto add = [&](const FixtureRecord& r, const std::string& origin) {
    auto [it, inserted] = by_digest.emplace(r.request_digest, &r);
    if (!inserted) {
      if (it->second->response != r.response)
        throw std::runtime_error(
            "fixture corpus: scenarios script conflicting responses for digest " +
            r.request_digest + " (" + origin + ")");
      return;
    }
    merged.push_back(r);
  };
  for (const auto& r : shared_records) add(r, "shared");
  for (const auto& s : scenarios)
    for (const auto& r : s.records) add(r, s.id);
  return merged;
}

std::vector<Sample> FixtureCorpus::samples() const {
  std::vector<Sample> out;
  for (const auto& s : scenarios) out.push_back(s.sample);
  return out;
}

const FixtureScenario& FixtureCorpus::scenario(const std::string& id) const {
  for (const auto& s : scenarios)
    if (s.id == id) return s;
  throw std::runtime_error("fixture corpus: unknown scenario " + id);
}

FixtureCorpus build_fixture_corpus(const std::filesystem::path& spec_path) {
  std::ifstream in(spec_path);
  if (!in)
    throw std::runtime_error("cannot open corpus spec " + spec_path.string());
  json spec = json::parse(in, nullptr, false);
  if (spec.is_discarded())
    throw std::runtime_error("malformed corpus spec " + spec_path.string());
  return CorpusBuilder(spec).build();
}

}  // namespace stc::datastore
