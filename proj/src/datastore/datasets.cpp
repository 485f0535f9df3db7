#include "stc/datastore/datasets.hpp"

#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

namespace stc::datastore {

using nlohmann::json;

namespace {

json parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded())
    throw std::runtime_error("malformed JSON in " + path.string());
  return j;
}

std::string id_to_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw std::runtime_error("id field must be a string or integer");
}

const json& require(const json& record, const char* field, std::size_t index) {
  auto it = record.find(field);
  if (it == record.end() || it->is_null())
    throw std::runtime_error("record " + std::to_string(index) +
                             " is missing field '" + field + "'");
  return *it;
}

}  // namespace

std::vector<Sample> load_aokvqa(const std::filesystem::path& path,
                                const std::string& image_prefix) {
  const json root = parse_file(path);
  if (!root.is_array())
    throw std::runtime_error("A-OKVQA file must be a JSON array: " + path.string());

  std::vector<Sample> samples;
  for (std::size_t i = 0; i < root.size(); ++i) {
    const json& record = root[i];
    Sample s;
    s.id = id_to_string(require(record, "question_id", i));
    s.image_ref = image_prefix + id_to_string(require(record, "image_id", i)) + ".jpg";
    s.question = require(record, "question", i).get<std::string>();
    s.direct_answers =
        require(record, "direct_answers", i).get<std::vector<std::string>>();
    if (record.contains("choices") && !record["choices"].is_null()) {
      s.choices = record["choices"].get<std::vector<std::string>>();
      if (record.contains("correct_choice_idx") &&
          !record["correct_choice_idx"].is_null()) {
        const int idx = record["correct_choice_idx"].get<int>();
        if (idx < 0 || idx >= static_cast<int>(s.choices->size()))
          throw std::runtime_error("record " + std::to_string(i) +
                                   ": correct_choice_idx out of range");
        s.correct_choice_index = idx;
      }
    }
    if (record.contains("rationales") && !record["rationales"].is_null())
      s.reference_rationales =
          record["rationales"].get<std::vector<std::string>>();
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<Sample> load_okvqa(const std::filesystem::path& questions_path,
                               const std::filesystem::path& annotations_path,
                               const std::string& image_prefix) {
  const json questions_root = parse_file(questions_path);
  const json annotations_root = parse_file(annotations_path);
  if (!questions_root.contains("questions"))
    throw std::runtime_error("questions file lacks a 'questions' array");
  if (!annotations_root.contains("annotations"))
    throw std::runtime_error("annotations file lacks an 'annotations' array");

  std::map<std::string, std::vector<std::string>> answers_by_id;
  for (std::size_t i = 0; i < annotations_root["annotations"].size(); ++i) {
    const json& ann = annotations_root["annotations"][i];
    const std::string qid = id_to_string(require(ann, "question_id", i));
    if (answers_by_id.count(qid))
      throw std::runtime_error("duplicate question_id in annotations: " + qid);
    std::vector<std::string> answers;
    for (const auto& a : require(ann, "answers", i))
      answers.push_back(a.at("answer").get<std::string>());
    answers_by_id.emplace(qid, std::move(answers));
  }

  std::vector<Sample> samples;
  std::set<std::string> seen;
  const json& questions = questions_root["questions"];
  for (std::size_t i = 0; i < questions.size(); ++i) {
    const json& q = questions[i];
    Sample s;
    s.id = id_to_string(require(q, "question_id", i));
    if (!seen.insert(s.id).second)
      throw std::runtime_error("duplicate question_id in questions: " + s.id);
    s.image_ref = image_prefix + id_to_string(require(q, "image_id", i)) + ".jpg";
    s.question = require(q, "question", i).get<std::string>();
    auto it = answers_by_id.find(s.id);
    if (it == answers_by_id.end())
      throw std::runtime_error("question " + s.id + " has no annotation");
    s.direct_answers = it->second;
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace stc::datastore
